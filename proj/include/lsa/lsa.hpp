#pragma once

#include "lsa/core.hpp"
#include "lsa/random.hpp"
#include "lsa/io.hpp"
#include "lsa/alignment.hpp"
#include "lsa/losses.hpp"
#include "lsa/gradcheck.hpp"
#include "lsa/sampling.hpp"
#include "lsa/evaluation.hpp"
#include "lsa/synth.hpp"

#define LSA_VERSION "0.1.0"
