#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lsa/core.hpp"
#include "lsa/random.hpp"

namespace lsa {

struct BatchSpec {
  std::size_t P = 8;
  std::size_t K_per_id = 4;
  std::uint64_t seed = 0;

  void validate() const {
    if (P < 2) throw validation_error("batch spec: P must be >= 2");
    if (K_per_id < 2) throw validation_error("batch spec: K must be >= 2");
  }
};

// P distinct identities chosen uniformly, K indices each. Identities with
// fewer than K records are drawn with replacement. Output is grouped by
// identity in selection order.
inline std::vector<std::size_t> sample_batch(const EmbeddingSet& set, const BatchSpec& spec) {
  spec.validate();
  std::map<std::int64_t, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < set.size(); ++i) by_id[set[i].id].push_back(i);
  if (by_id.size() < spec.P) {
    throw validation_error("sample_batch: set has " + std::to_string(by_id.size()) +
                           " identities, batch needs " + std::to_string(spec.P));
  }

  std::vector<const std::vector<std::size_t>*> groups;
  groups.reserve(by_id.size());
  for (const auto& [id, members] : by_id) groups.push_back(&members);

  Rng rng(spec.seed);
  // Partial Fisher-Yates: the first P slots become the selection.
  for (std::size_t i = 0; i < spec.P; ++i) {
    const auto j = i + rng.below(groups.size() - i);
    std::swap(groups[i], groups[j]);
  }

  std::vector<std::size_t> batch;
  batch.reserve(spec.P * spec.K_per_id);
  for (std::size_t g = 0; g < spec.P; ++g) {
    std::vector<std::size_t> members = *groups[g];
    if (members.size() >= spec.K_per_id) {
      for (std::size_t i = 0; i < spec.K_per_id; ++i) {
        const auto j = i + rng.below(members.size() - i);
        std::swap(members[i], members[j]);
        batch.push_back(members[i]);
      }
    } else {
      for (std::size_t i = 0; i < spec.K_per_id; ++i) batch.push_back(members[rng.below(members.size())]);
    }
  }
  return batch;
}

}  // namespace lsa
