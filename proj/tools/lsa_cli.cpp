// lsa: command-line front end for the sliding-alignment re-id toolkit.
//
//   lsa gen        synthetic query/gallery sets
//   lsa dist       pairwise distance matrix
//   lsa eval       CMC / mAP report, optionally re-ranked
//   lsa sweep      window or stripe-count sweep to CSV
//   lsa loss-check analytic vs finite-difference gradients
//
// Exit codes: 0 success, 1 validation or usage error, 2 I/O error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lsa/lsa.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::size_t threads = 1;
};

// Fills options that were not given on the command line from a JSON object
// whose keys are long option names without the leading dashes.
void apply_config(CLI::App& sub, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw lsa::io_error("cannot open config '" + path + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw lsa::io_error("malformed config '" + path + "': " + e.what());
  }
  if (!cfg.is_object()) throw lsa::validation_error("config must be a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    auto* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw lsa::validation_error("config: unknown option '" + key + "' for " + sub.get_name());
    if (opt->count() > 0) continue;
    auto as_text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(as_text(v));
    } else {
      opt->add_result(as_text(value));
    }
    opt->run_callback();
  }
}

void add_common(CLI::App& sub, Common& c, bool threads) {
  sub.add_option("--config", c.config, "JSON file with option defaults; flags take precedence");
  if (threads) sub.add_option("--threads", c.threads, "Worker threads for distance computation")->check(CLI::PositiveNumber);
}

template <typename T>
const T& required(const std::optional<T>& v, const char* flag) {
  if (!v) throw lsa::validation_error(std::string("missing required option ") + flag);
  return *v;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw lsa::io_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
  if (!out) throw lsa::io_error("write failed for '" + path.string() + "'");
}

// Loads query and gallery sets and brings them to the requested stripe count.
struct Pair {
  lsa::EmbeddingSet query;
  lsa::EmbeddingSet gallery;
  lsa::AlignmentConfig cfg;
};

Pair load_pair(const std::string& q, const std::string& g, std::optional<std::size_t> k,
               std::optional<std::size_t> window) {
  Pair p{lsa::load_embeddings(q), lsa::load_embeddings(g), {}};
  lsa::require_conformant(p.query, p.gallery);
  if (k && *k != p.query.k()) {
    p.query = lsa::pool_stripes(p.query, *k);
    p.gallery = lsa::pool_stripes(p.gallery, *k);
  }
  p.cfg = lsa::AlignmentConfig::for_stripes(p.query.k());
  if (window) p.cfg.window = *window;
  p.cfg.validate();
  return p;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  Common common;
  std::size_t ids = 20, per_id = 4, k = 8, d = 16, max_shift = 2;
  double shift_prob = 0.5, occl_prob = 0.0, noise = 0.1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

int run_gen(const GenArgs& a) {
  lsa::SynthSpec spec;
  spec.n_ids = a.ids;
  spec.per_id = a.per_id;
  spec.k = a.k;
  spec.d_local = a.d;
  spec.d_global = a.d;
  spec.shift_prob = a.shift_prob;
  spec.max_shift = a.max_shift;
  spec.occl_prob = a.occl_prob;
  spec.noise_sigma = a.noise;
  spec.seed = required(a.seed, "--seed");
  const fs::path out = required(a.out, "--out");
  const auto data = lsa::generate(spec);
  lsa::save_embeddings(data.query, out / "q");
  lsa::save_embeddings(data.gallery, out / "g");
  std::cout << "wrote " << data.query.size() << " queries to " << (out / "q").string() << " and "
            << data.gallery.size() << " gallery records to " << (out / "g").string() << "\n";
  return 0;
}

struct DistArgs {
  Common common;
  std::optional<std::string> query, gallery, out;
  std::string metric = "combined";
  std::optional<std::size_t> k, window;
};

int run_dist(const DistArgs& a) {
  const auto p = load_pair(required(a.query, "--query"), required(a.gallery, "--gallery"), a.k, a.window);
  const auto metric = lsa::parse_metric(a.metric);
  const auto dist = lsa::pairwise_matrix(p.query, p.gallery, p.cfg, metric, a.common.threads);

  const fs::path out = required(a.out, "--out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::vector<unsigned char> bytes;
  bytes.reserve(dist.values.size() * 8);
  for (double v : dist.values.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int s = 0; s < 64; s += 8) bytes.push_back(static_cast<unsigned char>((bits >> s) & 0xffu));
  }
  lsa::detail::write_file(out, bytes);
  write_json(out.string() + ".json", {{"n_query", dist.n_query()},
                                      {"n_gallery", dist.n_gallery()},
                                      {"metric", lsa::to_string(metric)}});
  return 0;
}

struct EvalArgs {
  Common common;
  std::optional<std::string> query, gallery, out;
  std::string metric = "combined";
  std::optional<std::size_t> k, window;
  bool rerank = false;
  std::size_t k1 = 20, k2 = 6;
  double lambda = 0.3;
};

int run_eval(const EvalArgs& a) {
  const auto p = load_pair(required(a.query, "--query"), required(a.gallery, "--gallery"), a.k, a.window);
  const auto metric = lsa::parse_metric(a.metric);
  auto dist = lsa::pairwise_matrix(p.query, p.gallery, p.cfg, metric, a.common.threads);
  if (a.rerank) {
    const auto qq = lsa::pairwise_matrix(p.query, p.query, p.cfg, metric, a.common.threads);
    const auto gg = lsa::pairwise_matrix(p.gallery, p.gallery, p.cfg, metric, a.common.threads);
    dist = lsa::rerank(dist, qq, gg, {a.k1, a.k2, a.lambda});
  }
  const auto result = lsa::rank_queries(dist, p.query, p.gallery);
  const json report = {
      {"metric", lsa::to_string(dist.metric)},
      {"window", p.cfg.window},
      {"rank1", result.rank(1)},
      {"rank5", result.rank(5)},
      {"rank10", result.rank(10)},
      {"map", result.map},
      {"n_query", dist.n_query()},
      {"n_gallery", dist.n_gallery()},
  };
  write_json(required(a.out, "--out"), report);
  std::cout << std::fixed << std::setprecision(4) << "rank1=" << result.rank(1)
            << " rank5=" << result.rank(5) << " rank10=" << result.rank(10) << " mAP=" << result.map
            << "\n";
  return 0;
}

struct SweepArgs {
  Common common;
  std::optional<std::string> query, gallery, out;
  std::string param = "window";
  std::string metric = "lsa";
  std::vector<std::size_t> values;
};

int run_sweep(const SweepArgs& a) {
  if (a.values.empty()) throw lsa::validation_error("missing required option --values");
  const auto param = lsa::parse_sweep_param(a.param);
  const auto metric = lsa::parse_metric(a.metric);
  const auto p = load_pair(required(a.query, "--query"), required(a.gallery, "--gallery"), std::nullopt,
                           std::nullopt);
  const auto rows = lsa::sweep(param, a.values, p.query, p.gallery, p.cfg, metric, a.common.threads);
  const fs::path out = required(a.out, "--out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream csv(out);
  if (!csv) throw lsa::io_error("cannot write '" + out.string() + "'");
  lsa::write_sweep_csv(csv, rows);
  if (!csv) throw lsa::io_error("write failed for '" + out.string() + "'");
  lsa::write_sweep_csv(std::cout, rows);
  return 0;
}

struct LossCheckArgs {
  Common common;
  std::optional<std::uint64_t> seed;
  std::size_t seeds = 10;
  double tolerance = 1e-5;
};

int run_loss_check(const LossCheckArgs& a) {
  const auto rows = lsa::run_loss_check(required(a.seed, "--seed"), a.seeds, a.tolerance);
  std::cout << std::left << std::setw(18) << "loss" << std::setw(8) << "seed" << std::setw(14)
            << "rel_error" << "result\n";
  bool ok = true;
  for (const auto& r : rows) {
    ok &= r.pass();
    std::cout << std::setw(18) << r.loss << std::setw(8) << r.seed << std::setw(14) << std::scientific
              << std::setprecision(3) << r.rel_error << std::defaultfloat << (r.pass() ? "PASS" : "FAIL")
              << "\n";
  }
  for (const char* name : {"id_loss", "triplethard_loss", "center_loss"}) {
    double worst = 0.0;
    for (const auto& r : rows) {
      if (r.loss == name) worst = std::max(worst, r.rel_error);
    }
    std::cout << "max " << name << " rel_error " << std::scientific << std::setprecision(3) << worst
              << std::defaultfloat << "\n";
  }
  std::cout << (ok ? "loss-check: PASS" : "loss-check: FAIL") << " (tolerance " << a.tolerance << ")\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local sliding alignment toolkit for stripe-based person re-identification", "lsa"};
  app.set_version_flag("--version", std::string(LSA_VERSION));
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic misaligned query/gallery benchmark");
  add_common(*gen_cmd, gen.common, false);
  gen_cmd->add_option("--ids", gen.ids, "Identity count");
  gen_cmd->add_option("--per-id", gen.per_id, "Images per identity (first is the query)");
  gen_cmd->add_option("--k", gen.k, "Stripes per record");
  gen_cmd->add_option("--d", gen.d, "Stripe and global dimension");
  gen_cmd->add_option("--shift-prob", gen.shift_prob, "Probability of a cyclic stripe shift");
  gen_cmd->add_option("--max-shift", gen.max_shift, "Largest shift in stripes");
  gen_cmd->add_option("--occl-prob", gen.occl_prob, "Probability of a contiguous occlusion");
  gen_cmd->add_option("--noise", gen.noise, "Within-identity Gaussian sigma");
  gen_cmd->add_option("--seed", gen.seed, "RNG seed (required)");
  gen_cmd->add_option("--out", gen.out, "Output directory; receives q/ and g/");

  DistArgs dist;
  auto* dist_cmd = app.add_subcommand("dist", "Compute a query x gallery distance matrix");
  add_common(*dist_cmd, dist.common, true);
  dist_cmd->add_option("--query", dist.query, "Query set directory");
  dist_cmd->add_option("--gallery", dist.gallery, "Gallery set directory");
  dist_cmd->add_option("--metric", dist.metric, "global|lsa|hard|combined")
      ->check(CLI::IsMember({"global", "lsa", "hard", "combined"}));
  dist_cmd->add_option("--k", dist.k, "Stripe count (must divide the stored count)");
  dist_cmd->add_option("--window", dist.window, "Sliding window size W (default k/2)");
  dist_cmd->add_option("--out", dist.out, "Matrix path (float64 LE, row-major); sidecar at <out>.json");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Rank a query set against a gallery and report CMC/mAP");
  add_common(*eval_cmd, eval.common, true);
  eval_cmd->add_option("--query", eval.query, "Query set directory");
  eval_cmd->add_option("--gallery", eval.gallery, "Gallery set directory");
  eval_cmd->add_option("--metric", eval.metric, "global|lsa|hard|combined")
      ->check(CLI::IsMember({"global", "lsa", "hard", "combined"}));
  eval_cmd->add_option("--k", eval.k, "Stripe count (must divide the stored count)");
  eval_cmd->add_option("--window", eval.window, "Sliding window size W (default k/2)");
  eval_cmd->add_flag("--rerank", eval.rerank, "Apply k-reciprocal re-ranking");
  eval_cmd->add_option("--k1", eval.k1, "Re-ranking k1");
  eval_cmd->add_option("--k2", eval.k2, "Re-ranking k2");
  eval_cmd->add_option("--lambda", eval.lambda, "Weight of the original distance in re-ranking");
  eval_cmd->add_option("--out", eval.out, "Report JSON path");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate over a list of window sizes or stripe counts");
  add_common(*sweep_cmd, sweep.common, true);
  sweep_cmd->add_option("--query", sweep.query, "Query set directory");
  sweep_cmd->add_option("--gallery", sweep.gallery, "Gallery set directory");
  sweep_cmd->add_option("--param", sweep.param, "stripes|window")->check(CLI::IsMember({"stripes", "window"}));
  sweep_cmd->add_option("--values", sweep.values, "Comma-separated values")->delimiter(',');
  sweep_cmd->add_option("--metric", sweep.metric, "global|lsa|hard|combined")
      ->check(CLI::IsMember({"global", "lsa", "hard", "combined"}));
  sweep_cmd->add_option("--out", sweep.out, "CSV path");

  LossCheckArgs loss;
  auto* loss_cmd = app.add_subcommand("loss-check", "Check loss gradients against finite differences");
  add_common(*loss_cmd, loss.common, false);
  loss_cmd->add_option("--seed", loss.seed, "Base seed (required)");
  loss_cmd->add_option("--seeds", loss.seeds, "Seeds per loss")->check(CLI::PositiveNumber);
  loss_cmd->add_option("--tolerance", loss.tolerance, "Relative error threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e, std::cerr, std::cerr);
    return 1;
  }

  try {
    if (gen_cmd->parsed()) {
      apply_config(*gen_cmd, gen.common.config);
      return run_gen(gen);
    }
    if (dist_cmd->parsed()) {
      apply_config(*dist_cmd, dist.common.config);
      return run_dist(dist);
    }
    if (eval_cmd->parsed()) {
      apply_config(*eval_cmd, eval.common.config);
      return run_eval(eval);
    }
    if (sweep_cmd->parsed()) {
      apply_config(*sweep_cmd, sweep.common.config);
      return run_sweep(sweep);
    }
    if (loss_cmd->parsed()) {
      apply_config(*loss_cmd, loss.common.config);
      return run_loss_check(loss);
    }
  } catch (const lsa::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lsa::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << app.help();
  return 1;
}
