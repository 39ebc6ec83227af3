#pragma once

// Embedding-set directory format:
//   manifest.json  {"n","k","d_local","d_global","dtype":"f32le","ids":[..],"cams":[..]}
//   local.bin      n*k*d_local little-endian float32, [record][stripe][coord]
//   global.bin     n*d_global  little-endian float32, [record][coord]

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lsa/core.hpp"

namespace lsa {

namespace detail {

inline void append_f32le(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  out.push_back(static_cast<unsigned char>(bits & 0xffu));
  out.push_back(static_cast<unsigned char>((bits >> 8) & 0xffu));
  out.push_back(static_cast<unsigned char>((bits >> 16) & 0xffu));
  out.push_back(static_cast<unsigned char>((bits >> 24) & 0xffu));
}

inline double read_f32le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return static_cast<double>(std::bit_cast<float>(bits));
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("write failed for '" + path.string() + "'");
}

inline std::size_t manifest_size(const nlohmann::json& m, const char* key) {
  if (!m.contains(key) || !m[key].is_number_integer() || m[key].get<std::int64_t>() < 0) {
    throw io_error(std::string("manifest: missing or invalid '") + key + "'");
  }
  return m[key].get<std::size_t>();
}

}  // namespace detail

// Accepts either the set directory or the manifest.json path inside it.
inline std::filesystem::path set_directory(const std::filesystem::path& p) {
  return p.filename() == "manifest.json" ? p.parent_path() : p;
}

inline void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  validate_set(set);
  const auto dir = set_directory(path);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory '" + dir.string() + "': " + ec.message());

  std::vector<unsigned char> local;
  std::vector<unsigned char> global;
  local.reserve(set.size() * set.k() * set.d_local() * 4);
  global.reserve(set.size() * set.d_global() * 4);
  for (const auto& rec : set) {
    for (double v : rec.stripe_feats.data()) detail::append_f32le(local, v);
    for (double v : rec.global_feat) detail::append_f32le(global, v);
  }

  nlohmann::json manifest = {
      {"n", set.size()},      {"k", set.k()},   {"d_local", set.d_local()},
      {"d_global", set.d_global()}, {"dtype", "f32le"}, {"ids", set.ids()},
      {"cams", set.cams()},
  };
  const std::string text = manifest.dump(2) + "\n";
  detail::write_file(dir / "manifest.json", {text.begin(), text.end()});
  detail::write_file(dir / "local.bin", local);
  detail::write_file(dir / "global.bin", global);
}

inline EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  const auto dir = set_directory(path);
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw io_error("missing manifest '" + manifest_path.string() + "'");
  }
  nlohmann::json m;
  try {
    std::ifstream in(manifest_path);
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }

  const auto dtype = m.value("dtype", std::string{});
  if (dtype != "f32le") throw io_error("unsupported dtype '" + dtype + "'");

  const auto n = detail::manifest_size(m, "n");
  const auto k = detail::manifest_size(m, "k");
  const auto d_local = detail::manifest_size(m, "d_local");
  const auto d_global = detail::manifest_size(m, "d_global");

  std::vector<std::int64_t> ids, cams;
  try {
    ids = m.at("ids").get<std::vector<std::int64_t>>();
    cams = m.at("cams").get<std::vector<std::int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("manifest: invalid label arrays: ") + e.what());
  }
  if (ids.size() != n || cams.size() != n) {
    throw size_mismatch("manifest: ids/cams length does not match n=" + std::to_string(n));
  }

  const auto local = detail::read_file(dir / "local.bin");
  const auto global = detail::read_file(dir / "global.bin");
  const std::size_t local_expected = n * k * d_local * 4;
  const std::size_t global_expected = n * d_global * 4;
  if (local.size() != local_expected) {
    throw size_mismatch("local.bin has " + std::to_string(local.size()) + " bytes, expected " +
                        std::to_string(local_expected));
  }
  if (global.size() != global_expected) {
    throw size_mismatch("global.bin has " + std::to_string(global.size()) + " bytes, expected " +
                        std::to_string(global_expected));
  }

  std::vector<EmbeddingRecord> records;
  records.reserve(n);
  const unsigned char* lp = local.data();
  const unsigned char* gp = global.data();
  for (std::size_t r = 0; r < n; ++r) {
    EmbeddingRecord rec;
    rec.id = ids[r];
    rec.cam = cams[r];
    rec.stripe_feats = Matrix(k, d_local);
    for (double& v : rec.stripe_feats.data()) {
      v = detail::read_f32le(lp);
      lp += 4;
    }
    rec.global_feat.resize(d_global);
    for (double& v : rec.global_feat) {
      v = detail::read_f32le(gp);
      gp += 4;
    }
    records.push_back(std::move(rec));
  }
  EmbeddingSet set(std::move(records), k, d_local, d_global);
  validate_set(set);
  return set;
}

}  // namespace lsa
