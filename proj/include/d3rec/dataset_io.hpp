#pragma once

// On-disk dataset format: manifest.json, one "user_index<TAB>item_index" file
// per split, and the dense item-category matrix as a binary blob.

#include "d3rec/dataset.hpp"

#include <json.hpp>

#include <bit>
#include <filesystem>
#include <fstream>
#include <optional>

namespace d3rec {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Dense matrix file: int64 rows, int64 cols, then rows*cols float64, row-major.
inline void write_dense(const std::filesystem::path& path, const Tensor2& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!out) throw DataError("short write to " + path.string());
}

inline Tensor2 read_dense(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::int64_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] < 0 || dims[1] < 0) throw DataError("bad dense header in " + path.string());
  Tensor2 m(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw DataError("truncated dense matrix " + path.string());
  return m;
}

struct StoredDataset {
  InteractionDataset dataset;
  std::optional<Tensor2> target_prefs;
};

inline void save_dataset(const std::filesystem::path& dir, const InteractionDataset& ds,
                         const std::optional<Tensor2>& target_prefs = std::nullopt) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "d3rec-dataset/1";
  manifest["n_users"] = ds.n_users();
  manifest["n_items"] = ds.n_items();
  manifest["n_categories"] = ds.n_categories();
  manifest["seed"] = ds.seed;
  manifest["user_ids"] = ds.user_ids;
  manifest["item_ids"] = ds.item_ids;
  manifest["category_names"] = ds.categories.category_names;
  nlohmann::json counts, files;
  for (Split s : {Split::train, Split::valid, Split::test, Split::unsplit}) {
    const std::size_t n = ds.count(mask_of(s));
    if (s == Split::unsplit && n == 0) continue;
    const std::string file = std::string(split_name(s)) + ".tsv";
    std::ofstream out(dir / file, std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / file).string());
    for (const auto& it : ds.interactions)
      if (it.split == s) out << it.user << '\t' << it.item << '\n';
    counts[split_name(s)] = n;
    files[split_name(s)] = file;
  }
  write_dense(dir / "categories.bin", ds.F());
  files["categories"] = "categories.bin";
  if (target_prefs) {
    write_dense(dir / "targets.bin", *target_prefs);
    files["targets"] = "targets.bin";
  }
  manifest["split_counts"] = counts;
  manifest["files"] = files;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
}

/// Inverse of save_dataset. Ingestion order is train, valid, test, so the
/// reconstructed timestamps keep each user's chronology.
inline StoredDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad dataset manifest: " + std::string(e.what()));
  }
  StoredDataset stored;
  InteractionDataset& ds = stored.dataset;
  try {
    ds.user_ids = manifest.at("user_ids").get<std::vector<std::string>>();
    ds.item_ids = manifest.at("item_ids").get<std::vector<std::string>>();
    ds.categories.category_names = manifest.at("category_names").get<std::vector<std::string>>();
    ds.seed = manifest.value("seed", std::uint64_t{0});
    const auto& files = manifest.at("files");
    ds.categories.F = read_dense(dir / files.at("categories").get<std::string>());
    if (ds.categories.F.rows() != ds.n_items() || ds.categories.F.cols() != ds.n_categories())
      throw DataError("category matrix shape disagrees with manifest");
    Index order = 0;
    for (Split s : {Split::train, Split::valid, Split::test, Split::unsplit}) {
      if (!files.contains(split_name(s))) continue;
      const auto path = dir / files.at(split_name(s)).get<std::string>();
      std::ifstream tsv(path);
      if (!tsv) throw DataError("cannot open " + path.string());
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(tsv, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        Index u = -1, i = -1;
        if (!(fields >> u >> i) || u < 0 || i < 0 || u >= ds.n_users() || i >= ds.n_items())
          throw ParseError(path.string(), lineno, "bad user/item index pair");
        ds.interactions.push_back(Interaction{u, i, order, order, s});
        ++order;
      }
    }
    if (files.contains("targets")) stored.target_prefs = read_dense(dir / files.at("targets").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad dataset manifest: " + std::string(e.what()));
  }
  canonicalize(ds);
  return stored;
}

}  // namespace d3rec
