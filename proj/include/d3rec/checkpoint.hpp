#pragma once

// Model checkpoints: a JSON manifest plus a flat little-endian float64 blob
// holding every parameter in manifest order.

#include "d3rec/config.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace d3rec {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

inline constexpr const char* kCheckpointFormat = "d3rec-checkpoint/1";
inline constexpr const char* kCheckpointBlob = "params.bin";

struct Checkpoint {
  Denoiser model;
  TrainConfig train;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string model_hash;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string blob_hash(const std::vector<double>& flat) {
  return hex64(fnv1a64(flat.data(), flat.size() * sizeof(double)));
}

inline nlohmann::json checkpoint_manifest(const Denoiser& model, const TrainConfig& train, std::uint64_t seed, int epoch,
                                          const std::string& hash) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.params()) params.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}});
  return {{"format", kCheckpointFormat},
          {"architecture", to_json(model.config())},
          {"schedule", {{"steps", train.steps}, {"noise_scale", train.noise_scale}, {"noise_min", train.noise_min}, {"noise_max", train.noise_max}}},
          {"parameters", params},
          {"parameter_count", model.params().total_count()},
          {"train", to_json(train)},
          {"seed", seed},
          {"epoch", epoch},
          {"blob", kCheckpointBlob},
          {"model_hash", hash}};
}

/// Writes manifest.json and params.bin into `dir`. Returns the blob hash.
inline std::string save_checkpoint(const std::filesystem::path& dir, const Denoiser& model, const TrainConfig& train,
                                   std::uint64_t seed, int epoch = 0) {
  std::filesystem::create_directories(dir);
  const std::vector<double> flat = model.params().flatten();
  const std::string hash = blob_hash(flat);
  {
    std::ofstream out(dir / kCheckpointBlob, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / kCheckpointBlob).string());
    out.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
  out << checkpoint_manifest(model, train, seed, epoch, hash).dump(2) << '\n';
  return hash;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("no checkpoint manifest in " + dir.string());
  Checkpoint ck;
  try {
    const nlohmann::json m = nlohmann::json::parse(in);
    if (m.at("format").get<std::string>() != kCheckpointFormat)
      throw DataError("unsupported checkpoint format " + m.at("format").get<std::string>());
    const auto& a = m.at("architecture");
    DenoiserConfig mc;
    mc.n_items = a.at("n_items").get<Index>();
    mc.n_categories = a.at("n_categories").get<Index>();
    mc.hidden = a.at("hidden").get<Index>();
    mc.latent = a.at("latent").get<Index>();
    mc.step_embed_dim = a.at("step_embed_dim").get<Index>();
    mc.cond_embed_dim = a.at("cond_embed_dim").get<Index>();
    mc.dropout = a.at("dropout").get<double>();

    nlohmann::json train_json = m.at("train");
    train_json["steps"] = m.at("schedule").at("steps");
    train_json["noise_scale"] = m.at("schedule").at("noise_scale");
    train_json["noise_min"] = m.at("schedule").at("noise_min");
    train_json["noise_max"] = m.at("schedule").at("noise_max");
    ck.train = parse_config(nlohmann::json{{"train", train_json}}).train;
    ck.seed = m.at("seed").get<std::uint64_t>();
    ck.epoch = m.value("epoch", 0);

    const auto blob_path = dir / m.at("blob").get<std::string>();
    std::ifstream blob(blob_path, std::ios::binary | std::ios::ate);
    if (!blob) throw DataError("cannot open " + blob_path.string());
    const auto bytes = static_cast<std::size_t>(blob.tellg());
    if (bytes % sizeof(double) != 0) throw DataError("checkpoint blob size is not a multiple of 8");
    std::vector<double> flat(bytes / sizeof(double));
    blob.seekg(0);
    blob.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<Index>(flat.size()) != denoiser_parameter_count(mc))
      throw DataError("checkpoint blob holds " + std::to_string(flat.size()) + " values, architecture needs " +
                      std::to_string(denoiser_parameter_count(mc)));
    ck.model_hash = blob_hash(flat);
    if (m.contains("model_hash") && m.at("model_hash").get<std::string>() != ck.model_hash)
      throw DataError("checkpoint blob hash mismatch");
    ck.model = Denoiser(mc, flat);

    const auto& names = m.at("parameters");
    if (names.size() != ck.model.params().size()) throw DataError("checkpoint parameter list disagrees with architecture");
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto& p = ck.model.params()[k];
      const auto shape = names[k].at("shape").get<std::vector<Index>>();
      if (names[k].at("name").get<std::string>() != p.name || shape.size() != 2 || shape[0] != p.value.rows() ||
          shape[1] != p.value.cols())
        throw DataError("checkpoint parameter " + std::to_string(k) + " does not match " + p.name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint manifest: " + std::string(e.what()));
  }
  return ck;
}

}  // namespace d3rec
