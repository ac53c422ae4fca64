#pragma once

// Run configuration: one JSON document drives every CLI command. Missing keys
// take defaults, unknown keys are rejected with their full path.

#include "d3rec/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace d3rec {

struct DataConfig {
  /// Directory written by save_dataset; takes precedence over the raw files.
  std::string dataset_dir;
  std::string events;
  std::string categories;
  std::optional<double> rating_threshold;
  std::optional<double> rating_scale_max;
  Index k_core = 20;
  SplitOrder split_order = SplitOrder::chronological;
  double noise_ratio = 0.3;
};

struct SemiSyntheticConfig {
  double fraction = 0.3;
  double train_share = 0.8;
};

struct EvalConfig {
  Split split = Split::test;
  std::vector<double> sweep_taus = {0.25, 0.5, 1.0, 2.0, 4.0};
  Index sweep_k = 20;
};

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
  int threads = 8;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string output_dir = "out";
  std::string checkpoint;
  DataConfig data;
  SyntheticSpec synthetic;
  SemiSyntheticConfig semi_synthetic;
  DenoiserConfig model;
  TrainConfig train;
  bool select_by_validation = true;
  GuidanceDefaults guidance;
  EvalConfig eval;
  ServeConfig serve;
  std::vector<std::string> warnings;

  /// Propagates the single seed to every random consumer.
  void set_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
    synthetic.seed = s;
  }

  void validate() const {
    DenoiserConfig shape = model;  // item/category counts come from the data
    shape.n_items = std::max<Index>(shape.n_items, 1);
    shape.n_categories = std::max<Index>(shape.n_categories, 1);
    shape.validate();
    train.validate();
    validate_spec();
    if (!(train.steps >= 1)) throw ConfigError("train.steps must be >= 1");
    if (guidance.t_prime < 0 || guidance.t_prime >= train.steps) throw ConfigError("guidance.t_prime must lie in [0, train.steps)");
    if (!(guidance.tau > 0.0)) throw ConfigError("guidance.tau must be positive");
    if (guidance.ks.empty()) throw ConfigError("guidance.ks must be nonempty");
    for (Index k : guidance.ks)
      if (k < 1) throw ConfigError("guidance.ks entries must be >= 1");
    for (double t : eval.sweep_taus)
      if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("eval.sweep_taus entries must be positive and finite");
    if (eval.sweep_k < 1) throw ConfigError("eval.sweep_k must be >= 1");
    if (!(data.noise_ratio >= 0.0 && data.noise_ratio <= 1.0)) throw ConfigError("data.noise_ratio must lie in [0, 1]");
    if (data.k_core < 0) throw ConfigError("data.k_core must be >= 0");
    if (!(semi_synthetic.fraction > 0.0 && semi_synthetic.fraction <= 1.0))
      throw ConfigError("semi_synthetic.fraction must lie in (0, 1]");
    if (!(semi_synthetic.train_share > 0.0 && semi_synthetic.train_share < 1.0))
      throw ConfigError("semi_synthetic.train_share must lie in (0, 1)");
    if (serve.port < 0 || serve.port > 65535) throw ConfigError("serve.port must lie in [0, 65535]");
    if (serve.threads < 1) throw ConfigError("serve.threads must be >= 1");
  }

 private:
  void validate_spec() const {
    try {
      d3rec::validate(synthetic);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("synthetic: ") + e.what());
    }
  }
};

namespace detail {

/// Reads typed fields out of one JSON object and remembers which keys were
/// seen so leftovers can be reported.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label("") + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw type_error(key, "a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw type_error(key, "an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0) out = v.get<T>();
        else throw type_error(key, "a nonnegative integer");
      } else {
        out = v.get<T>();
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw type_error(key, "a number");
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw type_error(key, "a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
      if (v.is_null()) out.reset();
      else if (v.is_number()) out = v.get<double>();
      else throw type_error(key, "a number or null");
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) throw type_error(key, "an array of numbers");
      out.clear();
      for (const auto& e : v) {
        if (!e.is_number()) throw type_error(key, "an array of numbers");
        out.push_back(e.get<double>());
      }
    } else if constexpr (std::is_same_v<T, std::vector<Index>>) {
      if (!v.is_array()) throw type_error(key, "an array of integers");
      out.clear();
      for (const auto& e : v) {
        if (!e.is_number_integer()) throw type_error(key, "an array of integers");
        out.push_back(e.get<Index>());
      }
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  ObjectReader child(const std::string& key) {
    seen_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    return ObjectReader(j_.contains(key) ? j_.at(key) : empty, label(key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.contains(key)) throw ConfigError("unknown config key " + label(key));
  }

  std::string label(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  ConfigError type_error(const std::string& key, const std::string& what) const {
    return ConfigError("config key " + label(key) + " must be " + what);
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Split parse_split(const std::string& s, const std::string& key) {
  if (s == "test") return Split::test;
  if (s == "valid") return Split::valid;
  throw ConfigError("config key " + key + " must be \"test\" or \"valid\"");
}

inline SplitOrder parse_split_order(const std::string& s) {
  if (s == "chronological") return SplitOrder::chronological;
  if (s == "shuffled") return SplitOrder::shuffled;
  throw ConfigError("config key data.split_order must be \"chronological\" or \"shuffled\"");
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig cfg;
  detail::ObjectReader root(j, "");
  std::uint64_t seed = cfg.seed;
  root.get("seed", seed);
  cfg.set_seed(seed);
  root.get("output_dir", cfg.output_dir);
  root.get("checkpoint", cfg.checkpoint);

  {
    auto r = root.child("data");
    r.get("dataset_dir", cfg.data.dataset_dir);
    r.get("events", cfg.data.events);
    r.get("categories", cfg.data.categories);
    r.get("rating_threshold", cfg.data.rating_threshold);
    r.get("rating_scale_max", cfg.data.rating_scale_max);
    r.get("k_core", cfg.data.k_core);
    std::string order = "chronological";
    r.get("split_order", order);
    cfg.data.split_order = detail::parse_split_order(order);
    r.get("noise_ratio", cfg.data.noise_ratio);
    r.finish();
  }
  {
    auto r = root.child("synthetic");
    r.get("n_users", cfg.synthetic.n_users);
    r.get("n_items", cfg.synthetic.n_items);
    r.get("n_categories", cfg.synthetic.n_categories);
    r.get("concentration", cfg.synthetic.concentration);
    r.get("interactions_per_user", cfg.synthetic.interactions_per_user);
    r.finish();
  }
  {
    auto r = root.child("semi_synthetic");
    r.get("fraction", cfg.semi_synthetic.fraction);
    r.get("train_share", cfg.semi_synthetic.train_share);
    r.finish();
  }
  {
    auto r = root.child("model");
    r.get("hidden", cfg.model.hidden);
    r.get("latent", cfg.model.latent);
    r.get("step_embed_dim", cfg.model.step_embed_dim);
    r.get("cond_embed_dim", cfg.model.cond_embed_dim);
    r.get("dropout", cfg.model.dropout);
    r.finish();
  }
  {
    auto r = root.child("train");
    TrainConfig& t = cfg.train;
    r.get("epochs", t.epochs);
    r.get("batch_size", t.batch_size);
    r.get("learning_rate", t.learning_rate);
    r.get("weight_decay", t.weight_decay);
    r.get("lambda", t.lambda);
    r.get("delta", t.delta);
    r.get("gamma_min", t.gamma_min);
    r.get("gamma_max", t.gamma_max);
    r.get("reweight", t.reweight);
    r.get("cond_dropout", t.cond_dropout);
    r.get("steps", t.steps);
    r.get("noise_scale", t.noise_scale);
    r.get("noise_min", t.noise_min);
    r.get("noise_max", t.noise_max);
    r.get("early_stop_patience", t.early_stop_patience);
    r.get("select_by_validation", cfg.select_by_validation);
    r.finish();
  }
  {
    auto r = root.child("guidance");
    r.get("tau", cfg.guidance.tau);
    r.get("w", cfg.guidance.w);
    r.get("t_prime", cfg.guidance.t_prime);
    r.get("ks", cfg.guidance.ks);
    r.finish();
  }
  {
    auto r = root.child("eval");
    std::string split = "test";
    r.get("split", split);
    cfg.eval.split = detail::parse_split(split, "eval.split");
    r.get("sweep_taus", cfg.eval.sweep_taus);
    r.get("sweep_k", cfg.eval.sweep_k);
    r.finish();
  }
  {
    auto r = root.child("serve");
    r.get("host", cfg.serve.host);
    r.get("port", cfg.serve.port);
    r.get("cors_origin", cfg.serve.cors_origin);
    r.get("threads", cfg.serve.threads);
    r.finish();
  }
  root.finish();

  if (cfg.train.steps > 100)
    cfg.warnings.push_back("train.steps=" + std::to_string(cfg.train.steps) + " exceeds the usual bound of 100");
  cfg.validate();
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

inline nlohmann::json to_json(const DenoiserConfig& m) {
  return {{"n_items", m.n_items},   {"n_categories", m.n_categories},   {"hidden", m.hidden},
          {"latent", m.latent},     {"step_embed_dim", m.step_embed_dim}, {"cond_embed_dim", m.cond_embed_dim},
          {"dropout", m.dropout}};
}

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"weight_decay", t.weight_decay},
          {"lambda", t.lambda},
          {"delta", t.delta},
          {"gamma_min", t.gamma_min},
          {"gamma_max", t.gamma_max},
          {"reweight", t.reweight},
          {"cond_dropout", t.cond_dropout},
          {"steps", t.steps},
          {"noise_scale", t.noise_scale},
          {"noise_min", t.noise_min},
          {"noise_max", t.noise_max},
          {"early_stop_patience", t.early_stop_patience}};
}

/// Full echo of the effective configuration; parse_config(to_json(c)) == c.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["checkpoint"] = c.checkpoint;
  j["data"] = {{"dataset_dir", c.data.dataset_dir},
               {"events", c.data.events},
               {"categories", c.data.categories},
               {"rating_threshold", c.data.rating_threshold ? nlohmann::json(*c.data.rating_threshold) : nlohmann::json()},
               {"rating_scale_max", c.data.rating_scale_max ? nlohmann::json(*c.data.rating_scale_max) : nlohmann::json()},
               {"k_core", c.data.k_core},
               {"split_order", c.data.split_order == SplitOrder::chronological ? "chronological" : "shuffled"},
               {"noise_ratio", c.data.noise_ratio}};
  j["synthetic"] = {{"n_users", c.synthetic.n_users},
                    {"n_items", c.synthetic.n_items},
                    {"n_categories", c.synthetic.n_categories},
                    {"concentration", c.synthetic.concentration},
                    {"interactions_per_user", c.synthetic.interactions_per_user}};
  j["semi_synthetic"] = {{"fraction", c.semi_synthetic.fraction}, {"train_share", c.semi_synthetic.train_share}};
  auto model = to_json(c.model);
  model.erase("n_items");
  model.erase("n_categories");
  j["model"] = model;
  j["train"] = to_json(c.train);
  j["train"]["select_by_validation"] = c.select_by_validation;
  j["guidance"] = {{"tau", c.guidance.tau}, {"w", c.guidance.w}, {"t_prime", c.guidance.t_prime}, {"ks", c.guidance.ks}};
  j["eval"] = {{"split", split_name(c.eval.split)}, {"sweep_taus", c.eval.sweep_taus}, {"sweep_k", c.eval.sweep_k}};
  j["serve"] = {{"host", c.serve.host}, {"port", c.serve.port}, {"cors_origin", c.serve.cors_origin}, {"threads", c.serve.threads}};
  return j;
}

}  // namespace d3rec
