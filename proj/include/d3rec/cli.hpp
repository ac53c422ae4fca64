#pragma once

// Command dispatch for the d3rec tool. Every failure ends with one JSON line
// {"error": ..., "detail": ...} on the error stream and a family exit code.

#include "d3rec/checkpoint.hpp"
#include "d3rec/dataset_io.hpp"
#include "d3rec/service.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace d3rec {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitConfig = 2, kExitData = 3, kExitNumeric = 4 };

struct CliFlags {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> tau;
  std::optional<double> w;
  std::optional<Index> k;
  std::optional<std::string> user;
  std::optional<int> port;
};

/// Builds the effective config: file (or defaults) with flag overrides applied.
inline RunConfig effective_config(const CliFlags& f) {
  RunConfig cfg = f.config_path.empty() ? parse_config(nlohmann::json::object()) : load_config(f.config_path);
  if (f.seed) cfg.set_seed(*f.seed);
  if (f.out) cfg.output_dir = *f.out;
  if (f.tau) cfg.guidance.tau = *f.tau;
  if (f.w) cfg.guidance.w = *f.w;
  if (f.k) cfg.guidance.ks = {*f.k};
  if (f.port) cfg.serve.port = *f.port;
  cfg.validate();
  return cfg;
}

/// Loads the dataset named by the config: a saved dataset directory, raw
/// event/category files that are binarized, k-core filtered and split, or
/// failing both the toy dataset under output_dir written by gen-toy.
inline StoredDataset load_run_dataset(const RunConfig& cfg) {
  if (!cfg.data.dataset_dir.empty()) return load_dataset(cfg.data.dataset_dir);
  if (cfg.data.events.empty() && cfg.data.categories.empty()) {
    const auto toy = std::filesystem::path(cfg.output_dir) / "toy";
    if (std::filesystem::exists(toy / "manifest.json")) return load_dataset(toy);
    throw ConfigError("config needs data.dataset_dir, data.events and data.categories, or a gen-toy dataset in " +
                      toy.string());
  }
  if (cfg.data.events.empty() || cfg.data.categories.empty())
    throw ConfigError("data.events and data.categories must be given together");
  auto events = read_events(cfg.data.events);
  if (cfg.data.rating_threshold) events = binarize_above(events, *cfg.data.rating_threshold);
  else if (cfg.data.rating_scale_max) events = binarize(events, *cfg.data.rating_scale_max);
  InteractionDataset ds = build_dataset(events, read_categories(cfg.data.categories));
  ds.seed = cfg.seed;
  if (cfg.data.k_core > 0) ds = k_core_filter(ds, cfg.data.k_core);
  return {chronological_split(ds, {0.6, 0.2, 0.2}, cfg.data.split_order, cfg.seed), std::nullopt};
}

inline std::filesystem::path checkpoint_dir(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? std::filesystem::path(cfg.output_dir) / "checkpoint" : std::filesystem::path(cfg.checkpoint);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

inline nlohmann::json dataset_summary(const InteractionDataset& ds, const std::filesystem::path& dir) {
  return {{"dataset_dir", dir.string()},
          {"n_users", ds.n_users()},
          {"n_items", ds.n_items()},
          {"n_categories", ds.n_categories()},
          {"train", ds.count(kTrain)},
          {"valid", ds.count(kValid)},
          {"test", ds.count(kTest)}};
}

namespace detail {

inline EvalOptions eval_options(const RunConfig& cfg) {
  EvalOptions eo;
  eo.split = cfg.eval.split;
  eo.tau = cfg.guidance.tau;
  eo.w = cfg.guidance.w;
  eo.t_prime = cfg.guidance.t_prime;
  eo.ks = cfg.guidance.ks;
  return eo;
}

inline int cmd_gen_toy(const RunConfig& cfg, std::ostream& out) {
  const auto dir = std::filesystem::path(cfg.output_dir) / "toy";
  const InteractionDataset ds = chronological_split(generate_toy(cfg.synthetic));
  save_dataset(dir, ds);
  out << dataset_summary(ds, dir).dump() << '\n';
  return kExitOk;
}

inline int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const auto dir = std::filesystem::path(cfg.output_dir) / "semi_synthetic";
  const StoredDataset src = load_run_dataset(cfg);
  const SemiSyntheticResult ss = build_semi_synthetic(src.dataset, cfg.semi_synthetic.fraction, cfg.semi_synthetic.train_share);
  save_dataset(dir, ss.dataset, ss.target_prefs);
  auto j = dataset_summary(ss.dataset, dir);
  j["dropped_users"] = ss.dropped_users;
  j["c_kl"] = category_kl(ss.dataset);
  j["c_kl_source"] = category_kl(src.dataset);
  out << j.dump() << '\n';
  return kExitOk;
}

inline int cmd_inject_noise(const RunConfig& cfg, std::ostream& out) {
  const auto dir = std::filesystem::path(cfg.output_dir) / "noisy";
  const StoredDataset src = load_run_dataset(cfg);
  const InteractionDataset noisy = inject_noise(src.dataset, cfg.data.noise_ratio, cfg.seed);
  save_dataset(dir, noisy, src.target_prefs);
  auto j = dataset_summary(noisy, dir);
  j["added"] = noisy.count(kTrain) - src.dataset.count(kTrain);
  out << j.dump() << '\n';
  return kExitOk;
}

inline int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const StoredDataset data = load_run_dataset(cfg);
  const std::filesystem::path outdir(cfg.output_dir);
  std::filesystem::create_directories(outdir);
  write_text(outdir / "config.json", to_json(cfg).dump(2) + "\n");
  std::ofstream log(outdir / "train_log.jsonl", std::ios::trunc);
  FitOptions fo;
  fo.select_by_validation = cfg.select_by_validation;
  fo.guidance = cfg.guidance;
  fo.log = &log;
  const FitResult fit_result = fit(data.dataset, cfg.model, cfg.train, fo);
  const std::string hash = save_checkpoint(checkpoint_dir(cfg), fit_result.best, cfg.train, cfg.seed, fit_result.best_epoch);
  nlohmann::json j = {{"checkpoint", checkpoint_dir(cfg).string()},
                      {"model_hash", hash},
                      {"best_epoch", fit_result.best_epoch},
                      {"epochs_run", fit_result.history.size()}};
  if (!fit_result.history.empty()) {
    j["first_loss"] = fit_result.history.front().loss.total;
    j["last_loss"] = fit_result.history.back().loss.total;
  }
  out << j.dump() << '\n';
  return kExitOk;
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const StoredDataset data = load_run_dataset(cfg);
  const Checkpoint ck = load_checkpoint(checkpoint_dir(cfg));
  const NoiseSchedule sched = ck.train.schedule();
  const EvalOptions eo = eval_options(cfg);
  nlohmann::json j = evaluate(ck.model, sched, data.dataset, eo).to_json();
  j["split"] = split_name(eo.split);
  j["tau"] = eo.tau;
  j["w"] = eo.w;
  j["model_hash"] = ck.model_hash;
  if (data.target_prefs) {
    EvalOptions targeted = eo;
    targeted.targets = &*data.target_prefs;
    j["targeted"] = evaluate(ck.model, sched, data.dataset, targeted).to_json();
  }
  write_text(std::filesystem::path(cfg.output_dir) / "report.json", j.dump(2) + "\n");
  out << j.dump() << '\n';
  return kExitOk;
}

inline int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  const StoredDataset data = load_run_dataset(cfg);
  const Checkpoint ck = load_checkpoint(checkpoint_dir(cfg));
  const auto rows = pareto_sweep(ck.model, ck.train.schedule(), data.dataset, cfg.eval.sweep_taus, eval_options(cfg), cfg.eval.sweep_k);
  const std::string csv = sweep_to_csv(rows);
  write_text(std::filesystem::path(cfg.output_dir) / "sweep.csv", csv);
  out << csv;
  return kExitOk;
}

inline std::shared_ptr<const Engine> load_engine(const RunConfig& cfg) {
  return std::make_shared<const Engine>(load_checkpoint(checkpoint_dir(cfg)), load_run_dataset(cfg).dataset);
}

inline nlohmann::json recommend_request(const RunConfig& cfg, const std::string& user) {
  return {{"user_id", user},
          {"tau", cfg.guidance.tau},
          {"w", cfg.guidance.w},
          {"k", *std::max_element(cfg.guidance.ks.begin(), cfg.guidance.ks.end())},
          {"t_prime", cfg.guidance.t_prime}};
}

inline int cmd_recommend(const RunConfig& cfg, const std::optional<std::string>& user, std::ostream& out, std::ostream& err) {
  if (!user) throw ConfigError("recommend needs --user");
  const auto engine = load_engine(cfg);
  const HttpResult r = handle_recommend(engine.get(), recommend_request(cfg, *user).dump(), cfg.guidance);
  if (r.status != 200) {
    err << r.body.dump() << '\n';
    return kExitData;
  }
  out << r.body.dump() << '\n';
  return kExitOk;
}

inline Service* g_running_service = nullptr;

inline int cmd_serve(const RunConfig& cfg, std::ostream& out) {
  Service service(load_engine(cfg), cfg.serve, cfg.guidance);
  const int port = service.bind();
  out << nlohmann::json{{"listening", cfg.serve.host + ":" + std::to_string(port)}}.dump() << '\n';
  out.flush();
  g_running_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_running_service) g_running_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_running_service) g_running_service->stop();
  });
  service.listen();
  g_running_service = nullptr;
  return kExitOk;
}

}  // namespace detail

inline int dispatch(const CliFlags& flags, std::ostream& out, std::ostream& err) {
  auto fail = [&err](int code, const std::string& kind, const std::string& detail) {
    err << nlohmann::json{{"error", kind}, {"detail", detail}}.dump() << '\n';
    return code;
  };
  try {
    const RunConfig cfg = effective_config(flags);
    for (const auto& w : cfg.warnings) err << nlohmann::json{{"warning", w}}.dump() << '\n';
    const std::string& c = flags.command;
    if (c == "gen-toy") return detail::cmd_gen_toy(cfg, out);
    if (c == "synth") return detail::cmd_synth(cfg, out);
    if (c == "inject-noise") return detail::cmd_inject_noise(cfg, out);
    if (c == "train") return detail::cmd_train(cfg, out);
    if (c == "eval") return detail::cmd_eval(cfg, out);
    if (c == "sweep") return detail::cmd_sweep(cfg, out);
    if (c == "recommend") return detail::cmd_recommend(cfg, flags.user, out, err);
    if (c == "serve") return detail::cmd_serve(cfg, out);
    return fail(kExitUsage, "usage", "unknown command " + c);
  } catch (const ConfigError& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const DataError& e) {
    return fail(kExitData, "data", e.what());
  } catch (const NumericError& e) {
    return fail(kExitNumeric, "numeric", e.what());
  } catch (const ContractViolation& e) {
    return fail(kExitData, "data", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(kExitData, "data", e.what());
  }
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Diversity-controllable diffusion recommender"};
  app.require_subcommand(1, 1);
  CliFlags flags;
  std::uint64_t seed = 0;
  std::string out_dir, user;
  double tau = 1.0, w = 0.0;
  Index k = 20;
  int port = 0;
  static const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "train a model and write a checkpoint"},
      {"eval", "evaluate a checkpoint and write report.json"},
      {"sweep", "temperature sweep to sweep.csv"},
      {"synth", "build the semi-synthetic preference-shift dataset"},
      {"gen-toy", "generate the synthetic toy dataset"},
      {"inject-noise", "add false-positive train interactions"},
      {"recommend", "print one user's guided top-K list as JSON"},
      {"serve", "run the HTTP API"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config_path, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override every seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--tau", tau, "preference temperature");
    sub->add_option("--w", w, "guidance strength");
    sub->add_option("--k", k, "list length");
    sub->add_option("--user", user, "user id");
    sub->add_option("--port", port, "listening port");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ValidationError& e) {
    err << nlohmann::json{{"error", "config"}, {"detail", e.what()}}.dump() << '\n';
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    err << nlohmann::json{{"error", "usage"}, {"detail", e.what()}}.dump() << '\n';
    return kExitUsage;
  }
  for (CLI::App* sub : subs) {
    if (!sub->parsed()) continue;
    flags.command = sub->get_name();
    if (sub->count("--seed")) flags.seed = seed;
    if (sub->count("--out")) flags.out = out_dir;
    if (sub->count("--tau")) flags.tau = tau;
    if (sub->count("--w")) flags.w = w;
    if (sub->count("--k")) flags.k = k;
    if (sub->count("--user")) flags.user = user;
    if (sub->count("--port")) flags.port = port;
  }
  return dispatch(flags, out, err);
}

}  // namespace d3rec
