#pragma once

// HTTP front end for guided recommendation. Request handling lives in plain
// functions over an immutable engine so it can be exercised without sockets;
// serve() only wires them into cpp-httplib.

#include "d3rec/checkpoint.hpp"

#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <memory>
#include <unordered_map>

namespace d3rec {

/// Request rejected by validation; `status` is the HTTP status to report.
struct RequestError : std::runtime_error {
  RequestError(int s, std::string error, const std::string& detail)
      : std::runtime_error(detail), status(s), code(std::move(error)) {}
  int status;
  std::string code;
};

/// Loaded checkpoint plus the catalog it was trained on. Never mutated after
/// construction, so concurrent readers need no locking.
class Engine {
 public:
  Engine(Checkpoint ck, InteractionDataset catalog) : ck_(std::move(ck)), ds_(std::move(catalog)), sched_(ck_.train.schedule()) {
    if (ck_.model.config().n_items != ds_.n_items() || ck_.model.config().n_categories != ds_.n_categories())
      throw DataError("checkpoint dimensions (" + std::to_string(ck_.model.config().n_items) + " items, " +
                      std::to_string(ck_.model.config().n_categories) + " categories) do not match the dataset (" +
                      std::to_string(ds_.n_items()) + ", " + std::to_string(ds_.n_categories()) + ")");
    for (Index u = 0; u < ds_.n_users(); ++u) user_index_.emplace(ds_.user_ids[static_cast<std::size_t>(u)], u);
    for (Index i = 0; i < ds_.n_items(); ++i) item_index_.emplace(ds_.item_ids[static_cast<std::size_t>(i)], i);
    for (Index c = 0; c < ds_.n_categories(); ++c)
      category_index_.emplace(ds_.categories.category_names[static_cast<std::size_t>(c)], c);
    histories_ = items_by_user(ds_, kAll);
  }

  const Checkpoint& checkpoint() const { return ck_; }
  const InteractionDataset& dataset() const { return ds_; }
  const NoiseSchedule& schedule() const { return sched_; }

  std::optional<Index> user(const std::string& id) const { return lookup(user_index_, id); }
  std::optional<Index> item(const std::string& id) const { return lookup(item_index_, id); }
  std::optional<Index> category(const std::string& name) const { return lookup(category_index_, name); }
  const std::vector<Index>& history_of(Index u) const { return histories_[static_cast<std::size_t>(u)]; }

  /// Parses and validates a recommend request body into a guidance request.
  GuidanceRequest parse_request(const nlohmann::json& body, const GuidanceDefaults& defaults) const {
    if (!body.is_object()) throw RequestError(400, "bad_request", "request body must be a JSON object");
    static const std::set<std::string> known = {"user_id", "history", "target_categories", "tau", "w", "k", "t_prime"};
    for (const auto& [key, _] : body.items())
      if (!known.contains(key)) throw RequestError(400, "bad_request", "unknown field " + key);
    if (body.contains("user_id") && body.contains("history"))
      throw RequestError(400, "bad_request", "give either user_id or history, not both");

    GuidanceRequest req;
    req.tau = defaults.tau;
    req.w = defaults.w;
    req.t_prime = defaults.t_prime;
    req.k = defaults.ks.empty() ? 20 : *std::max_element(defaults.ks.begin(), defaults.ks.end());

    if (body.contains("user_id")) {
      const auto& v = body.at("user_id");
      if (!v.is_string()) throw RequestError(400, "bad_request", "user_id must be a string");
      const auto u = user(v.get<std::string>());
      if (!u) throw RequestError(400, "unknown_user", "unknown user id " + v.get<std::string>());
      req.history = history_of(*u);
    } else if (body.contains("history")) {
      const auto& v = body.at("history");
      if (!v.is_array()) throw RequestError(400, "bad_request", "history must be an array of item ids");
      std::vector<bool> seen(static_cast<std::size_t>(ds_.n_items()), false);
      for (const auto& e : v) {
        if (!e.is_string()) throw RequestError(400, "bad_request", "history entries must be item id strings");
        const auto i = item(e.get<std::string>());
        if (!i) throw RequestError(400, "unknown_item", "unknown item id " + e.get<std::string>());
        if (!seen[static_cast<std::size_t>(*i)]) req.history.push_back(*i);
        seen[static_cast<std::size_t>(*i)] = true;
      }
    }

    if (body.contains("target_categories") && !body.at("target_categories").is_null()) {
      const auto& t = body.at("target_categories");
      if (!t.is_object()) throw RequestError(400, "invalid_target", "target_categories must map category names to weights");
      Vector target = Vector::Zero(ds_.n_categories());
      for (const auto& [name, weight] : t.items()) {
        const auto c = category(name);
        if (!c) throw RequestError(400, "unknown_category", "unknown category " + name);
        if (!weight.is_number()) throw RequestError(400, "invalid_target", "weight for " + name + " must be a number");
        const double wgt = weight.get<double>();
        if (!(wgt >= 0.0) || !std::isfinite(wgt)) throw RequestError(400, "invalid_target", "negative or non-finite weight for " + name);
        target[*c] = wgt;
      }
      if (!(target.sum() > 0.0)) throw RequestError(400, "invalid_target", "target weights are all zero");
      req.target = target;
    }

    auto number = [&body](const char* key, double& out) {
      if (!body.contains(key)) return;
      if (!body.at(key).is_number()) throw RequestError(400, "bad_request", std::string(key) + " must be a number");
      out = body.at(key).get<double>();
    };
    auto integer = [&body](const char* key, auto& out) {
      if (!body.contains(key)) return;
      if (!body.at(key).is_number_integer()) throw RequestError(400, "bad_request", std::string(key) + " must be an integer");
      out = body.at(key).get<std::remove_reference_t<decltype(out)>>();
    };
    number("tau", req.tau);
    number("w", req.w);
    integer("k", req.k);
    integer("t_prime", req.t_prime);
    if (!(req.tau > 0.0) || !std::isfinite(req.tau)) throw RequestError(400, "bad_request", "tau must be positive and finite");
    if (!std::isfinite(req.w)) throw RequestError(400, "bad_request", "w must be finite");
    if (req.t_prime < 0 || req.t_prime >= sched_.steps())
      throw RequestError(400, "bad_request", "t_prime must lie in [0, " + std::to_string(sched_.steps()) + ")");
    const Index available = ds_.n_items() - static_cast<Index>(req.history.size());
    if (req.k < 1 || req.k > available)
      throw RequestError(400, "bad_request", "k must lie in [1, " + std::to_string(available) + "]");
    if (req.history.empty() && !req.target)
      throw RequestError(422, "empty_history", "history is empty and no target_categories were given");
    return req;
  }

  GuidedRecommendation run(const GuidanceRequest& req) const {
    return recommend_for_history(ck_.model, sched_, ds_.F(), req);
  }

  nlohmann::json render(const GuidedRecommendation& rec) const {
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t r = 0; r < rec.list.items.size(); ++r) {
      const Index i = rec.list.items[r];
      nlohmann::json cats = nlohmann::json::array();
      for (Index c = 0; c < ds_.n_categories(); ++c)
        if (ds_.F()(i, c) > 0.0) cats.push_back(ds_.categories.category_names[static_cast<std::size_t>(c)]);
      items.push_back({{"id", ds_.item_ids[static_cast<std::size_t>(i)]}, {"score", rec.list.scores[r]}, {"categories", cats}});
    }
    nlohmann::json target = nlohmann::json::object();
    nlohmann::json dist = nlohmann::json::object();
    for (Index c = 0; c < ds_.n_categories(); ++c) {
      const auto& name = ds_.categories.category_names[static_cast<std::size_t>(c)];
      target[name] = rec.applied_target[c];
      dist[name] = rec.list.category_distribution[c];
    }
    return {{"items", items},
            {"applied_target", target},
            {"metrics", {{"entropy", rec.list.entropy}, {"coverage", rec.list.coverage}, {"category_distribution", dist}}}};
  }

  nlohmann::json catalog() const {
    return {{"categories", ds_.categories.category_names}, {"n_items", ds_.n_items()}, {"k_max", ds_.n_items()}};
  }

 private:
  static std::optional<Index> lookup(const std::unordered_map<std::string, Index>& m, const std::string& key) {
    const auto it = m.find(key);
    if (it == m.end()) return std::nullopt;
    return it->second;
  }

  Checkpoint ck_;
  InteractionDataset ds_;
  NoiseSchedule sched_;
  std::unordered_map<std::string, Index> user_index_, item_index_, category_index_;
  std::vector<std::vector<Index>> histories_;
};

struct HttpResult {
  int status = 200;
  nlohmann::json body;
};

inline nlohmann::json error_body(const std::string& error, const std::string& detail) {
  return {{"error", error}, {"detail", detail}};
}

inline HttpResult handle_recommend(const Engine* engine, const std::string& body, const GuidanceDefaults& defaults = {}) {
  if (!engine) return {503, error_body("no_model", "no model is loaded")};
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return {400, error_body("bad_json", e.what())};
  }
  try {
    return {200, engine->render(engine->run(engine->parse_request(j, defaults)))};
  } catch (const RequestError& e) {
    return {e.status, error_body(e.code, e.what())};
  } catch (const ContractViolation& e) {
    return {400, error_body("bad_request", e.what())};
  } catch (const NumericError& e) {
    return {500, error_body("numeric_failure", e.what())};
  }
}

inline HttpResult handle_catalog(const Engine* engine) {
  if (!engine) return {503, error_body("no_model", "no model is loaded")};
  return {200, engine->catalog()};
}

inline HttpResult handle_health(const Engine* engine, double uptime_s) {
  nlohmann::json j = {{"status", engine ? "ready" : "no_model"}, {"uptime_s", uptime_s}};
  j["model_hash"] = engine ? nlohmann::json(engine->checkpoint().model_hash) : nlohmann::json();
  return {200, j};
}

/// Owns the listening server. start() binds and runs on a background thread;
/// the engine pointer may be null to serve health-only "no_model" responses.
class Service {
 public:
  Service(std::shared_ptr<const Engine> engine, ServeConfig cfg, GuidanceDefaults defaults = {})
      : engine_(std::move(engine)), cfg_(std::move(cfg)), defaults_(std::move(defaults)),
        started_(std::chrono::steady_clock::now()) {
    const int threads = cfg_.threads;
    server_.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    server_.set_default_headers({{"Access-Control-Allow-Origin", cfg_.cors_origin},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                 {"Access-Control-Allow-Headers", "Content-Type"}});
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server_.Post("/api/recommend", [this](const httplib::Request& req, httplib::Response& res) {
      reply(res, handle_recommend(engine_.get(), req.body, defaults_));
    });
    server_.Get("/api/catalog", [this](const httplib::Request&, httplib::Response& res) { reply(res, handle_catalog(engine_.get())); });
    server_.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      const double up = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
      reply(res, handle_health(engine_.get(), up));
    });
    server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) reply(res, {res.status, error_body("not_found", "no such endpoint")}, res.status);
    });
  }

  /// Binds (port 0 picks a free port) and returns the bound port.
  int bind() {
    port_ = cfg_.port == 0 ? server_.bind_to_any_port(cfg_.host) : (server_.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1);
    if (port_ < 0) throw ConfigError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
    return port_;
  }

  /// Blocks serving requests until stop().
  void listen() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  int port() const { return port_; }

 private:
  static void reply(httplib::Response& res, const HttpResult& r, int status = 0) {
    res.status = status ? status : r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  std::shared_ptr<const Engine> engine_;
  ServeConfig cfg_;
  GuidanceDefaults defaults_;
  std::chrono::steady_clock::time_point started_;
  httplib::Server server_;
  int port_ = -1;
};

}  // namespace d3rec
