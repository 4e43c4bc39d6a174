#include "freshrec/freshrec_c.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>

#include "core/catalog.hpp"
#include "core/config.hpp"
#include "core/engine.hpp"
#include "core/http_server.hpp"
#include "core/simulator.hpp"
#include "core/textcodec.hpp"

using namespace freshrec;

struct fr_engine {
  std::unique_ptr<Engine> engine;
  std::unique_ptr<HttpServer> server;
  std::string last_error;
};

namespace {

std::mutex g_error_mu;
std::string g_last_error;

void set_global_error(const std::string& msg) {
  std::lock_guard lock(g_error_mu);
  g_last_error = msg;
}

fr_status classify(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return FR_ERR_CONFIG;
  if (dynamic_cast<const CodecError*>(&e)) return FR_ERR_INVALID_ARG;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return FR_ERR_INVALID_ARG;
  if (dynamic_cast<const std::ios_base::failure*>(&e)) return FR_ERR_IO;
  const std::string what = e.what();
  if (what.find("open") != std::string::npos ||
      what.find("read") != std::string::npos ||
      what.find("write") != std::string::npos)
    return FR_ERR_IO;
  return FR_ERR_STATE;
}

fr_status fail(fr_engine* engine, const std::exception& e) {
  const fr_status status = classify(e);
  if (engine)
    engine->last_error = e.what();
  else
    set_global_error(e.what());
  return status;
}

char* copy_out(const std::string& text) {
  char* buf = static_cast<char*>(std::malloc(text.size() + 1));
  if (!buf) return nullptr;
  std::memcpy(buf, text.c_str(), text.size() + 1);
  return buf;
}

std::string tick_record(const TickReport& report) {
  Record rec;
  rec.add("now", std::to_string(report.now));
  rec.add("window_albums", std::to_string(report.window_albums));
  rec.add("predictions", std::to_string(report.predictions));
  rec.add("prediction_version", std::to_string(report.prediction_version));
  rec.add("index_version", std::to_string(report.index_version));
  rec.add("expired_arms", std::to_string(report.expired_arms.size()));
  rec.add("registered_arms", std::to_string(report.registered_arms));
  rec.add("updated_arms", std::to_string(report.updated_arms));
  return encode_record(rec) + "\n";
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  for (const auto& line : lines) out << line << "\n";
  if (!out) throw std::runtime_error("failed to write '" + path + "'");
}

}  // namespace

extern "C" {

fr_status fr_engine_create(const char* config_path, fr_engine** out) {
  if (!config_path || !out) {
    set_global_error("config_path and out must be non-null");
    return FR_ERR_INVALID_ARG;
  }
  *out = nullptr;
  auto handle = std::make_unique<fr_engine>();
  try {
    KeyValueConfig kv = KeyValueConfig::from_file(config_path);
    EngineConfig cfg = EngineConfig::from_kv(kv);
    handle->engine = std::make_unique<Engine>(cfg);
    Engine& engine = *handle->engine;
    namespace fs = std::filesystem;
    if (!cfg.catalog_path.empty() && fs::exists(cfg.catalog_path))
      engine.catalog().load_catalog_file(cfg.catalog_path);
    if (!cfg.events_path.empty() && fs::exists(cfg.events_path))
      engine.catalog().ingest_events_file(cfg.events_path);
    if (!cfg.store_path.empty() && fs::exists(cfg.store_path))
      engine.set_store(EmbeddingStore::load(cfg.store_path));
    if (!cfg.model_path.empty() && fs::exists(cfg.model_path)) {
      auto [model, fcfg] = load_model(cfg.model_path);
      engine.set_model(std::move(model), std::move(fcfg));
    }
    if (!cfg.arms_path.empty() && fs::exists(cfg.arms_path))
      engine.set_bandit(BanditBook::load_arm_table(cfg.arms_path, cfg.bandit));
  } catch (const std::exception& e) {
    set_global_error(e.what());
    return dynamic_cast<const ConfigError*>(&e) ? FR_ERR_CONFIG : FR_ERR_IO;
  }
  *out = handle.release();
  return FR_OK;
}

void fr_engine_destroy(fr_engine* engine) { delete engine; }

const char* fr_last_error(const fr_engine* engine) {
  if (!engine) return fr_global_last_error();
  return engine->last_error.c_str();
}

const char* fr_global_last_error(void) {
  std::lock_guard lock(g_error_mu);
  return g_last_error.c_str();
}

fr_status fr_train_cf(fr_engine* engine, int64_t window_end) {
  if (!engine) {
    set_global_error("engine must be non-null");
    return FR_ERR_INVALID_ARG;
  }
  try {
    engine->engine->train_cf(window_end);
    const std::string& path = engine->engine->config().store_path;
    if (!path.empty()) engine->engine->store().save(path);
  } catch (const std::exception& e) {
    return fail(engine, e);
  }
  return FR_OK;
}

fr_status fr_train_coldstart(fr_engine* engine) {
  if (!engine) {
    set_global_error("engine must be non-null");
    return FR_ERR_INVALID_ARG;
  }
  try {
    engine->engine->train_coldstart();
    const std::string& path = engine->engine->config().model_path;
    if (!path.empty())
      save_model(path, engine->engine->model(),
                 engine->engine->feature_config());
  } catch (const std::exception& e) {
    return fail(engine, e);
  }
  return FR_OK;
}

fr_status fr_tick(fr_engine* engine, int64_t now, char** report_out) {
  if (!engine) {
    set_global_error("engine must be non-null");
    return FR_ERR_INVALID_ARG;
  }
  try {
    TickReport report = engine->engine->scheduler_tick(now);
    if (report_out) *report_out = copy_out(tick_record(report));
  } catch (const std::exception& e) {
    return fail(engine, e);
  }
  return FR_OK;
}

fr_status fr_carousel(fr_engine* engine, const char* user_id, int64_t now,
                      const char* policy, int view_all, char** doc_out) {
  if (!engine || !user_id || !policy || !doc_out) {
    set_global_error("engine, user_id, policy and doc_out must be non-null");
    return FR_ERR_INVALID_ARG;
  }
  auto p = policy_from_name(policy);
  if (!p) {
    engine->last_error = std::string("unknown policy '") + policy + "'";
    return FR_ERR_INVALID_ARG;
  }
  try {
    Slate slate = view_all
                      ? engine->engine->view_all(user_id, now, *p)
                      : engine->engine->build_carousel(user_id, now, *p);
    *doc_out = copy_out(slate.to_document());
  } catch (const std::exception& e) {
    return fail(engine, e);
  }
  return FR_OK;
}

fr_status fr_feedback(fr_engine* engine, const char* slate_id,
                      int click_position, int64_t ts) {
  if (!engine || !slate_id) {
    set_global_error("engine and slate_id must be non-null");
    return FR_ERR_INVALID_ARG;
  }
  try {
    std::optional<int> click;
    if (click_position >= 1) click = click_position;
    engine->engine->record_display(slate_id, click, ts);
  } catch (const std::exception& e) {
    return fail(engine, e);
  }
  return FR_OK;
}

fr_status fr_serve(fr_engine* engine, const char* host, int port) {
  if (!engine || !host) {
    set_global_error("engine and host must be non-null");
    return FR_ERR_INVALID_ARG;
  }
  try {
    engine->server = std::make_unique<HttpServer>(*engine->engine);
    if (!engine->server->listen(host, port)) {
      engine->last_error = "failed to listen on " + std::string(host) + ":" +
                           std::to_string(port);
      return FR_ERR_IO;
    }
  } catch (const std::exception& e) {
    return fail(engine, e);
  }
  return FR_OK;
}

void fr_serve_stop(fr_engine* engine) {
  if (engine && engine->server) engine->server->stop();
}

fr_status fr_simulate(const char* config_path, uint64_t seed,
                      const char* out_path) {
  if (!config_path || !out_path) {
    set_global_error("config_path and out_path must be non-null");
    return FR_ERR_INVALID_ARG;
  }
  try {
    KeyValueConfig kv = KeyValueConfig::from_file(config_path);
    sim::SimConfig cfg = sim::SimConfig::from_kv(kv);
    sim::SimWorld world = sim::generate_world(cfg, seed);
    std::vector<std::string> lines;
    const std::string a_name = kv.get_string("sim_policy_a", "");
    const std::string b_name = kv.get_string("sim_policy_b", "");
    if (!a_name.empty() && !b_name.empty()) {
      auto pa = policy_from_name(a_name);
      auto pb = policy_from_name(b_name);
      if (!pa || !pb) throw ConfigError("unknown policy in sim_policy_a/b");
      auto [split_a, split_b] = sim::split_users(world, seed);
      sim::AbSeedResult r = sim::ab_compare_with_splits(
          world, *pa, *pb, cfg.horizon_days, seed, split_a, split_b);
      for (auto& line : r.arm_a.to_lines()) lines.push_back(std::move(line));
      for (auto& line : r.arm_b.to_lines()) lines.push_back(std::move(line));
      Record summary;
      summary.add("kind", "ab");
      summary.add("policy_a", policy_name(*pa));
      summary.add("policy_b", policy_name(*pb));
      summary.add("seed", std::to_string(seed));
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", r.ctr_lift);
      summary.add("ctr_lift", buf);
      std::snprintf(buf, sizeof(buf), "%.17g", r.displayed_ratio);
      summary.add("displayed_ratio", buf);
      std::snprintf(buf, sizeof(buf), "%.17g", r.clicked_ratio);
      summary.add("clicked_ratio", buf);
      lines.push_back(encode_record(summary));
    } else {
      auto policy = policy_from_name(kv.get_string("sim_policy", "editorial"));
      if (!policy) throw ConfigError("unknown policy in sim_policy");
      sim::MetricsReport report =
          sim::run_policy(world, *policy, cfg.horizon_days, seed);
      lines = report.to_lines();
    }
    write_lines(out_path, lines);
  } catch (const std::exception& e) {
    set_global_error(e.what());
    if (dynamic_cast<const ConfigError*>(&e)) return FR_ERR_CONFIG;
    if (dynamic_cast<const sim::SimError*>(&e)) return FR_ERR_INVALID_ARG;
    return FR_ERR_STATE;
  }
  return FR_OK;
}

void fr_buffer_free(char* buffer) { std::free(buffer); }

}  // extern "C"
