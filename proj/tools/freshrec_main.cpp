#include <CLI11.hpp>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>

#include "freshrec/freshrec_c.h"

namespace {

fr_engine* g_serving = nullptr;

void handle_signal(int) {
  if (g_serving) fr_serve_stop(g_serving);
}

int report_error(fr_engine* engine, const char* action, fr_status status) {
  std::fprintf(stderr, "freshrec: %s failed (status %d): %s\n", action,
               static_cast<int>(status),
               engine ? fr_last_error(engine) : fr_global_last_error());
  return 1;
}

struct EngineGuard {
  fr_engine* engine = nullptr;
  ~EngineGuard() { fr_engine_destroy(engine); }
};

int open_engine(const std::string& config, EngineGuard& guard) {
  fr_status status = fr_engine_create(config.c_str(), &guard.engine);
  if (status != FR_OK) return report_error(nullptr, "engine create", status);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"new-release recommendation service"};
  app.require_subcommand(1);

  std::string config;
  std::string out_path;
  int64_t now_ts = 0;
  int64_t window_end = 0;
  uint64_t seed = 0;
  std::string host = "127.0.0.1";
  int port = 8080;

  auto* serve = app.add_subcommand("serve", "serve the HTTP API");
  serve->add_option("--config", config, "key=value config file")->required();
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "bind port");

  auto* train_cf = app.add_subcommand(
      "train-cf", "factorize the trailing interaction window");
  train_cf->add_option("--config", config)->required();
  train_cf->add_option("--window-end", window_end,
                       "window end (epoch seconds)")
      ->required();

  auto* train_cold = app.add_subcommand(
      "train-coldstart", "train the embedding prediction network");
  train_cold->add_option("--config", config)->required();

  auto* tick = app.add_subcommand("tick", "run one scheduler refresh");
  tick->add_option("--config", config)->required();
  tick->add_option("--now", now_ts, "tick time (epoch seconds)")->required();

  auto* simulate =
      app.add_subcommand("simulate", "run the synthetic-user replay");
  simulate->add_option("--config", config)->required();
  simulate->add_option("--seed", seed)->required();
  simulate->add_option("--out", out_path, "metrics report path")->required();

  CLI11_PARSE(app, argc, argv);

  if (simulate->parsed()) {
    fr_status status = fr_simulate(config.c_str(), seed, out_path.c_str());
    if (status != FR_OK) return report_error(nullptr, "simulate", status);
    std::FILE* f = std::fopen(out_path.c_str(), "rb");
    if (f) {
      char line[4096];
      while (std::fgets(line, sizeof(line), f)) {
        if (std::strncmp(line, "kind=meta", 9) == 0 ||
            std::strncmp(line, "kind=ab", 7) == 0)
          std::fputs(line, stdout);
      }
      std::fclose(f);
    }
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
  }

  EngineGuard guard;
  if (int rc = open_engine(config, guard)) return rc;

  if (serve->parsed()) {
    g_serving = guard.engine;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    std::printf("listening on %s:%d\n", host.c_str(), port);
    std::fflush(stdout);
    fr_status status = fr_serve(guard.engine, host.c_str(), port);
    g_serving = nullptr;
    if (status != FR_OK) return report_error(guard.engine, "serve", status);
    return 0;
  }
  if (train_cf->parsed()) {
    fr_status status = fr_train_cf(guard.engine, window_end);
    if (status != FR_OK) return report_error(guard.engine, "train-cf", status);
    std::printf("cf training complete\n");
    return 0;
  }
  if (train_cold->parsed()) {
    fr_status status = fr_train_coldstart(guard.engine);
    if (status != FR_OK)
      return report_error(guard.engine, "train-coldstart", status);
    std::printf("cold-start training complete\n");
    return 0;
  }
  if (tick->parsed()) {
    char* report = nullptr;
    fr_status status = fr_tick(guard.engine, now_ts, &report);
    if (status != FR_OK) return report_error(guard.engine, "tick", status);
    if (report) {
      std::fputs(report, stdout);
      fr_buffer_free(report);
    }
    return 0;
  }
  return 1;
}
