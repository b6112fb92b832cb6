#include "parbci/console.hpp"
#include "parbci/session.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

using namespace parbci;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "session config (JSON); defaults apply when omitted");
  cmd->add_option("--seed", c.seed, "override sim_signals.seed");
  cmd->add_option("-o,--out", c.out, "override session_hub.output_dir");
}

SessionConfig resolve(const Common& c) {
  SessionConfig cfg = c.config.empty() ? SessionConfig{} : load_config(c.config);
  if (c.seed) cfg.scenario.seed = *c.seed;
  if (c.out) cfg.output_dir = *c.out;
  cfg.validate();
  return cfg;
}

void summarize(const SessionResult& r, const SessionConfig& cfg) {
  std::size_t actions = 0;
  for (const auto& l : r.log)
    if (parse_log_line(l).kind == "action") ++actions;
  std::cout << to_string(r.kind) << " session: " << r.log.size() << " events, " << actions << " actions -> "
            << cfg.output_dir << "\n";
}

int simulate(const Common& c) {
  const SessionConfig cfg = resolve(c);
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  write_stream_csv((dir / "eeg.csv").string(), gen_eeg(cfg.scenario));
  write_trace_csv((dir / "pupil.csv").string(), gen_pupil(cfg.scenario));
  std::cout << "wrote " << (dir / "eeg.csv").string() << " and " << (dir / "pupil.csv").string() << "\n";
  return 0;
}

int run(const Common& c, SessionKind kind) {
  const SessionConfig cfg = resolve(c);
  const SessionResult r = run_session(cfg, kind);
  write_session_outputs(cfg, r);
  summarize(r, cfg);
  return 0;
}

int serve(const Common& c, const std::optional<std::string>& listen, std::optional<double> speed, bool training) {
  SessionConfig cfg = resolve(c);
  if (listen) cfg.listen = *listen;
  if (speed) cfg.speed = *speed;
  else if (cfg.speed == 0.0) cfg.speed = 1.0;
  cfg.validate();
  ConsoleServer server(cfg.listen, cfg.queue_capacity);
  std::cerr << "listening on " << cfg.listen.substr(0, cfg.listen.rfind(':')) << ":" << server.port() << std::endl;
  const SessionResult r = run_session(cfg, training ? SessionKind::training : SessionKind::free_use, &server);
  server.flush(2000);
  server.stop();
  write_session_outputs(cfg, r);
  summarize(r, cfg);
  return 0;
}

int replay_cmd(const std::string& log_path, const std::optional<std::string>& out) {
  const auto log = read_log(log_path);
  const SessionResult r = replay(log);
  if (r.log != log) {
    std::size_t i = 0;
    while (i < log.size() && i < r.log.size() && log[i] == r.log[i]) ++i;
    std::cerr << "replay diverges at event " << i << "\n";
    return kExitRuntime;
  }
  std::cout << "replay reproduced " << r.log.size() << " events\n";
  if (out) {
    SessionConfig cfg;
    cfg.output_dir = *out;
    write_session_outputs(cfg, r);
  }
  return 0;
}

int metrics_cmd(const std::string& log_path) {
  std::cout << metrics_to_json(metrics_from_log(read_log(log_path))).dump(2) << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"parbci: multimodal PAR + motor-imagery BCI session engine"};
  app.require_subcommand(1);

  Common common;
  auto* sim = app.add_subcommand("simulate", "write the scenario's EEG and pupil streams as CSV");
  add_common(sim, common);
  auto* run_cmd = app.add_subcommand("run", "free-use session");
  add_common(run_cmd, common);
  auto* train_cmd = app.add_subcommand("train", "neurofeedback training session");
  add_common(train_cmd, common);

  auto* serve_cmd = app.add_subcommand("serve", "session with the operator console endpoint");
  add_common(serve_cmd, common);
  std::optional<std::string> listen;
  std::optional<double> speed;
  bool training = false;
  serve_cmd->add_option("--listen", listen, "host:port (overrides session_hub.listen)");
  serve_cmd->add_option("--speed", speed, "pacing factor; defaults to session_hub.speed or 1");
  serve_cmd->add_flag("--training", training, "run a training session instead of free use");

  std::string log_path;
  std::optional<std::string> replay_out;
  auto* replay_sub = app.add_subcommand("replay", "re-run a session from its log and check it reproduces");
  replay_sub->add_option("log", log_path, "session.jsonl")->required();
  replay_sub->add_option("-o,--out", replay_out, "write the replayed outputs here");
  auto* metrics_sub = app.add_subcommand("metrics", "recompute performance metrics from a log");
  metrics_sub->add_option("log", log_path, "session.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sim) return simulate(common);
    if (*run_cmd) return run(common, SessionKind::free_use);
    if (*train_cmd) return run(common, SessionKind::training);
    if (*serve_cmd) return serve(common, listen, speed, training);
    if (*replay_sub) return replay_cmd(log_path, replay_out);
    if (*metrics_sub) return metrics_cmd(log_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
