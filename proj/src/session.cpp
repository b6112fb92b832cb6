#include "parbci/session.hpp"

#include "parbci/rng.hpp"
#include "parbci/text_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace parbci {

namespace {

constexpr double kBoundaryEps = 1e-9;
constexpr std::uint64_t kCalibrationStream = 0x63616c; // sub-stream id of the calibration run
constexpr double kCalibrationBlock = 4.0;

Json optional_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

bool same_view(const UiState& a, const UiState& b) {
  return a.view == b.view && a.highlighted == b.highlighted && a.origin == b.origin && a.mode == b.mode &&
         a.shortcuts == b.shortcuts && a.overlay_return == b.overlay_return && a.ring_start == b.ring_start;
}

bool is_ui_command(const std::string& c) { return c == "inject_par" || c == "inject_mi" || c == "press_button"; }

TrialProtocol with_active(TrialProtocol p, const std::vector<Label>& active) {
  if (!active.empty()) p.active_tasks = active;
  return p;
}

} // namespace

std::string to_string(SessionKind k) { return k == SessionKind::training ? "training" : "free_use"; }

SessionKind parse_session_kind(const std::string& s) {
  if (s == "free_use") return SessionKind::free_use;
  if (s == "training") return SessionKind::training;
  throw std::invalid_argument("unknown session kind: " + s);
}

// ---- log ---------------------------------------------------------------------------

void EventLog::append(double t, const std::string& kind, Json payload) {
  if (!lines_.empty() && t < last_t_)
    throw std::logic_error("event '" + kind + "' at t=" + format_double(t) + " precedes t=" + format_double(last_t_));
  Json e{{"v", kLogVersion},
         {"seq", static_cast<long long>(lines_.size())},
         {"t", t},
         {"kind", kind},
         {"payload", std::move(payload)}};
  lines_.push_back(e.dump());
  last_t_ = t;
  if (observer_) observer_(lines_.back());
}

std::string EventLog::text() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

LogEvent parse_log_line(const std::string& line) {
  try {
    const Json j = Json::parse(line);
    if (j.at("v").get<int>() != kLogVersion) throw std::runtime_error("log version mismatch");
    return {j.at("seq").get<long long>(), j.at("t").get<double>(), j.at("kind").get<std::string>(), j.at("payload")};
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed log line: ") + e.what());
  }
}

std::vector<std::string> read_log(const std::string& path) {
  auto lines = read_lines(path);
  lines.erase(std::remove_if(lines.begin(), lines.end(), [](const std::string& l) { return l.empty(); }), lines.end());
  return lines;
}

Json covariance_to_json(const SpdMatrix& c) {
  Json upper = Json::array();
  for (int i = 0; i < c.dim(); ++i)
    for (int j = i; j < c.dim(); ++j) upper.push_back(c(i, j));
  return Json{{"dim", c.dim()}, {"upper", upper}};
}

SpdMatrix covariance_from_json(const Json& j) {
  const int n = j.at("dim").get<int>();
  const auto& upper = j.at("upper");
  if (n < 1 || upper.size() != static_cast<std::size_t>(n * (n + 1) / 2))
    throw std::runtime_error("covariance record: size does not match dim");
  Matrix m(n, n);
  std::size_t k = 0;
  for (int i = 0; i < n; ++i)
    for (int c = i; c < n; ++c) m(i, c) = m(c, i) = upper[k++].get<double>();
  return SpdMatrix(m);
}

// ---- operator commands ------------------------------------------------------------

OperatorCommand parse_command(const std::string& line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw std::invalid_argument("command is not valid JSON");
  }
  if (!j.is_object()) throw std::invalid_argument("command must be a JSON object");
  OperatorCommand c;
  if (const auto s = j.find("seq"); s != j.end()) {
    if (!s->is_number_integer()) throw std::invalid_argument("seq must be an integer");
    c.client_seq = s->get<long long>();
  }
  const auto v = j.find("v");
  if (v == j.end() || !v->is_number_integer() || v->get<int>() != kLogVersion)
    throw std::invalid_argument("unsupported protocol version");
  const auto cmd = j.find("cmd");
  if (cmd == j.end() || !cmd->is_string()) throw std::invalid_argument("missing cmd");
  c.command = cmd->get<std::string>();
  if (c.command == "inject_mi") {
    const auto l = j.find("label");
    if (l == j.end() || !l->is_string() || l->get<std::string>().empty())
      throw std::invalid_argument("inject_mi needs a label");
    c.label = l->get<std::string>();
  } else if (c.command == "set_speed") {
    const auto f = j.find("factor");
    if (f == j.end() || !f->is_number()) throw std::invalid_argument("set_speed needs a numeric factor");
    c.factor = f->get<double>();
    if (!(c.factor > 0.0) || !std::isfinite(c.factor)) throw std::invalid_argument("set_speed factor must be > 0");
  } else if (c.command != "inject_par" && c.command != "press_button" && c.command != "pause" &&
             c.command != "resume") {
    throw std::invalid_argument("unknown command '" + c.command + "'");
  }
  return c;
}

Json command_to_json(const OperatorCommand& c) {
  Json j{{"command", c.command}};
  if (c.command == "inject_mi") j["label"] = c.label;
  if (c.command == "set_speed") j["factor"] = c.factor;
  j["source"] = c.source;
  return j;
}

OperatorCommand command_from_json(const Json& j) {
  OperatorCommand c;
  c.command = j.at("command").get<std::string>();
  if (const auto l = j.find("label"); l != j.end()) c.label = l->get<std::string>();
  if (const auto f = j.find("factor"); f != j.end()) c.factor = f->get<double>();
  c.source = j.at("source").get<std::string>();
  return c;
}

// ---- MI gate -------------------------------------------------------------------------

std::optional<Label> MiGate::push(const Label& label, double score) {
  if (label == kIdle || !(score >= opt_.min_score)) {
    reset();
    return std::nullopt;
  }
  run_ = label == last_ ? run_ + 1 : 1;
  last_ = label;
  if (run_ < opt_.epochs) return std::nullopt;
  reset();
  return label;
}

void MiGate::reset() {
  last_.clear();
  run_ = 0;
}

// ---- free use ---------------------------------------------------------------------------

FreeUseEngine::FreeUseEngine(const SessionConfig& cfg, MiModel model, UiState initial, EventLog& log)
  : cfg_(cfg), model_(std::move(model)), ui_(std::move(initial)), published_(ui_), log_(log),
    conditioner_(cfg.par), detector_(cfg.par), gate_(cfg.gate) {
  model_.validate();
  clock_ = ui_.clock;
}

void FreeUseEngine::begin(const Json& start_payload) {
  log_.append(clock_, "session_start", start_payload);
  log_.append(clock_, "snapshot", {{"role", "initial"}, {"model", serialize_model(model_)}});
  log_.append(clock_, "mode_change", {{"mode", to_string(ui_.mode)}, {"shortcuts", ui_.shortcuts}});
  publish_state();
}

void FreeUseEngine::publish_state() {
  Json entries_json = Json::array();
  for (const auto& e : entries(ui_, cfg_.ui)) entries_json.push_back({{"id", e.id}, {"caption", e.caption}});
  Json overlay = ui_.overlay_return ? Json(to_string(ui_.overlay_return->view)) : Json(nullptr);
  log_.append(clock_, "ui_state",
              {{"view", to_string(ui_.view)},
               {"highlighted", ui_.highlighted},
               {"entries", entries_json},
               {"origin", cfg_.ui.root.items[static_cast<std::size_t>(ui_.origin)].id},
               {"mode", to_string(ui_.mode)},
               {"shortcuts", ui_.shortcuts},
               {"overlay_over", overlay},
               {"ring_start", ui_.ring_start},
               {"dwell", view_dwell(ui_.view, cfg_.ui)}});
  published_ = ui_;
}

void FreeUseEngine::publish_if_changed() {
  if (!same_view(ui_, published_)) publish_state();
}

void FreeUseEngine::advance(double t) {
  if (t < clock_) throw std::logic_error("session input at t=" + format_double(t) + " precedes the clock");
  for (;;) {
    const double dwell = view_dwell(ui_.view, cfg_.ui);
    const double phase = ui_.clock - ui_.ring_start;
    const double next = ui_.ring_start + (std::floor(phase / dwell + kBoundaryEps) + 1.0) * dwell;
    if (next > t) break;
    ui_ = tick(ui_, next - ui_.clock, cfg_.ui);
    clock_ = std::max(clock_, next);
    publish_if_changed();
  }
  if (t > ui_.clock) ui_ = tick(ui_, t - ui_.clock, cfg_.ui);
  clock_ = t;
}

void FreeUseEngine::apply(const UiEvent& e) {
  const View before = ui_.view;
  UiOutcome out = on_event(ui_, e, cfg_.ui);
  for (const auto& a : out.actions)
    log_.append(clock_, "action",
                {{"kind", a.kind}, {"value", a.value}, {"source", to_string(e.kind)}, {"view", to_string(before)}});
  for (const auto& n : out.notices) log_.append(clock_, "notice", {{"text", n}});
  ui_ = std::move(out.state);
  publish_if_changed();
}

void FreeUseEngine::pupil(const PupilSample& s) {
  advance(s.timestamp);
  const auto normalized = conditioner_.push(s);
  Json norm = Json::array();
  for (const auto& n : normalized) norm.push_back({n.timestamp, n.value, n.valid});
  log_.append(clock_, "pupil_sample", {{"area", optional_number(s.area)}, {"valid", s.valid}, {"normalized", norm}});
  for (const auto& n : normalized) {
    const DetectorUpdate u = detector_.push(n);
    if (u.closed)
      log_.append(clock_, "par_event",
                  {{"phase", "closed"}, {"onset", u.closed->onset}, {"duration", u.closed->duration},
                   {"depth", u.closed->depth}});
    if (u.opened) {
      log_.append(clock_, "par_event", {{"phase", "opened"}, {"onset", *u.opened}});
      apply(UiEvent::par(clock_));
    }
  }
}

void FreeUseEngine::epoch(double start, double end, const SpdMatrix& cov, const Label& truth) {
  advance(end);
  const Classification c = classify(cov, model_);
  log_.append(clock_, "eeg_epoch", {{"start", start}, {"label", truth}, {"cov", covariance_to_json(cov)}});
  log_.append(clock_, "classification", {{"label", c.label}, {"score", c.score}, {"distances", c.distances}});
  if (ui_.mode != UiMode::multimodal) return;
  if (const auto intent = gate_.push(c.label, c.score)) apply(UiEvent::mi(clock_, *intent));
}

void FreeUseEngine::command(const OperatorCommand& c) {
  log_.append(clock_, "operator", command_to_json(c));
  if (c.command == "inject_par") apply(UiEvent::par(clock_));
  else if (c.command == "inject_mi") apply(UiEvent::mi(clock_, c.label));
  else if (c.command == "press_button") apply(UiEvent::button(clock_));
}

void FreeUseEngine::finish(double t) {
  advance(std::max(t, clock_));
  log_.append(clock_, "snapshot", {{"role", "final"}, {"model", serialize_model(model_)}});
}

// ---- training ---------------------------------------------------------------------------

TrainingEngine::TrainingEngine(const SessionConfig& cfg, const MiModel& model, ProgressState prior, EventLog& log)
  : cfg_(cfg), initial_(model), prior_(std::move(prior)),
    session_(with_active(cfg.protocol, prior_.active_tasks), model, prior_.progress), log_(log) {}

void TrainingEngine::begin(const Json& start_payload) {
  log_.append(clock_, "session_start", start_payload);
  log_.append(clock_, "snapshot", {{"role", "initial"}, {"model", serialize_model(initial_)}});
}

void TrainingEngine::trial_start(double t, int index, const Label& task) {
  clock_ = t;
  trial_index_ = index;
  session_.begin_trial(task);
  log_.append(clock_, "trial", {{"phase", "start"}, {"index", index}, {"task", task}});
}

void TrainingEngine::epoch(double start, double end, const SpdMatrix& cov) {
  clock_ = end;
  const double score = session_.score_epoch(start, cov);
  log_.append(clock_, "eeg_epoch", {{"start", start}, {"label", session_.current_task()}, {"cov", covariance_to_json(cov)}});
  log_.append(clock_, "feedback", {{"trial", trial_index_}, {"task", session_.current_task()}, {"score", score}});
}

void TrainingEngine::trial_end(double t) {
  clock_ = t;
  const TrialResult& r = session_.end_trial();
  log_.append(clock_, "trial",
              {{"phase", "end"},
               {"index", trial_index_},
               {"task", r.task},
               {"mean_score", r.mean_score},
               {"epochs_used", r.epochs_used},
               {"feedback", r.feedback_samples}});
}

void TrainingEngine::command(const OperatorCommand& c) {
  log_.append(clock_, "operator", command_to_json(c));
  if (is_ui_command(c.command)) log_.append(clock_, "notice", {{"text", c.command + " ignored during training"}});
}

void TrainingEngine::finish(double t) {
  clock_ = std::max(t, clock_);
  const SessionOutcome out = session_.finish();
  after_.active_tasks = out.active_tasks;
  after_.progress = out.progress;
  after_.history = prior_.history;
  after_.history.push_back(out.metrics);
  after_.mode = unlock_multimodal(after_.history, cfg_.thresholds);
  Json metrics = metrics_to_json(out.metrics);
  metrics["trials"] = out.results.size();
  log_.append(clock_, "metrics", metrics);
  log_.append(clock_, "mode_change",
              {{"mode", to_string(after_.mode.mode)}, {"shortcuts", after_.mode.shortcuts}, {"active_tasks", after_.active_tasks}});
  log_.append(clock_, "snapshot", {{"role", "final"}, {"model", serialize_model(session_.model())}});
}

// ---- models ---------------------------------------------------------------------------------

MiModel calibrate_model(const SessionConfig& cfg) {
  SimScenario s = cfg.scenario;
  s.seed = splitmix64(cfg.scenario.seed ^ kCalibrationStream);
  s.duration = cfg.classifier.calibration_seconds;
  s.drift.reset();
  s.eeg.schedule.clear();
  std::vector<Label> classes{kIdle};
  for (const auto& t : cfg.protocol.curriculum)
    if (t != kIdle) classes.push_back(t);
  std::vector<Label> cycle;
  for (std::size_t i = 1; i < classes.size(); ++i) {
    cycle.push_back(kIdle);
    cycle.push_back(classes[i]);
  }
  if (cycle.empty()) throw ConfigError("nf_training: curriculum needs at least one task besides idle");
  std::size_t k = 0;
  for (double t = 0.0; t + kCalibrationBlock <= s.duration + 1e-9; t += kCalibrationBlock, ++k) {
    const Label& l = cycle[k % cycle.size()];
    if (l != kIdle) s.eeg.schedule.push_back({t, t + kCalibrationBlock, l});
  }
  std::vector<LabeledCovariance> data;
  for (const auto& e : online_covariances(gen_eeg(s), cfg.pipeline)) data.push_back({e.cov, e.label});
  TrainOptions opt;
  opt.classes = classes;
  opt.adaptation_alpha = cfg.classifier.alpha;
  opt.adaptation_period = cfg.classifier.period;
  return train(data, opt);
}

MiModel initial_model(const SessionConfig& cfg) {
  if (!cfg.classifier.model_path) return calibrate_model(cfg);
  MiModel m = load_model(*cfg.classifier.model_path);
  m.adaptation_alpha = cfg.classifier.alpha;
  m.adaptation_period = cfg.classifier.period;
  return m;
}

// ---- driver ---------------------------------------------------------------------------------

namespace {

using SteadyClock = std::chrono::steady_clock;

// Merges operator commands into the input order and paces the session clock
// against the wall clock.
template <class Engine>
class Driver {
public:
  Driver(Engine& engine, ConsoleLink* link, double speed) : engine_(engine), link_(link), speed_(speed) {
    anchor();
  }

  void before(double t) {
    if (link_ == nullptr) return;
    while (speed_ > 0.0) {
      const auto target = wall_ + std::chrono::duration_cast<SteadyClock::duration>(
                                      std::chrono::duration<double>((t - sim_) / speed_));
      const auto now = SteadyClock::now();
      if (now >= target) break;
      std::this_thread::sleep_for(std::min<SteadyClock::duration>(target - now, std::chrono::milliseconds(10)));
      drain();
    }
    drain();
  }

private:
  void anchor() {
    wall_ = SteadyClock::now();
    sim_ = engine_.clock();
  }

  void drain() {
    for (auto& c : link_->poll()) handle(c);
  }

  void handle(const OperatorCommand& c) {
    if (c.command == "pause") {
      engine_.command(c);
      link_->reply(c, "");
      pause();
      return;
    }
    engine_.command(c);
    if (c.command == "set_speed") {
      speed_ = c.factor;
      anchor();
    }
    link_->reply(c, "");
  }

  void pause() {
    std::deque<OperatorCommand> held;
    for (;;) {
      const auto c = link_->wait(100);
      if (!c) {
        if (link_->clients() > 0) continue;
        OperatorCommand resume;
        resume.command = "resume";
        resume.source = "auto";
        engine_.command(resume);
        break;
      }
      if (c->command == "resume") {
        engine_.command(*c);
        link_->reply(*c, "");
        break;
      }
      if (c->command == "pause") {
        link_->reply(*c, "");
        continue;
      }
      held.push_back(*c);
    }
    anchor();
    for (const auto& c : held) handle(c);
  }

  Engine& engine_;
  ConsoleLink* link_;
  double speed_;
  SteadyClock::time_point wall_;
  double sim_{0.0};
};

struct Item {
  double t;
  std::function<void()> apply;
};

void run_items(std::vector<Item>& items, auto& driver) {
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.t < b.t; });
  for (auto& it : items) {
    driver.before(it.t);
    it.apply();
  }
}

UiState initial_ui(const SessionConfig& cfg, const std::optional<ProgressState>& progress) {
  UiState s = initial_state(cfg.ui);
  ModeDecision d;
  if (progress) {
    d = progress->mode;
  } else {
    d.mode = cfg.mode;
    if (cfg.mode == UiMode::multimodal) {
      if (cfg.enabled_shortcuts) d.shortcuts = *cfg.enabled_shortcuts;
      else
        for (const auto& [label, id] : cfg.ui.shortcuts) d.shortcuts.push_back(label);
    }
  }
  return apply_mode(s, d);
}

Json ui_mode_json(const UiState& s) { return Json{{"mode", to_string(s.mode)}, {"shortcuts", s.shortcuts}}; }

UiState ui_from_json(const SessionConfig& cfg, const Json& j) {
  ModeDecision d;
  d.mode = parse_mode(j.at("mode").get<std::string>());
  d.shortcuts = j.at("shortcuts").get<std::vector<Label>>();
  return apply_mode(initial_state(cfg.ui), d);
}

ProgressState fresh_progress(const SessionConfig& cfg) {
  ProgressState p;
  p.active_tasks = cfg.protocol.active_tasks;
  return p;
}

SessionResult run_free_use(const SessionConfig& cfg, ConsoleLink* link) {
  const std::optional<ProgressState> progress =
      cfg.progress_path ? std::optional<ProgressState>(load_progress(*cfg.progress_path)) : std::nullopt;
  const UiState ui = initial_ui(cfg, progress);
  const MiModel model = initial_model(cfg);

  const EegStream eeg = cfg.eeg_file ? read_stream_csv(*cfg.eeg_file) : gen_eeg(cfg.scenario);
  const std::vector<PupilSample> trace = cfg.pupil_file ? read_trace_csv(*cfg.pupil_file) : gen_pupil(cfg.scenario);
  const auto epochs = online_covariances(eeg, cfg.pipeline);
  double duration = cfg.eeg_file || cfg.pupil_file ? eeg.duration() : cfg.scenario.duration;
  if (!trace.empty()) duration = std::max(duration, trace.back().timestamp);

  EventLog log;
  if (link) log.set_observer([link](const std::string& l) { link->publish(l); });
  FreeUseEngine engine(cfg, model, ui, log);
  Driver<FreeUseEngine> driver(engine, link, cfg.speed);
  if (link && cfg.wait_for_console) link->wait_ready();
  engine.begin(Json{{"session", "free_use"}, {"config", config_to_json(cfg)}, {"ui", ui_mode_json(ui)}});

  std::vector<Item> items;
  items.reserve(trace.size() + epochs.size());
  for (const auto& s : trace) items.push_back({s.timestamp, [&engine, s] { engine.pupil(s); }});
  for (const auto& e : epochs) items.push_back({e.end, [&engine, &e] { engine.epoch(e.start, e.end, e.cov, e.label); }});
  run_items(items, driver);
  driver.before(duration);
  engine.finish(duration);
  return {SessionKind::free_use, log.lines(), engine.model(), std::nullopt};
}

SessionResult run_training(const SessionConfig& cfg, ConsoleLink* link) {
  const ProgressState prior = cfg.progress_path ? load_progress(*cfg.progress_path) : fresh_progress(cfg);
  const TrialProtocol protocol = with_active(cfg.protocol, prior.active_tasks);
  const MiModel model = initial_model(cfg);

  NfScenario scenario{cfg.scenario, cfg.compliance};
  const EegStream eeg = cfg.eeg_file ? read_stream_csv(*cfg.eeg_file) : simulate_session_eeg(protocol, scenario);
  const auto tasks = trial_sequence(protocol);
  const auto per_trial = static_cast<Eigen::Index>(std::llround(protocol.trial_length * eeg.fs));
  if (eeg.length() < per_trial * static_cast<Eigen::Index>(tasks.size()))
    throw std::runtime_error("training stream shorter than " + std::to_string(tasks.size()) + " trials");

  EventLog log;
  if (link) log.set_observer([link](const std::string& l) { link->publish(l); });
  TrainingEngine engine(cfg, model, prior, log);
  Driver<TrainingEngine> driver(engine, link, cfg.speed);
  if (link && cfg.wait_for_console) link->wait_ready();
  engine.begin(Json{{"session", "training"}, {"config", config_to_json(cfg)}, {"progress", progress_to_json(prior)}});

  std::vector<TrialEpochs> trials;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Eigen::Index first = per_trial * static_cast<Eigen::Index>(i);
    trials.push_back(imagery_epochs(protocol, eeg.slice(first, per_trial), cfg.pipeline, static_cast<double>(first) / eeg.fs));
  }
  const double epoch_len = cfg.pipeline.epoching.epoch_seconds;
  std::vector<Item> items;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const double t0 = protocol.trial_length * static_cast<double>(i);
    const int index = static_cast<int>(i);
    items.push_back({t0, [&engine, t0, index, &tasks] { engine.trial_start(t0, index, tasks[static_cast<std::size_t>(index)]); }});
    for (std::size_t k = 0; k < trials[i].covariances.size(); ++k) {
      const double start = trials[i].times[k];
      const SpdMatrix* cov = &trials[i].covariances[k];
      items.push_back({start + epoch_len, [&engine, start, epoch_len, cov] { engine.epoch(start, start + epoch_len, *cov); }});
    }
    const double t1 = t0 + protocol.trial_length;
    items.push_back({t1, [&engine, t1] { engine.trial_end(t1); }});
  }
  run_items(items, driver);
  const double duration = protocol.trial_length * static_cast<double>(tasks.size());
  driver.before(duration);
  engine.finish(duration);
  return {SessionKind::training, log.lines(), engine.model(), engine.progress()};
}

} // namespace

SessionResult run_session(const SessionConfig& cfg, SessionKind kind, ConsoleLink* link) {
  cfg.validate();
  return kind == SessionKind::training ? run_training(cfg, link) : run_free_use(cfg, link);
}

SessionResult replay(const std::vector<std::string>& lines) {
  if (lines.size() < 2) throw std::runtime_error("replay: log too short");
  const LogEvent start = parse_log_line(lines[0]);
  if (start.kind != "session_start") throw std::runtime_error("replay: log must begin with session_start");
  const LogEvent snap = parse_log_line(lines[1]);
  if (snap.kind != "snapshot") throw std::runtime_error("replay: missing initial snapshot");

  SessionConfig cfg;
  SessionKind kind{};
  MiModel model;
  try {
    cfg = config_from_json(start.payload.at("config"), "");
    kind = parse_session_kind(start.payload.at("session").get<std::string>());
    model = parse_model(snap.payload.at("model").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("replay: malformed session header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("replay: malformed session header: ") + e.what());
  }

  EventLog log;
  bool finished = false;
  auto feed = [&](auto& engine, auto&& on_input) {
    engine.begin(start.payload);
    for (std::size_t i = 2; i < lines.size() && !finished; ++i) {
      const LogEvent e = parse_log_line(lines[i]);
      try {
        if (e.kind == "operator") {
          engine.command(command_from_json(e.payload));
        } else if (e.kind == "snapshot" && e.payload.at("role") == "final") {
          engine.finish(e.t);
          finished = true;
        } else {
          on_input(e);
        }
      } catch (const nlohmann::json::exception& ex) {
        throw std::runtime_error("replay: malformed event " + std::to_string(e.seq) + ": " + ex.what());
      }
    }
  };

  if (kind == SessionKind::free_use) {
    FreeUseEngine engine(cfg, model, ui_from_json(cfg, start.payload.at("ui")), log);
    feed(engine, [&](const LogEvent& e) {
      if (e.kind == "pupil_sample") {
        const auto& a = e.payload.at("area");
        const double area = a.is_null() ? std::numeric_limits<double>::quiet_NaN() : a.get<double>();
        engine.pupil({e.t, area, e.payload.at("valid").get<bool>()});
      } else if (e.kind == "eeg_epoch") {
        engine.epoch(e.payload.at("start").get<double>(), e.t, covariance_from_json(e.payload.at("cov")),
                     e.payload.at("label").get<std::string>());
      }
    });
    if (!finished) throw std::runtime_error("replay: log ends before the session end (stream underrun)");
    return {kind, log.lines(), engine.model(), std::nullopt};
  }

  ProgressState prior;
  try {
    prior = progress_from_json(start.payload.at("progress"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("replay: malformed session header: ") + e.what());
  }
  TrainingEngine engine(cfg, model, prior, log);
  feed(engine, [&](const LogEvent& e) {
    if (e.kind == "trial") {
      if (e.payload.at("phase") == "start")
        engine.trial_start(e.t, e.payload.at("index").get<int>(), e.payload.at("task").get<std::string>());
      else
        engine.trial_end(e.t);
    } else if (e.kind == "eeg_epoch") {
      engine.epoch(e.payload.at("start").get<double>(), e.t, covariance_from_json(e.payload.at("cov")));
    }
  });
  if (!finished) throw std::runtime_error("replay: log ends before the session end (stream underrun)");
  return {kind, log.lines(), engine.model(), engine.progress()};
}

void write_session_outputs(const SessionConfig& cfg, const SessionResult& r) {
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  std::string text;
  for (const auto& l : r.log) text += l + "\n";
  write_text_file((dir / "session.jsonl").string(), text);
  snapshot_model(r.model, (dir / "model.txt").string());
  if (r.progress) write_text_file((dir / "progress.json").string(), progress_to_json(*r.progress).dump(2) + "\n");
}

PerformanceMetrics metrics_from_log(const std::vector<std::string>& lines) {
  std::vector<LabeledCovariance> labeled;
  std::optional<MiModel> final_model;
  for (const auto& l : lines) {
    const LogEvent e = parse_log_line(l);
    try {
      if (e.kind == "eeg_epoch") {
        labeled.push_back({covariance_from_json(e.payload.at("cov")), e.payload.at("label").get<std::string>()});
      } else if (e.kind == "snapshot" && e.payload.at("role") == "final") {
        final_model = parse_model(e.payload.at("model").get<std::string>());
      }
    } catch (const nlohmann::json::exception& ex) {
      throw std::runtime_error("malformed event " + std::to_string(e.seq) + ": " + ex.what());
    }
  }
  if (!final_model) throw std::runtime_error("log has no final model snapshot");
  return performance_metrics(labeled, *final_model);
}

} // namespace parbci
