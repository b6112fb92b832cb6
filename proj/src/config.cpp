#include "parbci/config.hpp"

#include "parbci/text_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace parbci {

namespace fs = std::filesystem;

namespace {

// Object reader that records consumed keys and rejects the rest.
class Section {
public:
  Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    used_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    used_.insert(key);
    if (it->is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = std::move(v);
  }

  const Json* child(const char* key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  std::string path(const char* key) const { return name_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(name_ + ": unknown key '" + k + "'");
  }

private:
  const Json& j_;
  std::string name_;
  std::set<std::string> used_;
};

const Json& array_at(const Json* j, const std::string& where) {
  if (!j->is_array()) throw ConfigError(where + ": expected an array");
  return *j;
}

std::string resolve(const std::string& base, const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute() || base.empty() || base == ".") return path.lexically_normal().string();
  return (fs::path(base) / path).lexically_normal().string();
}

void read_eeg(const Json& j, EegSimParams& p) {
  Section s(j, "sim_signals.eeg");
  s.get("fs", p.fs);
  s.get("channels", p.channels);
  s.get("erd_depth", p.erd_depth);
  s.get("noise_level", p.noise_level);
  s.get("background_uv", p.background_uv);
  s.get("mu_uv", p.mu_uv);
  s.get("beta_uv", p.beta_uv);
  s.get("mu_hz", p.mu_hz);
  s.get("beta_hz", p.beta_hz);
  s.get("linewidth_hz", p.linewidth_hz);
  s.get("rhythm_coherence", p.rhythm_coherence);
  s.get("noise_common_share", p.noise_common_share);
  if (const Json* sch = s.child("schedule")) {
    p.schedule.clear();
    for (const auto& e : array_at(sch, s.path("schedule"))) {
      Section iv(e, s.path("schedule[]"));
      TaskInterval t;
      iv.get("start", t.start);
      iv.get("end", t.end);
      iv.get("label", t.label);
      iv.finish();
      p.schedule.push_back(t);
    }
  }
  s.finish();
}

void read_pupil(const Json& j, PupilSimParams& p) {
  Section s(j, "sim_signals.pupil");
  s.get("rate", p.rate);
  s.get("baseline_area", p.baseline_area);
  s.get("hippus_amplitude", p.hippus_amplitude);
  s.get("hippus_hz", p.hippus_hz);
  s.get("noise_level", p.noise_level);
  s.get("edge_seconds", p.edge_seconds);
  if (const Json* sch = s.child("schedule")) {
    p.schedule.clear();
    for (const auto& e : array_at(sch, s.path("schedule"))) {
      Section ps(e, s.path("schedule[]"));
      ParSpec par;
      ps.get("onset", par.onset);
      ps.get("duration", par.duration);
      ps.get("depth", par.depth);
      ps.finish();
      p.schedule.push_back(par);
    }
  }
  if (const Json* bl = s.child("blinks")) {
    p.blinks.clear();
    for (const auto& e : array_at(bl, s.path("blinks"))) {
      Section bs(e, s.path("blinks[]"));
      BlinkSpec b;
      bs.get("start", b.start);
      bs.get("duration", b.duration);
      bs.finish();
      p.blinks.push_back(b);
    }
  }
  s.finish();
}

void read_sim(const Json& j, SessionConfig& c, const std::string& base) {
  Section s(j, "sim_signals");
  s.get("seed", c.scenario.seed);
  s.get("duration", c.scenario.duration);
  if (const Json* e = s.child("eeg")) read_eeg(*e, c.scenario.eeg);
  if (const Json* p = s.child("pupil")) read_pupil(*p, c.scenario.pupil);
  if (const Json* d = s.child("drift")) {
    if (d->is_null()) {
      c.scenario.drift.reset();
    } else {
      Section ds(*d, "sim_signals.drift");
      DriftSpec drift;
      ds.get("time", drift.time);
      ds.get("factor", drift.factor);
      ds.finish();
      c.scenario.drift = drift;
    }
  }
  s.get_optional("eeg_file", c.eeg_file);
  s.get_optional("pupil_file", c.pupil_file);
  if (c.eeg_file) c.eeg_file = resolve(base, *c.eeg_file);
  if (c.pupil_file) c.pupil_file = resolve(base, *c.pupil_file);
  s.finish();
}

void read_pipeline(const Json& j, PipelineOptions& p) {
  Section s(j, "eeg_pipeline");
  s.get("low_hz", p.low_hz);
  s.get("high_hz", p.high_hz);
  s.get("order", p.order);
  s.get("epoch_seconds", p.epoching.epoch_seconds);
  s.get("overlap_fraction", p.epoching.overlap_fraction);
  s.get("shrinkage", p.shrinkage);
  s.finish();
}

void read_classifier(const Json& j, ClassifierConfig& c, const std::string& base) {
  Section s(j, "mi_classifier");
  s.get("alpha", c.alpha);
  s.get("period", c.period);
  s.get_optional("model", c.model_path);
  s.get("calibration_seconds", c.calibration_seconds);
  if (c.model_path) c.model_path = resolve(base, *c.model_path);
  s.finish();
}

void read_par(const Json& j, ParConfig& p) {
  Section s(j, "pupil_pipeline");
  s.get("max_gap", p.max_gap);
  s.get("baseline_window", p.baseline_window);
  s.get("smoothing", p.smoothing);
  s.get("theta_on", p.theta_on);
  s.get("theta_off", p.theta_off);
  s.get("hold", p.hold);
  s.finish();
}

void read_ui(const Json& j, SessionConfig& c) {
  Section s(j, "ui_flow");
  s.get("dwell", c.ui.root.dwell);
  s.get("confirmation_dwell", c.ui.confirmation_dwell);
  s.get("speller_letters", c.ui.speller_letters);
  if (const Json* menu = s.child("menu")) {
    c.ui.root.items.clear();
    for (const auto& e : array_at(menu, s.path("menu"))) {
      Section is(e, s.path("menu[]"));
      MenuItem it;
      is.get("id", it.id);
      is.get("caption", it.caption);
      is.get("action", it.action);
      is.finish();
      c.ui.root.items.push_back(it);
    }
  }
  if (const Json* sc = s.child("shortcuts")) {
    c.ui.shortcuts.clear();
    for (const auto& e : array_at(sc, s.path("shortcuts"))) {
      Section ss(e, s.path("shortcuts[]"));
      std::pair<Label, std::string> b;
      ss.get("label", b.first);
      ss.get("item", b.second);
      ss.finish();
      c.ui.shortcuts.push_back(b);
    }
  }
  std::string mode = to_string(c.mode);
  s.get("mode", mode);
  try {
    c.mode = parse_mode(mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("ui_flow.mode: ") + e.what());
  }
  s.get_optional("enabled_shortcuts", c.enabled_shortcuts);
  if (const Json* th = s.child("thresholds")) {
    Section ts(*th, "ui_flow.thresholds");
    ts.get("sessions", c.thresholds.sessions);
    ts.get("separability", c.thresholds.separability);
    ts.get("consistency", c.thresholds.consistency);
    ts.finish();
  }
  s.finish();
}

void read_training(const Json& j, SessionConfig& c, const std::string& base) {
  Section s(j, "nf_training");
  TrialProtocol& p = c.protocol;
  s.get("trial_length", p.trial_length);
  if (const Json* ph = s.child("phases")) {
    Section ps(*ph, "nf_training.phases");
    ps.get("rest", p.phases.rest);
    ps.get("cue", p.phases.cue);
    ps.get("imagery", p.phases.imagery);
    ps.get("inter_trial", p.phases.inter_trial);
    ps.finish();
  }
  s.get("trials_per_run", p.trials_per_run);
  s.get("active_tasks", p.active_tasks);
  s.get("curriculum", p.curriculum);
  if (const Json* u = s.child("unlock")) {
    Section us(*u, "nf_training.unlock");
    us.get("min_runs", p.unlock.min_runs);
    us.get("min_mean_score", p.unlock.min_mean_score);
    us.finish();
  }
  s.get("compliance", c.compliance);
  s.get_optional("progress", c.progress_path);
  if (c.progress_path) c.progress_path = resolve(base, *c.progress_path);
  s.finish();
}

void read_hub(const Json& j, SessionConfig& c, const std::string& base) {
  Section s(j, "session_hub");
  s.get("output_dir", c.output_dir);
  c.output_dir = resolve(base, c.output_dir);
  s.get("listen", c.listen);
  if (const Json* g = s.child("mi_gate")) {
    Section gs(*g, "session_hub.mi_gate");
    gs.get("min_score", c.gate.min_score);
    gs.get("epochs", c.gate.epochs);
    gs.finish();
  }
  s.get("speed", c.speed);
  s.get("queue_capacity", c.queue_capacity);
  s.get("wait_for_console", c.wait_for_console);
  s.finish();
}

template <class F>
void wrap(const char* section, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(section) + ": " + e.what());
  }
}

void require_file(const std::optional<std::string>& p, const char* what) {
  if (p && !fs::exists(*p)) throw ConfigError(std::string(what) + ": file not found: " + *p);
}

Json optional_string(const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); }

} // namespace

void SessionConfig::validate() const {
  wrap("sim_signals", [&] { scenario.validate(); });
  if (eeg_file && !scenario.eeg.schedule.empty())
    throw ConfigError("sim_signals: eeg schedule and eeg_file are mutually exclusive");
  wrap("eeg_pipeline", [&] { pipeline.validate(); });
  if (!(pipeline.high_hz < scenario.eeg.fs / 2.0))
    throw ConfigError("eeg_pipeline: high_hz must be below the Nyquist frequency of sim_signals.eeg.fs");
  if (!(classifier.alpha >= 0.0 && classifier.alpha <= 1.0)) throw ConfigError("mi_classifier: alpha must be in [0, 1]");
  if (classifier.period < 1) throw ConfigError("mi_classifier: period must be >= 1");
  if (!(classifier.calibration_seconds > 0.0)) throw ConfigError("mi_classifier: calibration_seconds must be > 0");
  wrap("pupil_pipeline", [&] { par.validate(); });
  wrap("ui_flow", [&] { ui.validate(); });
  if (enabled_shortcuts) {
    for (const auto& l : *enabled_shortcuts)
      if (ui.shortcut_target(l) == nullptr) throw ConfigError("ui_flow: enabled shortcut '" + l + "' is not bound");
  }
  if (thresholds.sessions < 1) throw ConfigError("ui_flow.thresholds: sessions must be >= 1");
  wrap("nf_training", [&] { protocol.validate(); });
  for (const auto& t : protocol.curriculum)
    if (!is_known_task(t)) throw ConfigError("nf_training: unknown task '" + t + "'");
  if (std::find(protocol.curriculum.begin(), protocol.curriculum.end(), kIdle) == protocol.curriculum.end())
    throw ConfigError("nf_training: curriculum must contain idle");
  if (!(compliance >= 0.0 && compliance <= 1.0)) throw ConfigError("nf_training: compliance must be in [0, 1]");
  if (gate.epochs < 1) throw ConfigError("session_hub.mi_gate: epochs must be >= 1");
  if (!(gate.min_score >= -1.0 && gate.min_score <= 1.0))
    throw ConfigError("session_hub.mi_gate: min_score must be in [-1, 1]");
  if (!(speed >= 0.0)) throw ConfigError("session_hub: speed must be >= 0");
  if (queue_capacity < 1) throw ConfigError("session_hub: queue_capacity must be >= 1");
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("session_hub: listen must be host:port");
  try {
    const long long port = parse_int(listen.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::invalid_argument("port out of range");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("session_hub: listen: ") + e.what());
  }
  require_file(eeg_file, "sim_signals.eeg_file");
  require_file(pupil_file, "sim_signals.pupil_file");
  require_file(classifier.model_path, "mi_classifier.model");
  require_file(progress_path, "nf_training.progress");
}

SessionConfig config_from_json(const Json& j, const std::string& base_dir) {
  SessionConfig c;
  Section top(j, "config");
  int version = kConfigVersion;
  top.get("version", version);
  if (version != kConfigVersion)
    throw ConfigError("config version " + std::to_string(version) + " is not supported (expected 1)");
  if (const Json* s = top.child("sim_signals")) read_sim(*s, c, base_dir);
  if (const Json* s = top.child("eeg_pipeline")) read_pipeline(*s, c.pipeline);
  if (const Json* s = top.child("mi_classifier")) read_classifier(*s, c.classifier, base_dir);
  if (const Json* s = top.child("pupil_pipeline")) read_par(*s, c.par);
  if (const Json* s = top.child("ui_flow")) read_ui(*s, c);
  if (const Json* s = top.child("nf_training")) read_training(*s, c, base_dir);
  if (const Json* s = top.child("session_hub")) read_hub(*s, c, base_dir);
  top.finish();
  return c;
}

Json config_to_json(const SessionConfig& c) {
  const auto& e = c.scenario.eeg;
  Json eeg{{"fs", e.fs},
           {"channels", e.channels},
           {"erd_depth", e.erd_depth},
           {"noise_level", e.noise_level},
           {"background_uv", e.background_uv},
           {"mu_uv", e.mu_uv},
           {"beta_uv", e.beta_uv},
           {"mu_hz", e.mu_hz},
           {"beta_hz", e.beta_hz},
           {"linewidth_hz", e.linewidth_hz},
           {"rhythm_coherence", e.rhythm_coherence},
           {"noise_common_share", e.noise_common_share},
           {"schedule", Json::array()}};
  for (const auto& iv : e.schedule) eeg["schedule"].push_back({{"start", iv.start}, {"end", iv.end}, {"label", iv.label}});
  const auto& p = c.scenario.pupil;
  Json pupil{{"rate", p.rate},
             {"baseline_area", p.baseline_area},
             {"hippus_amplitude", p.hippus_amplitude},
             {"hippus_hz", p.hippus_hz},
             {"noise_level", p.noise_level},
             {"edge_seconds", p.edge_seconds},
             {"schedule", Json::array()},
             {"blinks", Json::array()}};
  for (const auto& s : p.schedule) pupil["schedule"].push_back({{"onset", s.onset}, {"duration", s.duration}, {"depth", s.depth}});
  for (const auto& b : p.blinks) pupil["blinks"].push_back({{"start", b.start}, {"duration", b.duration}});
  Json drift = c.scenario.drift ? Json{{"time", c.scenario.drift->time}, {"factor", c.scenario.drift->factor}} : Json(nullptr);

  Json menu = Json::array();
  for (const auto& it : c.ui.root.items) menu.push_back({{"id", it.id}, {"caption", it.caption}, {"action", it.action}});
  Json shortcuts = Json::array();
  for (const auto& [l, id] : c.ui.shortcuts) shortcuts.push_back({{"label", l}, {"item", id}});
  const auto& pr = c.protocol;

  return Json{
      {"version", kConfigVersion},
      {"sim_signals",
       {{"seed", c.scenario.seed},
        {"duration", c.scenario.duration},
        {"eeg", eeg},
        {"pupil", pupil},
        {"drift", drift},
        {"eeg_file", optional_string(c.eeg_file)},
        {"pupil_file", optional_string(c.pupil_file)}}},
      {"eeg_pipeline",
       {{"low_hz", c.pipeline.low_hz},
        {"high_hz", c.pipeline.high_hz},
        {"order", c.pipeline.order},
        {"epoch_seconds", c.pipeline.epoching.epoch_seconds},
        {"overlap_fraction", c.pipeline.epoching.overlap_fraction},
        {"shrinkage", c.pipeline.shrinkage}}},
      {"mi_classifier",
       {{"alpha", c.classifier.alpha},
        {"period", c.classifier.period},
        {"model", optional_string(c.classifier.model_path)},
        {"calibration_seconds", c.classifier.calibration_seconds}}},
      {"pupil_pipeline",
       {{"max_gap", c.par.max_gap},
        {"baseline_window", c.par.baseline_window},
        {"smoothing", c.par.smoothing},
        {"theta_on", c.par.theta_on},
        {"theta_off", c.par.theta_off},
        {"hold", c.par.hold}}},
      {"ui_flow",
       {{"dwell", c.ui.root.dwell},
        {"confirmation_dwell", c.ui.confirmation_dwell},
        {"speller_letters", c.ui.speller_letters},
        {"menu", menu},
        {"shortcuts", shortcuts},
        {"mode", to_string(c.mode)},
        {"enabled_shortcuts", c.enabled_shortcuts ? Json(*c.enabled_shortcuts) : Json(nullptr)},
        {"thresholds",
         {{"sessions", c.thresholds.sessions},
          {"separability", c.thresholds.separability},
          {"consistency", c.thresholds.consistency}}}}},
      {"nf_training",
       {{"trial_length", pr.trial_length},
        {"phases",
         {{"rest", pr.phases.rest},
          {"cue", pr.phases.cue},
          {"imagery", pr.phases.imagery},
          {"inter_trial", pr.phases.inter_trial}}},
        {"trials_per_run", pr.trials_per_run},
        {"active_tasks", pr.active_tasks},
        {"curriculum", pr.curriculum},
        {"unlock", {{"min_runs", pr.unlock.min_runs}, {"min_mean_score", pr.unlock.min_mean_score}}},
        {"compliance", c.compliance},
        {"progress", optional_string(c.progress_path)}}},
      {"session_hub",
       {{"output_dir", c.output_dir},
        {"listen", c.listen},
        {"mi_gate", {{"min_score", c.gate.min_score}, {"epochs", c.gate.epochs}}},
        {"speed", c.speed},
        {"queue_capacity", c.queue_capacity},
        {"wait_for_console", c.wait_for_console}}}};
}

SessionConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  Json j;
  try {
    j = Json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  SessionConfig c = config_from_json(j, fs::path(path).parent_path().string());
  c.validate();
  return c;
}

Json metrics_to_json(const PerformanceMetrics& m) {
  return Json{{"classes", m.classes},
              {"dispersion", m.dispersion},
              {"consistency", m.consistency},
              {"separability", m.separability}};
}

PerformanceMetrics metrics_from_json(const Json& j) {
  PerformanceMetrics m;
  m.classes = j.at("classes").get<std::vector<Label>>();
  m.dispersion = j.at("dispersion").get<std::vector<double>>();
  m.consistency = j.at("consistency").get<std::vector<double>>();
  m.separability = j.at("separability").get<double>();
  if (m.dispersion.size() != m.classes.size() || m.consistency.size() != m.classes.size())
    throw std::runtime_error("metrics record: per-class arrays differ in length");
  return m;
}

Json progress_to_json(const ProgressState& p) {
  Json run_means = Json::object();
  for (const auto& [task, v] : p.progress.run_means) run_means[task] = v;
  Json history = Json::array();
  for (const auto& m : p.history) history.push_back(metrics_to_json(m));
  return Json{{"v", 1},
              {"active_tasks", p.active_tasks},
              {"run_means", run_means},
              {"history", history},
              {"mode", {{"mode", to_string(p.mode.mode)}, {"shortcuts", p.mode.shortcuts}}}};
}

ProgressState progress_from_json(const Json& j) {
  try {
    if (j.at("v").get<int>() != 1) throw std::runtime_error("progress file version mismatch");
    ProgressState p;
    p.active_tasks = j.at("active_tasks").get<std::vector<Label>>();
    for (const auto& [task, v] : j.at("run_means").items()) p.progress.run_means[task] = v.get<std::vector<double>>();
    for (const auto& m : j.at("history")) p.history.push_back(metrics_from_json(m));
    p.mode.mode = parse_mode(j.at("mode").at("mode").get<std::string>());
    p.mode.shortcuts = j.at("mode").at("shortcuts").get<std::vector<Label>>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed progress record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("malformed progress record: ") + e.what());
  }
}

ProgressState load_progress(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open progress file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return progress_from_json(Json::parse(buf.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

} // namespace parbci
