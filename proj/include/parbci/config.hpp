#pragma once

#include "parbci/nf.hpp"
#include "parbci/pupil.hpp"
#include "parbci/sim.hpp"
#include "parbci/ui.hpp"

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace parbci {

using Json = nlohmann::ordered_json;

inline constexpr int kConfigVersion = 1;

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ClassifierConfig {
  double alpha{0.1};
  int period{16};
  std::optional<std::string> model_path; // snapshot; calibrated from simulation when absent
  double calibration_seconds{120.0};
};

struct MiGateOptions {
  double min_score{0.5};
  int epochs{3}; // consecutive epochs with the same non-idle label
};

struct SessionConfig {
  // sim_signals
  SimScenario scenario;
  std::optional<std::string> eeg_file;   // recorded stream instead of the generator
  std::optional<std::string> pupil_file; // recorded trace instead of the generator
  // eeg_pipeline
  PipelineOptions pipeline;
  // mi_classifier
  ClassifierConfig classifier;
  // pupil_pipeline
  ParConfig par;
  // ui_flow
  UiConfig ui;
  UiMode mode{UiMode::par_only};
  std::optional<std::vector<Label>> enabled_shortcuts; // default: every bound label
  ModeThresholds thresholds;
  // nf_training
  TrialProtocol protocol;
  double compliance{1.0};
  std::optional<std::string> progress_path;
  // session_hub
  std::string output_dir{"."};
  std::string listen{"127.0.0.1:0"};
  MiGateOptions gate;
  double speed{0.0}; // wall-clock pacing factor; 0 runs unpaced
  std::size_t queue_capacity{1024};
  bool wait_for_console{false};

  // Throws ConfigError naming the section and the violated constraint.
  void validate() const;
};

// Sections: sim_signals, eeg_pipeline, mi_classifier, pupil_pipeline,
// ui_flow, nf_training, session_hub, plus "version". Unknown keys are errors.
// Relative paths resolve against `base_dir`.
SessionConfig config_from_json(const Json& j, const std::string& base_dir = ".");
Json config_to_json(const SessionConfig& c);

// Reads, parses and validates; every failure is a ConfigError.
SessionConfig load_config(const std::string& path);

// PerformanceMetrics as {classes, dispersion, consistency, separability}.
Json metrics_to_json(const PerformanceMetrics& m);
PerformanceMetrics metrics_from_json(const Json& j);

// Training progress carried between sessions (progress.json).
struct ProgressState {
  std::vector<Label> active_tasks;
  TrainingProgress progress;
  std::vector<PerformanceMetrics> history;
  ModeDecision mode;
};

Json progress_to_json(const ProgressState& p);
ProgressState progress_from_json(const Json& j);
ProgressState load_progress(const std::string& path);

} // namespace parbci
