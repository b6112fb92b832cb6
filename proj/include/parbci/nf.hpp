#pragma once

#include "parbci/eeg.hpp"
#include "parbci/mdm.hpp"
#include "parbci/sim.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace parbci {

inline constexpr double kMaxTrialLength = 20.0;

struct TrialPhases {
  double rest{2.0};
  double cue{1.0};
  double imagery{4.0}; // feedback is given during this phase
  double inter_trial{2.0};

  double sum() const { return rest + cue + imagery + inter_trial; }
  double imagery_start() const { return rest + cue; }
};

struct UnlockCriterion {
  int min_runs{2};
  double min_mean_score{0.3};
};

struct TrialProtocol {
  double trial_length{9.0};
  TrialPhases phases;
  int trials_per_run{8};
  std::vector<Label> active_tasks{kIdle, "right_hand"};
  std::vector<Label> curriculum{kIdle, "right_hand", "left_hand", "feet"};
  UnlockCriterion unlock;

  // Phases sum to trial_length, trial_length <= 20 s, active tasks are
  // distinct curriculum members. Throws std::invalid_argument.
  void validate() const;
};

// Band-pass, epoching and covariance settings shared by the online loop.
struct PipelineOptions {
  double low_hz{8.0};
  double high_hz{30.0};
  int order{4};
  EpochingOptions epoching;
  double shrinkage{0.1};

  void validate() const;
};

struct EpochCovariance {
  double start{0.0}; // s
  double end{0.0};   // s, when the epoch becomes available
  SpdMatrix cov;
  Label label;
};

// Online feature path: causal band-pass from rest, epoching, shrinkage
// covariance. Times are on the stream clock shifted by `offset`.
std::vector<EpochCovariance> online_covariances(const EegStream& s, const PipelineOptions& pipe = {},
                                                double offset = 0.0);

// (d_other - d_target) / (d_other + d_target); d_other is the smallest
// distance to any other prototype. Throws std::invalid_argument for an
// unknown target.
double feedback_score(const SpdMatrix& c, const MiModel& m, const Label& target);

struct TrialEpochs {
  std::vector<double> times; // epoch start, s on the stream clock
  std::vector<SpdMatrix> covariances;
};

// Imagery-phase epochs of a trial stream that starts at the trial onset. The
// causal filter runs from the trial onset, so rest and cue settle it.
// Throws std::invalid_argument when the stream is shorter than the trial.
TrialEpochs imagery_epochs(const TrialProtocol& p, const EegStream& trial, const PipelineOptions& pipe = {},
                           double stream_offset = 0.0);

struct TrialResult {
  Label task;
  std::vector<double> feedback_times;
  std::vector<double> feedback_samples; // one per epoch step, in [-1, 1]
  double mean_score{0.0};
  int epochs_used{0};
};

TrialResult run_trial(const TrialProtocol& p, const Label& task, const EegStream& stream, const MiModel& m,
                      const PipelineOptions& pipe = {});

// Simulated user for a training session: scenario.eeg carries the signal
// parameters (its schedule is replaced by the trial cues), `compliance` is the
// probability that the user performs the cued task rather than resting.
struct NfScenario {
  SimScenario sim;
  double compliance{1.0};
};

// Cue labels of one run: trials_per_run trials round-robin over active_tasks.
std::vector<Label> trial_sequence(const TrialProtocol& p);

// Session EEG with ERD during the imagery phase of each performed trial.
EegStream simulate_session_eeg(const TrialProtocol& p, const NfScenario& scenario);

// Per-task history of run means (one entry per session).
struct TrainingProgress {
  std::map<Label, std::vector<double>> run_means;

  bool criterion_met(const Label& task, const UnlockCriterion& c) const;
};

// Active set after a session: the next curriculum task is appended when every
// active task meets the unlock criterion. Tasks are never removed.
std::vector<Label> next_active_tasks(const TrialProtocol& p, const TrainingProgress& progress);

struct SessionOutcome {
  MiModel model;
  PerformanceMetrics metrics;
  std::vector<TrialResult> results;
  TrainingProgress progress;
  std::vector<Label> active_tasks; // for the next session
};

// Incremental form of a training session: trials are opened, scored epoch by
// epoch and closed in order. Each epoch is scored with the current model and
// then fed to accumulate() under the trial's cue label.
class TrainingSession {
public:
  TrainingSession(const TrialProtocol& p, const MiModel& m, TrainingProgress progress = {});

  void begin_trial(const Label& task);
  double score_epoch(double time, const SpdMatrix& c); // returns the feedback sample
  const TrialResult& end_trial();
  // Metrics, run means and the next active set. Pending adaptation is discarded.
  SessionOutcome finish();

  const MiModel& model() const { return model_; }
  bool in_trial() const { return in_trial_; }
  const Label& current_task() const { return task_; }

private:
  TrialProtocol protocol_;
  MiModel model_;
  TrainingProgress progress_;
  std::vector<LabeledCovariance> labeled_;
  std::vector<TrialResult> results_;
  Label task_;
  std::vector<double> times_, scores_;
  bool in_trial_{false};
};

// Scores each epoch with the current model and feeds it to accumulate() under
// its cue label. Adaptation left pending at the end is discarded.
SessionOutcome run_session_epochs(const TrialProtocol& p, const MiModel& m, std::span<const Label> tasks,
                                  std::span<const TrialEpochs> trials, const TrainingProgress& progress = {});

SessionOutcome run_session(const TrialProtocol& p, const MiModel& m, const NfScenario& scenario,
                           const TrainingProgress& progress = {}, const PipelineOptions& pipe = {});

} // namespace parbci
