#include "parbci/nf.hpp"

#include "parbci/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace parbci {

namespace {

constexpr double kTimeEps = 1e-9;
constexpr std::uint64_t kComplianceStream = 0x6e66; // sub-stream id of the trial compliance draws

Eigen::Index samples_for(double seconds, double fs) { return static_cast<Eigen::Index>(std::llround(seconds * fs)); }

} // namespace

void TrialProtocol::validate() const {
  for (double d : {phases.rest, phases.cue, phases.imagery, phases.inter_trial})
    if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("trial phases must be >= 0");
  if (!(phases.imagery > 0.0)) throw std::invalid_argument("imagery phase must be > 0");
  if (!(trial_length <= kMaxTrialLength))
    throw std::invalid_argument("trial_length " + std::to_string(trial_length) + " s exceeds 20 s");
  if (std::abs(phases.sum() - trial_length) > kTimeEps)
    throw std::invalid_argument("trial phases must sum to trial_length");
  if (trials_per_run < 1) throw std::invalid_argument("trials_per_run must be >= 1");
  if (curriculum.empty()) throw std::invalid_argument("curriculum is empty");
  if (active_tasks.empty()) throw std::invalid_argument("no active task");
  if (std::set<Label>(curriculum.begin(), curriculum.end()).size() != curriculum.size())
    throw std::invalid_argument("curriculum tasks must be distinct");
  std::set<Label> seen;
  for (const auto& t : active_tasks) {
    if (std::find(curriculum.begin(), curriculum.end(), t) == curriculum.end())
      throw std::invalid_argument("active task '" + t + "' is not in the curriculum");
    if (!seen.insert(t).second) throw std::invalid_argument("duplicate active task '" + t + "'");
  }
  if (unlock.min_runs < 1) throw std::invalid_argument("unlock criterion needs min_runs >= 1");
}

void PipelineOptions::validate() const {
  if (!(0.0 < low_hz && low_hz < high_hz)) throw std::invalid_argument("pipeline band must satisfy 0 < low < high");
  if (order < 1) throw std::invalid_argument("pipeline filter order must be >= 1");
  if (!(epoching.epoch_seconds > 0.0)) throw std::invalid_argument("epoch length must be > 0");
  if (!(epoching.overlap_fraction >= 0.0 && epoching.overlap_fraction < 1.0))
    throw std::invalid_argument("overlap fraction must be in [0, 1)");
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw std::invalid_argument("shrinkage must be in [0, 1]");
}

std::vector<EpochCovariance> online_covariances(const EegStream& s, const PipelineOptions& pipe, double offset) {
  pipe.validate();
  const EegStream filtered = causal_bandpass(s, pipe.low_hz, pipe.high_hz, pipe.order);
  std::vector<EpochCovariance> out;
  for (const auto& e : epoch_stream(filtered, pipe.epoching)) {
    const double start = offset + e.start_time;
    out.push_back({start, start + pipe.epoching.epoch_seconds, covariance(e, pipe.shrinkage), e.label});
  }
  return out;
}

double feedback_score(const SpdMatrix& c, const MiModel& m, const Label& target) {
  const int k = m.class_index(target);
  if (k < 0) throw std::invalid_argument("feedback target '" + target + "' is not a model class");
  if (m.prototypes.size() < 2) throw std::invalid_argument("feedback needs at least 2 classes");
  const double d_target = riemannian_distance(c, m.prototypes[static_cast<std::size_t>(k)]);
  double d_other = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.prototypes.size(); ++i)
    if (static_cast<int>(i) != k) d_other = std::min(d_other, riemannian_distance(c, m.prototypes[i]));
  const double den = d_other + d_target;
  return den == 0.0 ? 0.0 : (d_other - d_target) / den;
}

TrialEpochs imagery_epochs(const TrialProtocol& p, const EegStream& trial, const PipelineOptions& pipe,
                           double stream_offset) {
  p.validate();
  pipe.validate();
  const Eigen::Index need = samples_for(p.trial_length, trial.fs);
  if (trial.length() < need)
    throw std::invalid_argument("trial stream too short: " + std::to_string(trial.duration()) + " s < " +
                                std::to_string(p.trial_length) + " s");
  const EegStream filtered = causal_bandpass(trial.slice(0, need), pipe.low_hz, pipe.high_hz, pipe.order);
  const Eigen::Index first = samples_for(p.phases.imagery_start(), trial.fs);
  const Eigen::Index count = samples_for(p.phases.imagery, trial.fs);
  TrialEpochs out;
  for (const auto& e : epoch_stream(filtered.slice(first, count), pipe.epoching)) {
    out.times.push_back(stream_offset + p.phases.imagery_start() + e.start_time);
    out.covariances.push_back(covariance(e, pipe.shrinkage));
  }
  if (out.covariances.empty()) throw std::invalid_argument("imagery phase shorter than one epoch");
  return out;
}

namespace {

TrialResult summarize(const Label& task, std::vector<double> times, std::vector<double> scores) {
  TrialResult r;
  r.task = task;
  r.epochs_used = static_cast<int>(scores.size());
  r.mean_score = scores.empty() ? 0.0 : std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  r.feedback_times = std::move(times);
  r.feedback_samples = std::move(scores);
  return r;
}

} // namespace

TrialResult run_trial(const TrialProtocol& p, const Label& task, const EegStream& stream, const MiModel& m,
                      const PipelineOptions& pipe) {
  if (std::find(p.active_tasks.begin(), p.active_tasks.end(), task) == p.active_tasks.end())
    throw std::invalid_argument("task '" + task + "' is not active");
  if (m.class_index(task) < 0) throw std::invalid_argument("task '" + task + "' is not a model class");
  const TrialEpochs ep = imagery_epochs(p, stream, pipe);
  std::vector<double> scores;
  for (const auto& c : ep.covariances) scores.push_back(feedback_score(c, m, task));
  return summarize(task, ep.times, std::move(scores));
}

std::vector<Label> trial_sequence(const TrialProtocol& p) {
  p.validate();
  std::vector<Label> out;
  for (int i = 0; i < p.trials_per_run; ++i) out.push_back(p.active_tasks[static_cast<std::size_t>(i) % p.active_tasks.size()]);
  return out;
}

EegStream simulate_session_eeg(const TrialProtocol& p, const NfScenario& scenario) {
  if (!(scenario.compliance >= 0.0 && scenario.compliance <= 1.0))
    throw std::invalid_argument("compliance must be in [0, 1]");
  const auto tasks = trial_sequence(p);
  SimScenario s = scenario.sim;
  s.duration = p.trial_length * static_cast<double>(tasks.size());
  s.eeg.schedule.clear();
  Rng rng = Rng::derive(s.seed, kComplianceStream);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const bool performed = rng.uniform() < scenario.compliance;
    if (tasks[i] == kIdle || !performed) continue;
    const double start = p.trial_length * static_cast<double>(i) + p.phases.imagery_start();
    s.eeg.schedule.push_back({start, start + p.phases.imagery, tasks[i]});
  }
  return gen_eeg(s);
}

bool TrainingProgress::criterion_met(const Label& task, const UnlockCriterion& c) const {
  const auto it = run_means.find(task);
  if (it == run_means.end() || static_cast<int>(it->second.size()) < c.min_runs) return false;
  return std::all_of(it->second.end() - c.min_runs, it->second.end(),
                     [&](double v) { return v >= c.min_mean_score; });
}

std::vector<Label> next_active_tasks(const TrialProtocol& p, const TrainingProgress& progress) {
  std::vector<Label> active = p.active_tasks;
  const bool all_met = std::all_of(active.begin(), active.end(),
                                   [&](const Label& t) { return progress.criterion_met(t, p.unlock); });
  if (!all_met) return active;
  for (const auto& t : p.curriculum) {
    if (std::find(active.begin(), active.end(), t) == active.end()) {
      active.push_back(t);
      break;
    }
  }
  return active;
}

TrainingSession::TrainingSession(const TrialProtocol& p, const MiModel& m, TrainingProgress progress)
  : protocol_(p), model_(m), progress_(std::move(progress)) {
  p.validate();
  m.validate();
  for (const auto& t : p.active_tasks)
    if (m.class_index(t) < 0) throw std::invalid_argument("active task '" + t + "' is not a model class");
}

void TrainingSession::begin_trial(const Label& task) {
  if (in_trial_) throw std::logic_error("trial already open");
  if (std::find(protocol_.active_tasks.begin(), protocol_.active_tasks.end(), task) == protocol_.active_tasks.end())
    throw std::invalid_argument("task '" + task + "' is not active");
  task_ = task;
  times_.clear();
  scores_.clear();
  in_trial_ = true;
}

double TrainingSession::score_epoch(double time, const SpdMatrix& c) {
  if (!in_trial_) throw std::logic_error("no trial open");
  const double score = feedback_score(c, model_, task_);
  model_ = accumulate(model_, c, task_);
  labeled_.push_back({c, task_});
  times_.push_back(time);
  scores_.push_back(score);
  return score;
}

const TrialResult& TrainingSession::end_trial() {
  if (!in_trial_) throw std::logic_error("no trial open");
  in_trial_ = false;
  results_.push_back(summarize(task_, std::move(times_), std::move(scores_)));
  times_.clear();
  scores_.clear();
  return results_.back();
}

SessionOutcome TrainingSession::finish() {
  if (in_trial_) throw std::logic_error("trial still open");
  for (auto& buf : model_.pending) buf.clear();
  SessionOutcome out;
  out.metrics = performance_metrics(labeled_, model_);
  out.model = model_;
  out.results = results_;
  out.progress = progress_;
  for (const auto& task : protocol_.active_tasks) {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : results_) {
      if (r.task != task) continue;
      sum += r.mean_score;
      ++n;
    }
    if (n > 0) out.progress.run_means[task].push_back(sum / n);
  }
  out.active_tasks = next_active_tasks(protocol_, out.progress);
  return out;
}

SessionOutcome run_session_epochs(const TrialProtocol& p, const MiModel& m, std::span<const Label> tasks,
                                  std::span<const TrialEpochs> trials, const TrainingProgress& progress) {
  if (tasks.size() != trials.size()) throw std::invalid_argument("one task label per trial required");
  TrainingSession session(p, m, progress);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    session.begin_trial(tasks[i]);
    for (std::size_t k = 0; k < trials[i].covariances.size(); ++k)
      session.score_epoch(trials[i].times[k], trials[i].covariances[k]);
    session.end_trial();
  }
  return session.finish();
}

SessionOutcome run_session(const TrialProtocol& p, const MiModel& m, const NfScenario& scenario,
                           const TrainingProgress& progress, const PipelineOptions& pipe) {
  const auto tasks = trial_sequence(p);
  const EegStream eeg = simulate_session_eeg(p, scenario);
  const Eigen::Index per_trial = samples_for(p.trial_length, eeg.fs);
  std::vector<TrialEpochs> trials;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Eigen::Index first = per_trial * static_cast<Eigen::Index>(i);
    trials.push_back(imagery_epochs(p, eeg.slice(first, per_trial), pipe, static_cast<double>(first) / eeg.fs));
  }
  return run_session_epochs(p, m, tasks, trials, progress);
}

} // namespace parbci
