// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include "parbci/session.hpp"
#include "parbci/spd.hpp"

#include "support/random_spd.hpp"
#include "support/sim_data.hpp"
#include "support/spd_oracle.hpp"
#include "support/ui_model.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

using namespace parbci;
using namespace parbci::testing;

namespace {

// Pinned tolerances and budgets.
constexpr double kInvarianceTol = 1e-7;
constexpr double kMeanTol = 1e-6;
constexpr double kAxiomTol = 1e-9;
constexpr double kClosedFormTol = 1e-9;
constexpr double kSpdBudget = 10.0;
constexpr double kMdmBudget = 30.0;
constexpr double kMdmAccuracy = 0.90;
constexpr double kAdaptMargin = 0.05;
constexpr double kOnsetMatch = 0.25; // s, detected onset vs scheduled onset
constexpr double kNoisyDetection = 0.95;
constexpr double kLatencyBudget = 5.0;
constexpr int kUiDepth = 12;
constexpr double kMaxTrial = 20.0;

struct Verdict {
  bool pass{false};
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

Verdict spd_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  double worst_axiom = 0.0, worst_inv = 0.0, worst_mean = 0.0;
  bool symmetric = true, triangle = true;
  for (int i = 0; i < 100; ++i) {
    const int dim = 2 + i % 7;
    const auto a = random_spd(rng, dim), b = random_spd(rng, dim), c = random_spd(rng, dim);
    const double ab = riemannian_distance(a, b);
    symmetric = symmetric && ab == riemannian_distance(b, a);
    worst_axiom = std::max(worst_axiom, riemannian_distance(a, a));
    triangle = triangle && ab <= riemannian_distance(a, c) + riemannian_distance(c, b) + kAxiomTol;

    const Matrix w = random_invertible(rng, dim);
    worst_inv = std::max(worst_inv, std::abs(riemannian_distance(congruence(w, a), congruence(w, b)) - ab));
    const SpdMatrix ai(Matrix(a.entries().inverse())), bi(Matrix(b.entries().inverse()));
    worst_inv = std::max(worst_inv, std::abs(riemannian_distance(ai, bi) - ab));

    const std::vector<SpdMatrix> ms{a, b, c};
    const std::vector<Matrix> raw{a.entries(), b.entries(), c.entries()};
    const std::vector<double> wts{1.0, 0.5 + (i % 3), 1.5};
    worst_mean = std::max(worst_mean, max_abs_diff(frechet_mean(ms, wts).entries(), oracle::frechet_mean_gd(raw, wts)));
  }
  const double elapsed = seconds_since(t0);
  return {symmetric && triangle && worst_axiom < kAxiomTol && worst_inv < kInvarianceTol && worst_mean < kMeanTol &&
              elapsed < kSpdBudget,
          "100 instances dims 2-8, d(A,A) max " + fmt(worst_axiom) + ", invariance max " + fmt(worst_inv) +
              ", mean vs oracle max " + fmt(worst_mean) + ", " + fmt(elapsed) + " s"};
}

Verdict closed_forms() {
  const auto i2 = SpdMatrix::identity(2);
  const double e2 = std::exp(2.0);
  const double d = riemannian_distance(i2, SpdMatrix::diagonal(std::vector<double>{e2, e2}));
  const auto four = SpdMatrix::diagonal(std::vector<double>{4.0, 4.0});
  const Matrix two = 2.0 * Matrix::Identity(2, 2);
  const double mid = max_abs_diff(geodesic(i2, four, 0.5).entries(), two);
  const std::vector<SpdMatrix> pair{i2, four};
  const double mean = max_abs_diff(frechet_mean(pair).entries(), two);
  const double derr = std::abs(d - 2.0 * std::numbers::sqrt2);
  return {derr < kClosedFormTol && mid < kClosedFormTol && mean < kClosedFormTol,
          "|d - 2 sqrt2| " + fmt(derr) + ", midpoint err " + fmt(mid) + ", mean err " + fmt(mean)};
}

Verdict mdm_accuracy() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = labeled_covariances(gen_eeg(mi_scenario(7, 240.0)));
  const std::size_t half = data.size() / 2;
  const auto m = train(std::span(data).first(half));
  int ok = 0;
  for (std::size_t i = half; i < half + 200; ++i) ok += classify(data[i].cov, m).label == data[i].label;
  const double acc = ok / 200.0;
  const double elapsed = seconds_since(t0);
  return {acc >= kMdmAccuracy && elapsed < kMdmBudget,
          "held-out accuracy " + fmt(acc) + " on 200 epochs (idle + 2 tasks, erd 0.3, seed 7), " + fmt(elapsed) + " s"};
}

Verdict adaptation() {
  const auto mild = drift_experiment(1.5, 1);
  const auto strong = drift_experiment(2.0, 1);
  return {mild.adapted_accuracy >= mild.static_accuracy &&
              strong.adapted_accuracy - strong.static_accuracy >= kAdaptMargin - 1e-12,
          "1.5x: static " + fmt(mild.static_accuracy) + " adapted " + fmt(mild.adapted_accuracy) + "; 2.0x: static " +
              fmt(strong.static_accuracy) + " adapted " + fmt(strong.adapted_accuracy)};
}

struct Detection {
  int scheduled{0};
  int hits{0};
  int false_positives{0};
};

Detection detect_run(SimScenario s) {
  const auto ev = detect_par_events(condition(gen_pupil(s)));
  std::vector<bool> used(ev.size(), false);
  Detection d;
  d.scheduled = static_cast<int>(s.pupil.schedule.size());
  for (const auto& p : s.pupil.schedule) {
    for (std::size_t i = 0; i < ev.size(); ++i) {
      if (!used[i] && std::abs(ev[i].onset - p.onset) <= kOnsetMatch) {
        used[i] = true;
        ++d.hits;
        break;
      }
    }
  }
  for (bool u : used) d.false_positives += !u;
  return d;
}

SimScenario twenty_pars(std::uint64_t seed, bool clean) {
  SimScenario s;
  s.seed = seed;
  s.duration = 166.0;
  for (int k = 0; k < 20; ++k) s.pupil.schedule.push_back({5.0 + 8.0 * k, k % 2 ? 1.5 : 0.6, 0.3});
  if (clean) {
    s.pupil.noise_level = 0.0;
    s.pupil.hippus_amplitude = 0.0;
  }
  return s;
}

Verdict par_detection() {
  const Detection clean = detect_run(twenty_pars(1, true));
  Detection noisy;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Detection d = detect_run(twenty_pars(seed, false));
    noisy.scheduled += d.scheduled;
    noisy.hits += d.hits;
    noisy.false_positives += d.false_positives;
  }
  const double noisy_rate = static_cast<double>(noisy.hits) / noisy.scheduled;

  // 4-class mapping: 20 prompts, 5 of each command, on a clean trace.
  PromptSchedule sch;
  SimScenario s;
  s.seed = 9;
  s.pupil.noise_level = 0.0;
  s.pupil.hippus_amplitude = 0.0;
  std::vector<int> expected;
  for (int k = 0; k < 20; ++k) {
    const double t0 = 6.0 + 8.0 * k;
    sch.prompts.push_back({OnsetWindow{t0, t0 + 3.0}, OnsetWindow{t0 + 3.0, t0 + 6.0}});
    const int cmd = k % 4 + 1;
    s.pupil.schedule.push_back({t0 + (cmd >= 3 ? 3.0 : 0.0) + 1.0, cmd % 2 == 0 ? 1.6 : 0.6, 0.3});
    expected.push_back(cmd);
  }
  s.duration = 6.0 + 8.0 * 20;
  const auto ev = detect_par_events(condition(gen_pupil(s)));
  int mapped = 0;
  for (std::size_t i = 0; i < ev.size() && i < expected.size(); ++i) mapped += classify_par_command(ev[i], sch) == expected[i];
  const bool mapping_exact = ev.size() == expected.size() && mapped == static_cast<int>(expected.size());

  return {clean.hits == clean.scheduled && clean.false_positives == 0 && noisy_rate >= kNoisyDetection && mapping_exact,
          "clean " + std::to_string(clean.hits) + "/" + std::to_string(clean.scheduled) + " fp " +
              std::to_string(clean.false_positives) + "; default noise " + std::to_string(noisy.hits) + "/" +
              std::to_string(noisy.scheduled) + " fp " + std::to_string(noisy.false_positives) + "; 4-class " +
              std::to_string(mapped) + "/20"};
}

SessionConfig caregiver_config() {
  SessionConfig c;
  c.scenario.seed = 7;
  c.scenario.duration = 10.0;
  c.scenario.pupil.schedule = {{5.1, 0.6, 0.3}, {6.2, 0.6, 0.3}};
  return c;
}

Verdict selection_latency() {
  const auto r = run_session(caregiver_config(), SessionKind::free_use);
  double highlighted = -1.0, action = -1.0, first_onset = -1.0;
  for (const auto& line : r.log) {
    const auto e = parse_log_line(line);
    if (action < 0.0 && e.kind == "ui_state" && e.payload.at("view") == "main_menu" && e.payload.at("highlighted") == 0)
      highlighted = e.t;
    if (first_onset < 0.0 && e.kind == "par_event" && e.payload.at("phase") == "opened")
      first_onset = e.payload.at("onset").get<double>();
    if (action < 0.0 && e.kind == "action" && e.payload.at("kind") == kCaregiverAction) action = e.t;
  }
  const bool found = highlighted >= 0.0 && action >= 0.0;
  return {found && action - highlighted < kLatencyBudget,
          found ? "Call caregiver highlighted at " + fmt(highlighted) + " s, action at " + fmt(action) +
                      " s (elapsed " + fmt(action - highlighted) + " s, " + fmt(action - first_onset) +
                      " s from first PAR onset)"
                : "no caregiver action in the log"};
}

Verdict ui_safety() {
  const UiConfig cfg;
  const UiState po = initial_state(cfg);
  const UiState mm = apply_mode(po, {UiMode::multimodal, {"right_hand", "left_hand"}});
  std::size_t states = 0;
  int bad_shape = 0, stuck = 0, mi_effects = 0;
  for (const UiState& start : {po, mm}) {
    const auto reach = reachable(cfg, start, kUiDepth, true);
    states += reach.size();
    for (const auto& [key, s] : reach) {
      const auto e = entries(s, cfg);
      if (s.view == View::confirmation && (e.size() != 4 || e.back().id != kGoBack)) ++bad_shape;
      if (s.view == View::simple_answers && e.size() != 3) ++bad_shape;
      if (steps_to_root(cfg, s) < 0) ++stuck;
    }
  }
  const auto po_reach = reachable(cfg, po, kUiDepth, true);
  const auto po_no_mi = reachable(cfg, po, kUiDepth, false);
  for (const auto& [key, s] : po_reach) {
    for (const char* l : {"right_hand", "left_hand", "feet"}) {
      const auto out = on_event(s, UiEvent::mi(s.clock, l), cfg);
      if (!(out.state == s) || !out.actions.empty()) ++mi_effects;
    }
  }
  const bool same_graph = po_reach.size() == po_no_mi.size();
  return {bad_shape == 0 && stuck == 0 && mi_effects == 0 && same_graph,
          std::to_string(states) + " states to depth 12 (both modes): malformed views " + std::to_string(bad_shape) +
              ", without a PAR path to the root menu " + std::to_string(stuck) + ", mi effects in par_only " +
              std::to_string(mi_effects)};
}

Verdict determinism() {
  SessionConfig free = caregiver_config();
  free.mode = UiMode::multimodal;
  const auto a = run_session(free, SessionKind::free_use);
  const auto b = run_session(free, SessionKind::free_use);
  const auto ra = replay(a.log);

  SessionConfig tr;
  tr.scenario.seed = 11;
  tr.protocol.trials_per_run = 4;
  tr.classifier.calibration_seconds = 64.0;
  const auto t1 = run_session(tr, SessionKind::training);
  const auto t2 = run_session(tr, SessionKind::training);
  const auto rt = replay(t1.log);

  auto ui_actions = [](const std::vector<std::string>& log) {
    std::vector<std::string> out;
    for (const auto& l : log) {
      const auto e = parse_log_line(l);
      if (e.kind == "ui_state" || e.kind == "action") out.push_back(l);
    }
    return out;
  };
  const bool ok = a.log == b.log && ra.log == a.log && ui_actions(ra.log) == ui_actions(a.log) && t1.log == t2.log &&
                  rt.log == t1.log;
  return {ok, "free use " + std::to_string(a.log.size()) + " events, training " + std::to_string(t1.log.size()) +
                  " events: repeat runs and replays byte-identical " + (ok ? "yes" : "no")};
}

Verdict trial_protocol() {
  TrialProtocol at_limit;
  at_limit.phases = {2.0, 1.0, 15.0, 2.0};
  at_limit.trial_length = kMaxTrial;
  TrialProtocol over;
  over.phases = {2.0, 1.0, 15.5, 2.0};
  over.trial_length = kMaxTrial + 0.5;
  bool limit_ok = true;
  try {
    at_limit.validate();
  } catch (const std::invalid_argument&) {
    limit_ok = false;
  }
  try {
    over.validate();
    limit_ok = false;
  } catch (const std::invalid_argument&) {
  }

  std::vector<LabeledCovariance> data;
  for (const auto& e : online_covariances(gen_eeg(mi_scenario(5, 120.0)))) data.push_back({e.cov, e.label});
  const MiModel m = train(data);
  TrialProtocol p;
  p.curriculum = {kIdle, "right_hand", "left_hand"};
  int pos_ok = 0, neg_ok = 0;
  double pos_min = 1.0, neg_max = -1.0;
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    for (bool performed : {true, false}) {
      SimScenario s;
      s.seed = seed;
      s.duration = p.trial_length;
      if (performed) s.eeg.schedule = {{p.phases.imagery_start(), p.phases.imagery_start() + p.phases.imagery, "right_hand"}};
      const double score = run_trial(p, "right_hand", gen_eeg(s), m).mean_score;
      if (performed) {
        pos_ok += score > 0.0;
        pos_min = std::min(pos_min, score);
      } else {
        neg_ok += score <= 0.0;
        neg_max = std::max(neg_max, score);
      }
    }
  }
  return {limit_ok && pos_ok == 3 && neg_ok == 3,
          std::string("20 s accepted and 20.5 s rejected ") + (limit_ok ? "yes" : "no") + "; positive controls " +
              std::to_string(pos_ok) + "/3 (min " + fmt(pos_min) + "), negative " + std::to_string(neg_ok) +
              "/3 (max " + fmt(neg_max) + ")"};
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"spd-geometry-suite", spd_suite},   {"commuting-closed-forms", closed_forms},
      {"mdm-accuracy", mdm_accuracy},      {"adaptation-benefit", adaptation},
      {"par-detection", par_detection},    {"selection-latency", selection_latency},
      {"ui-safety", ui_safety},            {"determinism-replay", determinism},
      {"trial-protocol", trial_protocol},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
