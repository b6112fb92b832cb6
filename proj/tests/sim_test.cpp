#include "parbci/eeg.hpp"
#include "parbci/sim.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

using namespace parbci;

namespace {

constexpr double kPi = std::numbers::pi;

// Welch band power: mean Hann-windowed periodogram over 1 s segments with 50%
// overlap, summed over DFT bins in [lo, hi] Hz.
double welch_band_power(const EegStream& s, int ch, Eigen::Index first, Eigen::Index count, double lo, double hi) {
  const auto seg = static_cast<Eigen::Index>(s.fs);
  std::vector<double> win(static_cast<std::size_t>(seg));
  double wss = 0.0;
  for (Eigen::Index i = 0; i < seg; ++i) {
    win[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(seg));
    wss += win[static_cast<std::size_t>(i)] * win[static_cast<std::size_t>(i)];
  }
  double total = 0.0;
  int segments = 0;
  for (Eigen::Index start = first; start + seg <= first + count; start += seg / 2, ++segments) {
    for (int k = static_cast<int>(std::ceil(lo)); k <= static_cast<int>(std::floor(hi)); ++k) {
      std::complex<double> acc{0.0, 0.0};
      for (Eigen::Index i = 0; i < seg; ++i) {
        const double ph = -2.0 * kPi * k * static_cast<double>(i) / static_cast<double>(seg);
        acc += win[static_cast<std::size_t>(i)] * s.samples(ch, start + i) * std::polar(1.0, ph);
      }
      total += std::norm(acc) / wss;
    }
  }
  return total / segments;
}

Matrix sample_covariance(const Matrix& x) {
  const Matrix c = x.colwise() - x.rowwise().mean();
  return c * c.transpose() / static_cast<double>(x.cols() - 1);
}

double rel_error(const Matrix& a, const Matrix& ref) { return (a - ref).norm() / ref.norm(); }

double filtered_power_gain(const BandpassDesign& d, double f) { return std::pow(std::abs(frequency_response(d, f)), 4); }

SimScenario eeg_scenario(double duration, std::vector<TaskInterval> schedule = {}, std::uint64_t seed = 5) {
  SimScenario s;
  s.seed = seed;
  s.duration = duration;
  s.eeg.schedule = std::move(schedule);
  return s;
}

int channel_index(const EegStream& s, const std::string& name) {
  for (std::size_t i = 0; i < s.channel_names.size(); ++i)
    if (s.channel_names[i] == name) return static_cast<int>(i);
  return -1;
}

} // namespace

TEST_CASE("channel layout") {
  const auto names = default_channel_names(16);
  REQUIRE(names.size() == 16);
  for (int ch = 0; ch < 16; ++ch) {
    const auto g = channel_group(16, ch);
    const char last = names[static_cast<std::size_t>(ch)].back();
    if (g == ChannelGroup::centre) CHECK(last == 'z');
    else if (g == ChannelGroup::left) CHECK((last - '0') % 2 == 1);
    else CHECK((last - '0') % 2 == 0);
  }
  CHECK(default_channel_names(8).size() == 8);
  CHECK(default_channel_names(5).back() == "ch5");
  CHECK(task_group("right_hand") == ChannelGroup::left);
  CHECK(task_group("left_hand") == ChannelGroup::right);
  CHECK(task_group("feet") == ChannelGroup::centre);
  CHECK_FALSE(task_group(kIdle));
  CHECK_FALSE(is_known_task("tongue"));
}

TEST_CASE("empty schedule gives an all-idle stationary stream") {
  const auto s = gen_eeg(eeg_scenario(120.0));
  CHECK(s.channels() == 16);
  CHECK(s.length() == 120 * 256);
  for (const auto& l : s.label_track) CHECK(l == kIdle);
  const Eigen::Index half = s.length() / 2;
  const Matrix a = sample_covariance(s.samples.leftCols(half));
  const Matrix b = sample_covariance(s.samples.rightCols(half));
  CHECK(rel_error(a, b) < 0.1);
}

TEST_CASE("ERD lowers band power on the modulated channel by the set depth") {
  for (const auto& [task, channel] : {std::pair<Label, std::string>{"right_hand", "C3"}, {"left_hand", "C4"}}) {
    const auto s = gen_eeg(eeg_scenario(240.0, {{120.0, 240.0, task}}, 31));
    const int ch = channel_index(s, channel);
    REQUIRE(ch >= 0);
    const auto half = static_cast<Eigen::Index>(120 * 256);
    const double rest = welch_band_power(s, ch, 0, half, 8.0, 30.0);
    const double mi = welch_band_power(s, ch, half, half, 8.0, 30.0);
    CHECK(mi / rest == doctest::Approx(0.7).epsilon(0.1 / 0.7));
    // Opposite hemisphere is untouched.
    const int other = channel_index(s, channel == "C3" ? "C4" : "C3");
    const double ratio_other = welch_band_power(s, other, half, half, 8.0, 30.0) / welch_band_power(s, other, 0, half, 8.0, 30.0);
    CHECK(ratio_other == doctest::Approx(1.0).epsilon(0.1));
  }
}

TEST_CASE("sample covariance converges to the analytic class covariance") {
  const auto d = design_butterworth_bandpass(256.0, 8.0, 30.0, 4);
  for (const Label task : {kIdle, Label("right_hand"), Label("feet")}) {
    std::vector<TaskInterval> sched;
    if (task != kIdle) sched.push_back({0.0, 300.0, task});
    const auto sc = eeg_scenario(300.0, sched, 77);
    const auto raw = gen_eeg(sc);
    CHECK(rel_error(sample_covariance(raw.samples), expected_eeg_covariance(sc.eeg, task, [](double) { return 1.0; })) < 0.1);
    const auto filt = bandpass(raw, 8.0, 30.0, 4);
    const Matrix expected = expected_eeg_covariance(sc.eeg, task, [&](double f) { return filtered_power_gain(d, f); });
    CHECK(rel_error(sample_covariance(filt.samples), expected) < 0.1);
  }
}

TEST_CASE("same seed gives bit-identical streams, sub-streams are independent") {
  auto sc = eeg_scenario(20.0, {{5.0, 10.0, "right_hand"}}, 9);
  const auto a = gen_eeg(sc);
  const auto b = gen_eeg(sc);
  CHECK(a.samples == b.samples);
  CHECK(a.label_track == b.label_track);

  sc.pupil.schedule.push_back({4.0, 1.0, 0.3});
  sc.pupil.noise_level = 0.05;
  CHECK(gen_eeg(sc).samples == a.samples);

  const auto p1 = gen_pupil(sc);
  sc.eeg.erd_depth = 0.9;
  sc.eeg.noise_level = 3.0;
  const auto p2 = gen_pupil(sc);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].area == p2[i].area);

  auto other = eeg_scenario(20.0, {{5.0, 10.0, "right_hand"}}, 10);
  CHECK_FALSE(gen_eeg(other).samples == a.samples);
}

TEST_CASE("property: schedules round-trip through the label track") {
  std::mt19937_64 rng(99);
  const std::array<Label, 3> tasks{"right_hand", "left_hand", "feet"};
  std::uniform_int_distribution<int> quarter(1, 24), pick(0, 2);
  for (int iter = 0; iter < 30; ++iter) {
    std::vector<TaskInterval> sched;
    double t = 0.25 * quarter(rng);
    while (true) {
      const double end = t + 0.25 * quarter(rng);
      if (end > 60.0) break;
      sched.push_back({t, end, tasks[static_cast<std::size_t>(pick(rng))]});
      t = end + 0.25 * quarter(rng);
    }
    auto sc = eeg_scenario(60.0, sched, static_cast<std::uint64_t>(iter));
    sc.eeg.channels = 8;
    const auto s = gen_eeg(sc);
    const auto back = schedule_from_labels(s.label_track, s.fs);
    REQUIRE(back.size() == sched.size());
    for (std::size_t i = 0; i < sched.size(); ++i) {
      CHECK(back[i].start == doctest::Approx(sched[i].start).epsilon(1e-12));
      CHECK(back[i].end == doctest::Approx(sched[i].end).epsilon(1e-12));
      CHECK(back[i].label == sched[i].label);
    }
  }
}

TEST_CASE("drift scales the post-drift covariance by the factor") {
  for (double factor : {1.5, 2.0}) {
    auto sc = eeg_scenario(240.0, {}, 13);
    sc.drift = DriftSpec{120.0, factor};
    const auto s = gen_eeg(sc);
    const auto half = static_cast<Eigen::Index>(120 * 256);
    const Matrix before = sample_covariance(s.samples.leftCols(half));
    const Matrix after = sample_covariance(s.samples.rightCols(half));
    CHECK(rel_error(after, factor * before) < 0.1);
    CHECK(after.trace() / before.trace() == doctest::Approx(factor).epsilon(0.1));
  }
}

TEST_CASE("scenario validation") {
  auto sc = eeg_scenario(30.0, {{1.0, 5.0, "right_hand"}, {4.0, 8.0, "left_hand"}});
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  CHECK_THROWS_AS(gen_eeg(sc), std::invalid_argument);
  sc = eeg_scenario(30.0, {{1.0, 5.0, "tongue"}});
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  sc = eeg_scenario(30.0, {{25.0, 35.0, "feet"}});
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  sc = eeg_scenario(30.0);
  sc.eeg.erd_depth = 1.5;
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  sc = eeg_scenario(30.0);
  sc.pupil.schedule = {{5.0, 1.0, 0.3}, {5.5, 1.0, 0.3}};
  CHECK_THROWS_AS(gen_pupil(sc), std::invalid_argument);
  sc = eeg_scenario(30.0);
  sc.drift = DriftSpec{10.0, -1.0};
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  CHECK_NOTHROW(eeg_scenario(30.0, {{1.0, 5.0, "right_hand"}, {5.0, 8.0, "left_hand"}}).validate());
}

TEST_CASE("pupil trace model") {
  SimScenario sc;
  sc.duration = 20.0;
  sc.pupil.noise_level = 0.0;
  sc.pupil.hippus_amplitude = 0.0;
  sc.pupil.schedule.push_back({5.0, 1.2, 0.3});
  sc.pupil.blinks.push_back({12.0, 0.2});
  const auto tr = gen_pupil(sc);
  REQUIRE(tr.size() == 600);
  const double base = sc.pupil.baseline_area;
  for (const auto& s : tr) {
    const double t = s.timestamp;
    if (t >= 12.0 && t < 12.2) {
      CHECK_FALSE(s.valid);
      continue;
    }
    CHECK(s.valid);
    if (t < 4.85 - 1e-9 || t > 6.35 + 1e-9) CHECK(s.area == doctest::Approx(base));
    if (t >= 5.15 && t <= 6.05) CHECK(s.area == doctest::Approx(0.7 * base));
  }
  // Half-depth at the nominal onset and offset.
  CHECK(pupil_area_model(sc.pupil, 5.0, 0.0) == doctest::Approx(0.85 * base));
  CHECK(pupil_area_model(sc.pupil, 6.2, 0.0) == doctest::Approx(0.85 * base));

  auto noisy = sc;
  noisy.pupil.noise_level = 0.01;
  noisy.pupil.hippus_amplitude = 0.05;
  CHECK(gen_pupil(noisy).size() == tr.size());
  const auto a = gen_pupil(noisy), b = gen_pupil(noisy);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].area == b[i].area);
}

TEST_CASE("closed-loop pupil controls") {
  SUBCASE("negative control: no scheduled events") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SimScenario sc;
      sc.seed = seed;
      sc.duration = 60.0;
      CHECK(detect_par_events(condition(gen_pupil(sc))).empty());
    }
  }
  SUBCASE("positive control: one event at 5 s") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SimScenario sc;
      sc.seed = seed;
      sc.duration = 15.0;
      sc.pupil.schedule.push_back({5.0, 1.2, 0.3});
      const auto ev = detect_par_events(condition(gen_pupil(sc)));
      REQUIRE(ev.size() == 1);
      CHECK(std::abs(ev[0].onset - 5.0) <= 0.1);
    }
  }
}

TEST_CASE("frame rendering follows the trace") {
  SimScenario sc;
  sc.duration = 1.0;
  sc.pupil.blinks.push_back({0.5, 0.1});
  const auto tr = gen_pupil(sc);
  const auto frames = gen_frames(sc, tr);
  REQUIRE(frames.size() == tr.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(frames[i].timestamp == tr[i].timestamp);
    CHECK(frames[i].width == 200);
    CHECK(frames[i].height == 160);
    const auto d = detect_pupil(frames[i]);
    CHECK(d.sample.valid == tr[i].valid);
    if (tr[i].valid) CHECK(std::abs(d.sample.area / tr[i].area - 1.0) < 0.02);
  }
  const auto again = gen_frames(sc, tr);
  CHECK(again[3].intensity == frames[3].intensity);
}
