#include "parbci/eeg.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

using namespace parbci;

namespace {

EegStream sine_stream(double fs, double f_hz, double seconds, int channels = 1, double amp = 1.0) {
  EegStream s;
  s.fs = fs;
  const auto n = static_cast<Eigen::Index>(std::llround(seconds * fs));
  s.samples.resize(channels, n);
  for (int ch = 0; ch < channels; ++ch)
    for (Eigen::Index t = 0; t < n; ++t)
      s.samples(ch, t) = amp * std::sin(2.0 * std::numbers::pi * f_hz * static_cast<double>(t) / fs + ch);
  return s;
}

// Amplitude of the sine component at f over samples [from, end), by projection.
double amplitude_at(const EegStream& s, double f_hz, Eigen::Index from, int ch = 0) {
  double c = 0.0, q = 0.0;
  const Eigen::Index n = s.length() - from;
  for (Eigen::Index t = from; t < s.length(); ++t) {
    const double ph = 2.0 * std::numbers::pi * f_hz * static_cast<double>(t) / s.fs;
    c += s.samples(ch, t) * std::cos(ph);
    q += s.samples(ch, t) * std::sin(ph);
  }
  return 2.0 * std::hypot(c, q) / static_cast<double>(n);
}

// Polynomial product of the section numerators/denominators.
std::pair<std::vector<double>, std::vector<double>> to_transfer_function(const BandpassDesign& d) {
  std::vector<double> b{1.0}, a{1.0};
  auto mul = [](const std::vector<double>& p, std::array<double, 3> q) {
    std::vector<double> r(p.size() + 2, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < 3; ++j) r[i + j] += p[i] * q[j];
    return r;
  };
  for (const auto& s : d.sections) {
    b = mul(b, {s.b0, s.b1, s.b2});
    a = mul(a, {1.0, s.a1, s.a2});
  }
  return {b, a};
}

} // namespace

// Reference coefficients and filtfilt outputs below were produced once with
// scipy.signal (butter(4, [8, 30], 'band', fs=fs) and sosfiltfilt) and frozen.
TEST_CASE("Butterworth band-pass design matches the reference table") {
  struct Ref {
    double fs;
    std::array<double, 9> b;
    std::array<double, 9> a;
  };
  const std::array<Ref, 2> refs{{
      {256.0,
       {0.0028667707471255097, 0.0, -0.01146708298850204, 0.0, 0.017200624482753047, 0.0,
        -0.011467082988502039, 0.0, 0.0028667707471255097},
       {1.0, -6.113603796968329, 16.75527932899326, -26.91614909099109, 27.738817353236907,
        -18.783903950420232, 8.162994538952265, -2.0821337321748623, 0.23892392845869073}},
      {250.0,
       {0.003111903604586018, 0.0, -0.01244761441834407, 0.0, 0.01867142162751612, 0.0,
        -0.012447614418344072, 0.0, 0.003111903604586018},
       {1.0, -6.05903931754089, 16.477002761774525, -26.29778298555704, 26.962405954137374,
        -18.18889327788422, 7.884918019206033, -2.008955584579793, 0.2306118374731466}},
  }};
  for (const auto& ref : refs) {
    const auto d = design_butterworth_bandpass(ref.fs, 8.0, 30.0, 4);
    REQUIRE(d.sections.size() == 4);
    const auto [b, a] = to_transfer_function(d);
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(std::abs(b[i] - ref.b[i]) < 1e-12);
      CHECK(std::abs(a[i] - ref.a[i]) < 1e-9);
    }
    CHECK(std::norm(frequency_response(d, 8.0)) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(std::norm(frequency_response(d, 30.0)) == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("filtfilt reproduces the frozen zero-phase reference output") {
  struct Ref {
    double fs;
    std::array<std::pair<int, double>, 9> y;
  };
  const std::array<Ref, 2> refs{{
      {256.0,
       {{{0, 0.05648375888190449}, {1, 0.37226060760314594}, {10, 0.22812205248865342},
         {100, -0.9299959221263917}, {255, -0.29901956430639476}, {256, 1.57844838167831e-05},
         {400, -1.0001823968883805}, {510, -0.2644972757529383}, {511, -0.1842113977573499}}}},
      {250.0,
       {{{0, 0.0552681127176069}, {1, 0.3773911720572649}, {10, 0.15144899911435078},
         {100, -0.9498351431994669}, {255, 0.9876825757664986}, {256, 0.9686541996210019},
         {400, 0.9491266864102981}, {510, 0.6631412443449338}, {511, 0.1832658772678657}}}},
  }};
  for (const auto& ref : refs) {
    std::vector<double> x(512);
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double t = static_cast<double>(n) / ref.fs;
      x[n] = std::sin(2 * std::numbers::pi * 12 * t) + 0.5 * std::sin(2 * std::numbers::pi * 40 * t) +
             0.3 * std::cos(2 * std::numbers::pi * 3 * t) + 0.1 * t;
    }
    const auto y = filtfilt(design_butterworth_bandpass(ref.fs, 8.0, 30.0, 4), x);
    for (const auto& [i, v] : ref.y) CHECK(std::abs(y[static_cast<std::size_t>(i)] - v) < 1e-6);
  }
}

TEST_CASE("band-pass amplitude follows the analytic response") {
  for (double fs : {256.0, 250.0}) {
    const auto d = design_butterworth_bandpass(fs, 8.0, 30.0, 4);
    // Zero-phase: the magnitude response enters twice.
    const double g20 = std::norm(frequency_response(d, 20.0));
    const double g50 = std::norm(frequency_response(d, 50.0));
    CHECK(g20 >= 0.95);
    CHECK(20.0 * std::log10(g50) <= -20.0);

    const auto skip = static_cast<Eigen::Index>(fs);
    const auto in20 = sine_stream(fs, 20.0, 8.0);
    const double a20 = amplitude_at(bandpass(in20, 8.0, 30.0, 4), 20.0, skip);
    CHECK(a20 >= 0.95);
    CHECK(a20 == doctest::Approx(g20).epsilon(1e-3));

    const auto in50 = sine_stream(fs, 50.0, 8.0);
    const double a50 = amplitude_at(bandpass(in50, 8.0, 30.0, 4), 50.0, skip);
    CHECK(20.0 * std::log10(a50) <= -20.0);
  }
}

TEST_CASE("causal band-pass: single-pass magnitude, causality, block equivalence") {
  const double fs = 256.0;
  const auto d = design_butterworth_bandpass(fs, 8.0, 30.0, 4);
  const auto in = sine_stream(fs, 20.0, 8.0);
  const double a = amplitude_at(causal_bandpass(in, 8.0, 30.0, 4), 20.0, 512);
  CHECK(a == doctest::Approx(std::abs(frequency_response(d, 20.0))).epsilon(1e-3));

  // Output up to sample k depends only on input up to k.
  auto late = in;
  late.samples.rightCols(100).setZero();
  const auto full = causal_bandpass(in, 8.0, 30.0, 4);
  const auto cut = causal_bandpass(late, 8.0, 30.0, 4);
  const Eigen::Index keep = in.length() - 100;
  CHECK((full.samples.leftCols(keep) - cut.samples.leftCols(keep)).cwiseAbs().maxCoeff() == 0.0);

  // Equals sosfilt from rest with the state carried across blocks.
  std::vector<double> row(static_cast<std::size_t>(in.length()));
  for (Eigen::Index t = 0; t < in.length(); ++t) row[static_cast<std::size_t>(t)] = in.samples(0, t);
  std::vector<double> state(2 * d.sections.size(), 0.0);
  sosfilt(d, std::span(row).first(700), state);
  sosfilt(d, std::span(row).subspan(700), state);
  for (Eigen::Index t = 0; t < in.length(); ++t) REQUIRE(row[static_cast<std::size_t>(t)] == full.samples(0, t));
}

TEST_CASE("band-pass linearity, errors and repeated filtering") {
  EegStream zero;
  zero.fs = 256.0;
  zero.samples = Matrix::Zero(3, 300);
  CHECK(bandpass(zero, 8.0, 30.0, 4).samples.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(bandpass(zero, 8.0, 130.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(bandpass(zero, 0.0, 30.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(bandpass(zero, 30.0, 8.0, 4), std::invalid_argument);

  // Gains compose multiplicatively; the second pass moves the amplitude no
  // more than the first pass did.
  const auto in = sine_stream(256.0, 11.0, 8.0);
  const auto once = bandpass(in, 8.0, 30.0, 4);
  const auto twice = bandpass(once, 8.0, 30.0, 4);
  const double a0 = amplitude_at(in, 11.0, 256);
  const double a1 = amplitude_at(once, 11.0, 256);
  const double a2 = amplitude_at(twice, 11.0, 256);
  CHECK(std::abs(a2 - a1) <= std::abs(a1 - a0) + 1e-6);
  CHECK(a2 / a0 == doctest::Approx((a1 / a0) * (a1 / a0)).epsilon(1e-3));
}

TEST_CASE("epoch counts follow the step arithmetic") {
  const auto s256 = sine_stream(256.0, 10.0, 2.0);
  const auto e256 = epoch_stream(s256);
  CHECK(e256.size() == 7);
  CHECK(e256[1].start_sample == 64);
  CHECK(e256[0].data.cols() == 128);

  const auto s250 = sine_stream(250.0, 10.0, 2.0);
  const auto e250 = epoch_stream(s250);
  CHECK(e250.size() == 7);
  CHECK(e250[1].start_sample == 62);
  CHECK(e250[0].data.cols() == 125);

  CHECK(epoch_stream(sine_stream(256.0, 10.0, 0.4)).empty());
  CHECK_THROWS_AS(epoch_stream(s256, {0.5, 1.0}), std::invalid_argument);
}

TEST_CASE("epochs are slices of the stream and carry majority labels") {
  auto s = sine_stream(256.0, 10.0, 3.0, 2);
  s.label_track.assign(static_cast<std::size_t>(s.length()), kIdle);
  for (Eigen::Index t = 300; t < 600; ++t) s.label_track[static_cast<std::size_t>(t)] = "right_hand";
  const auto epochs = epoch_stream(s);
  for (std::size_t k = 0; k < epochs.size(); ++k) {
    const auto start = static_cast<Eigen::Index>(k) * 64;
    CHECK(epochs[k].start_sample == start);
    CHECK(epochs[k].data == s.samples.middleCols(start, 128));
  }
  // Window [256, 384): 84 right_hand vs 44 idle.
  CHECK(epochs[4].label == "right_hand");
  // Window [192, 320): 20 right_hand.
  CHECK(epochs[3].label == kIdle);

  const std::vector<Label> tie{"a", "a", "b", "b"};
  CHECK(majority_label(tie) == kIdle);
  const std::vector<Label> win{"a", "b", "b"};
  CHECK(majority_label(win) == "b");
}

TEST_CASE("streaming epocher matches batch epoching for any block partition") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (double fs : {256.0, 250.0}) {
    EegStream s;
    s.fs = fs;
    s.samples.resize(4, 1500);
    for (Eigen::Index i = 0; i < s.samples.size(); ++i) s.samples.data()[i] = nd(rng);
    s.label_track.resize(1500, kIdle);
    for (std::size_t t = 500; t < 900; ++t) s.label_track[t] = "left_hand";
    const auto batch = epoch_stream(s);

    StreamingEpocher ep(fs, 4);
    std::vector<Epoch> streamed;
    std::uniform_int_distribution<Eigen::Index> bd(1, 97);
    for (Eigen::Index pos = 0; pos < s.length();) {
      const Eigen::Index n = std::min(bd(rng), s.length() - pos);
      const auto sub = s.slice(pos, n);
      for (auto& e : ep.push(sub.samples, sub.label_track)) streamed.push_back(std::move(e));
      pos += n;
    }
    REQUIRE(streamed.size() == batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
      CHECK(streamed[k].start_sample == batch[k].start_sample);
      CHECK(streamed[k].label == batch[k].label);
      CHECK(streamed[k].data == batch[k].data);
    }
  }
}

TEST_CASE("covariance estimator") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd;
  Matrix noise(8, 1024);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = nd(rng);
  const SpdMatrix c = covariance(noise, 0.0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      if (i != j) CHECK(std::abs(c(i, j)) < 0.15);

  Matrix rank1(4, 200);
  for (Eigen::Index t = 0; t < 200; ++t) rank1.col(t).setConstant(nd(rng));
  const SpdMatrix r = covariance(rank1, 0.1);
  CHECK(r.min_eigenvalue() > 0.0);
  CHECK_THROWS_AS(covariance(rank1, 0.0), std::invalid_argument);

  try {
    (void)covariance(Matrix::Zero(4, 64), 0.1);
    FAIL("expected degenerate epoch");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()) == "degenerate epoch");
  }

  Matrix shifted = noise;
  for (int ch = 0; ch < 8; ++ch) shifted.row(ch).array() += 100.0 * (ch + 1);
  CHECK((covariance(shifted, 0.1).entries() - covariance(noise, 0.1).entries()).cwiseAbs().maxCoeff() < 1e-9);

  const Matrix raw = covariance(noise, 0.0).entries();
  const Matrix full = covariance(noise, 1.0).entries();
  CHECK(full == Matrix(Matrix::Identity(8, 8) * (raw.trace() / 8.0)));
  CHECK_THROWS_AS(covariance(Matrix::Zero(4, 1), 0.1), std::invalid_argument);
}

TEST_CASE("stream CSV round-trips exactly") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 30.0);
  EegStream s;
  s.fs = 250.0;
  s.channel_names = {"C3", "Cz", "C4"};
  s.samples.resize(3, 100);
  for (Eigen::Index i = 0; i < s.samples.size(); ++i) s.samples.data()[i] = nd(rng);
  s.label_track.assign(100, kIdle);
  s.label_track[40] = "feet";
  const auto path = (std::filesystem::temp_directory_path() / "parbci_eeg_roundtrip.csv").string();
  write_stream_csv(path, s);
  const auto back = read_stream_csv(path);
  CHECK(back.fs == s.fs);
  CHECK(back.channel_names == s.channel_names);
  CHECK(back.samples == s.samples);
  CHECK(back.label_track == s.label_track);
  std::filesystem::remove(path);
}
