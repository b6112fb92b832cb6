#include "parbci/sim.hpp"
#include "parbci/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace parbci {

namespace {

constexpr double kPi = std::numbers::pi;

// Stream identifiers for Rng::derive.
constexpr std::uint64_t kEegStream = 0xEE6;
constexpr std::uint64_t kPupilStream = 0x9a91;
constexpr std::uint64_t kFrameStream = 0xF4A3E;

// Octave-spaced first-order low-pass components summed into pink-like noise.
std::vector<double> pink_cutoffs(double fs) {
  std::vector<double> out;
  for (double f = 0.5; f < fs / 2.0; f *= 2.0) out.push_back(f);
  return out;
}

std::string interval_text(double a, double b) {
  std::ostringstream os;
  os << "[" << a << ", " << b << ")";
  return os.str();
}

void check_disjoint(std::vector<std::pair<double, double>> spans, double duration, const char* what) {
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (!(spans[i].second > spans[i].first)) {
      throw std::invalid_argument(std::string(what) + ": empty interval " + interval_text(spans[i].first, spans[i].second));
    }
    if (spans[i].first < 0.0 || spans[i].second > duration + 1e-9) {
      throw std::invalid_argument(std::string(what) + ": interval " + interval_text(spans[i].first, spans[i].second) +
                                  " outside the scenario duration");
    }
    if (i > 0 && spans[i].first < spans[i - 1].second) {
      throw std::invalid_argument(std::string(what) + ": overlapping intervals " +
                                  interval_text(spans[i - 1].first, spans[i - 1].second) + " and " +
                                  interval_text(spans[i].first, spans[i].second));
    }
  }
}

double raised_cosine(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return 0.5 * (1.0 - std::cos(kPi * x));
}

// Composite Simpson rule over [0, fs/2].
double integrate_spectrum(const std::function<double(double)>& density, double fs) {
  const int n = 40000;
  const double h = (fs / 2.0) / n;
  double acc = density(0.0) + density(fs / 2.0);
  for (int i = 1; i < n; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * density(i * h);
  return acc * h / 3.0;
}

} // namespace

// ---- scenario --------------------------------------------------------------------

void SimScenario::validate() const {
  if (!(duration > 0.0)) throw std::invalid_argument("scenario: duration must be > 0");
  if (!(eeg.fs > 0.0)) throw std::invalid_argument("scenario: eeg.fs must be > 0");
  if (eeg.channels < 2) throw std::invalid_argument("scenario: eeg.channels must be >= 2");
  if (!(eeg.erd_depth >= 0.0 && eeg.erd_depth <= 1.0)) {
    throw std::invalid_argument("scenario: eeg.erd_depth must lie in [0, 1]");
  }
  if (!(eeg.noise_level >= 0.0)) throw std::invalid_argument("scenario: eeg.noise_level must be >= 0");
  if (!(eeg.rhythm_coherence >= 0.0 && eeg.rhythm_coherence <= 1.0) ||
      !(eeg.noise_common_share >= 0.0 && eeg.noise_common_share < 1.0)) {
    throw std::invalid_argument("scenario: eeg variance shares must lie in [0, 1)");
  }
  if (!(eeg.mu_hz > 0.0 && eeg.mu_hz < eeg.fs / 2.0 && eeg.beta_hz > 0.0 && eeg.beta_hz < eeg.fs / 2.0)) {
    throw std::invalid_argument("scenario: rhythm frequencies must lie below Nyquist");
  }
  std::vector<std::pair<double, double>> spans;
  for (const auto& iv : eeg.schedule) {
    if (!is_known_task(iv.label)) throw std::invalid_argument("scenario: unknown task label '" + iv.label + "'");
    if (auto g = task_group(iv.label); g && *g == ChannelGroup::centre) {
      bool any = false;
      for (int ch = 0; ch < eeg.channels; ++ch) any |= channel_group(eeg.channels, ch) == ChannelGroup::centre;
      if (!any) throw std::invalid_argument("scenario: task '" + iv.label + "' needs centre channels");
    }
    spans.emplace_back(iv.start, iv.end);
  }
  check_disjoint(spans, duration, "scenario: eeg schedule");

  if (!(pupil.rate > 0.0)) throw std::invalid_argument("scenario: pupil.rate must be > 0");
  if (!(pupil.baseline_area > 0.0)) throw std::invalid_argument("scenario: pupil.baseline_area must be > 0");
  if (!(pupil.hippus_amplitude >= 0.0 && pupil.hippus_amplitude < 1.0)) {
    throw std::invalid_argument("scenario: pupil.hippus_amplitude must lie in [0, 1)");
  }
  if (!(pupil.noise_level >= 0.0)) throw std::invalid_argument("scenario: pupil.noise_level must be >= 0");
  if (!(pupil.edge_seconds > 0.0)) throw std::invalid_argument("scenario: pupil.edge_seconds must be > 0");
  spans.clear();
  for (const auto& p : pupil.schedule) {
    if (!(p.depth > 0.0 && p.depth < 1.0)) throw std::invalid_argument("scenario: PAR depth must lie in (0, 1)");
    if (p.duration < pupil.edge_seconds) {
      throw std::invalid_argument("scenario: PAR duration shorter than its edges");
    }
    spans.emplace_back(p.onset - pupil.edge_seconds / 2.0, p.onset + p.duration + pupil.edge_seconds / 2.0);
  }
  check_disjoint(spans, duration, "scenario: PAR schedule");
  spans.clear();
  for (const auto& b : pupil.blinks) spans.emplace_back(b.start, b.start + b.duration);
  check_disjoint(spans, duration, "scenario: blink schedule");

  if (drift) {
    if (!(drift->factor > 0.0)) throw std::invalid_argument("scenario: drift factor must be > 0");
    if (!(drift->time >= 0.0 && drift->time <= duration)) {
      throw std::invalid_argument("scenario: drift time outside the scenario");
    }
  }
}

ChannelGroup channel_group(int channels, int ch) {
  const int side = std::max(1, channels * 3 / 8);
  if (ch < side) return ChannelGroup::left;
  if (ch >= channels - side) return ChannelGroup::right;
  return ChannelGroup::centre;
}

std::vector<std::string> default_channel_names(int channels) {
  if (channels == 8) return {"FC3", "C3", "CP3", "Cz", "CPz", "FC4", "C4", "CP4"};
  if (channels == 16) {
    return {"FC5", "FC3", "C5", "C3", "CP5", "CP3", "FCz", "Cz", "CPz", "Pz",
            "FC4", "FC6", "C4", "C6", "CP4", "CP6"};
  }
  std::vector<std::string> out;
  for (int i = 0; i < channels; ++i) out.push_back("ch" + std::to_string(i + 1));
  return out;
}

std::optional<ChannelGroup> task_group(const Label& label) {
  if (label == "right_hand") return ChannelGroup::left;
  if (label == "left_hand") return ChannelGroup::right;
  if (label == "feet") return ChannelGroup::centre;
  return std::nullopt;
}

bool is_known_task(const Label& label) { return label == kIdle || task_group(label).has_value(); }

// ---- EEG --------------------------------------------------------------------------

EegStream gen_eeg(const SimScenario& s) {
  s.validate();
  const EegSimParams& p = s.eeg;
  const int nch = p.channels;
  const auto n = static_cast<Eigen::Index>(std::floor(s.duration * p.fs + 1e-9));
  Rng rng = Rng::derive(s.seed, kEegStream);

  EegStream out;
  out.fs = p.fs;
  out.channel_names = default_channel_names(nch);
  out.samples.resize(nch, n);
  out.label_track.assign(static_cast<std::size_t>(n), kIdle);
  for (const auto& iv : p.schedule) {
    const auto first = static_cast<Eigen::Index>(std::ceil(iv.start * p.fs - 1e-9));
    const auto last = static_cast<Eigen::Index>(std::ceil(iv.end * p.fs - 1e-9));
    for (Eigen::Index t = std::max<Eigen::Index>(first, 0); t < std::min(last, n); ++t) {
      out.label_track[static_cast<std::size_t>(t)] = iv.label;
    }
  }

  // Background: per-channel and common pink-like sources.
  const auto cutoffs = pink_cutoffs(p.fs);
  const std::size_t k = cutoffs.size();
  std::vector<double> a(k), g(k);
  for (std::size_t i = 0; i < k; ++i) {
    a[i] = std::exp(-2.0 * kPi * cutoffs[i] / p.fs);
    g[i] = std::sqrt((1.0 + a[i]) / (1.0 - a[i]));
  }
  const int nsrc = nch + 1; // last = common
  std::vector<double> lp(static_cast<std::size_t>(nsrc) * k, 0.0);
  const double bg_scale = p.background_uv * p.noise_level / std::sqrt(static_cast<double>(k));
  const double own = std::sqrt(1.0 - p.noise_common_share);
  const double common = std::sqrt(p.noise_common_share);

  // Rhythms: 2 bands x (1 common oscillator + nch private ones), phase diffusion.
  const std::array<double, 2> freq{p.mu_hz, p.beta_hz};
  const std::array<double, 2> amp{p.mu_uv, p.beta_uv};
  const int nosc = 1 + nch;
  std::vector<double> phase(static_cast<std::size_t>(2 * nosc));
  for (double& ph : phase) ph = 2.0 * kPi * rng.uniform();
  const double phase_step = std::sqrt(2.0 * kPi * p.linewidth_hz / p.fs);
  const double shared = std::sqrt(p.rhythm_coherence);
  const double priv = std::sqrt(1.0 - p.rhythm_coherence);
  const double erd_gain = std::sqrt(1.0 - p.erd_depth);

  // Steady-state start for the low-pass states.
  for (std::size_t i = 0; i < lp.size(); ++i) lp[i] = rng.normal() / g[i % k];

  std::vector<double> bg(static_cast<std::size_t>(nsrc));
  std::vector<int> group(static_cast<std::size_t>(nch));
  for (int ch = 0; ch < nch; ++ch) group[static_cast<std::size_t>(ch)] = static_cast<int>(channel_group(nch, ch));

  for (Eigen::Index t = 0; t < n; ++t) {
    const double time = static_cast<double>(t) / p.fs;
    for (int src = 0; src < nsrc; ++src) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        double& st = lp[static_cast<std::size_t>(src) * k + i];
        st = a[i] * st + (1.0 - a[i]) * rng.normal();
        acc += g[i] * st;
      }
      bg[static_cast<std::size_t>(src)] = acc;
    }
    for (double& ph : phase) ph += phase_step * rng.normal();

    const auto suppressed = task_group(out.label_track[static_cast<std::size_t>(t)]);
    const double drift_gain = (s.drift && time >= s.drift->time) ? std::sqrt(s.drift->factor) : 1.0;
    for (int ch = 0; ch < nch; ++ch) {
      const int grp = group[static_cast<std::size_t>(ch)];
      const double m = (suppressed && static_cast<int>(*suppressed) == grp) ? erd_gain : 1.0;
      double rhythm = 0.0;
      for (int b = 0; b < 2; ++b) {
        const double w = 2.0 * kPi * freq[static_cast<std::size_t>(b)] * time;
        const double gs = std::numbers::sqrt2 * std::cos(w + phase[static_cast<std::size_t>(b * nosc)]);
        const double ps = std::numbers::sqrt2 * std::cos(w + phase[static_cast<std::size_t>(b * nosc + 1 + ch)]);
        rhythm += amp[static_cast<std::size_t>(b)] * (shared * gs + priv * ps);
      }
      const double noise = bg_scale * (own * bg[static_cast<std::size_t>(ch)] + common * bg[static_cast<std::size_t>(nch)]);
      out.samples(ch, t) = drift_gain * (m * rhythm + noise);
    }
  }
  return out;
}

std::vector<TaskInterval> schedule_from_labels(std::span<const Label> labels, double fs) {
  std::vector<TaskInterval> out;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] == kIdle) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    out.push_back({static_cast<double>(i) / fs, static_cast<double>(j) / fs, labels[i]});
    i = j;
  }
  return out;
}

Matrix expected_eeg_covariance(const EegSimParams& p, const Label& label,
                               const std::function<double(double)>& power_gain) {
  const int nch = p.channels;
  const auto cutoffs = pink_cutoffs(p.fs);
  double bg_power = 0.0;
  for (double fc : cutoffs) {
    const double a = std::exp(-2.0 * kPi * fc / p.fs);
    const double unit = (1.0 + a) / (1.0 - a);
    bg_power += integrate_spectrum(
        [&](double f) {
          const double w = 2.0 * kPi * f / p.fs;
          const double h2 = (1.0 - a) * (1.0 - a) / (1.0 - 2.0 * a * std::cos(w) + a * a);
          return (2.0 / p.fs) * h2 * unit * power_gain(f);
        },
        p.fs);
  }
  const double bg_scale = p.background_uv * p.noise_level;
  bg_power *= bg_scale * bg_scale / static_cast<double>(cutoffs.size());

  // Phase diffusion gives a Lorentzian line of half width linewidth/2.
  const double half = p.linewidth_hz / 2.0;
  auto line_power = [&](double f0) {
    return integrate_spectrum(
        [&](double f) {
          const double l = half / kPi / ((f - f0) * (f - f0) + half * half) +
                           half / kPi / ((f + f0) * (f + f0) + half * half);
          return l * power_gain(f);
        },
        p.fs);
  };
  const double rhythm_power = p.mu_uv * p.mu_uv * line_power(p.mu_hz) + p.beta_uv * p.beta_uv * line_power(p.beta_hz);

  const auto suppressed = task_group(label);
  const double erd_gain = std::sqrt(1.0 - p.erd_depth);
  Matrix c = Matrix::Zero(nch, nch);
  for (int i = 0; i < nch; ++i) {
    for (int j = 0; j < nch; ++j) {
      const auto gi = channel_group(nch, i);
      const auto gj = channel_group(nch, j);
      const double mi = (suppressed && *suppressed == gi) ? erd_gain : 1.0;
      const double mj = (suppressed && *suppressed == gj) ? erd_gain : 1.0;
      const double share = p.rhythm_coherence + (i == j ? 1.0 - p.rhythm_coherence : 0.0);
      c(i, j) = mi * mj * share * rhythm_power + bg_power * (p.noise_common_share + (i == j ? 1.0 - p.noise_common_share : 0.0));
    }
  }
  return c;
}

// ---- pupil ------------------------------------------------------------------------

double pupil_area_model(const PupilSimParams& p, double t, double hippus_phase) {
  double area = p.baseline_area * (1.0 + p.hippus_amplitude * std::sin(2.0 * kPi * p.hippus_hz * t + hippus_phase));
  const double e = p.edge_seconds;
  for (const auto& par : p.schedule) {
    const double down = raised_cosine((t - (par.onset - e / 2.0)) / e);
    const double up = raised_cosine((t - (par.onset + par.duration - e / 2.0)) / e);
    area *= 1.0 - par.depth * (down - up);
  }
  return area;
}

std::vector<PupilSample> gen_pupil(const SimScenario& s) {
  s.validate();
  const PupilSimParams& p = s.pupil;
  Rng rng = Rng::derive(s.seed, kPupilStream);
  const double hippus_phase = 2.0 * kPi * rng.uniform();
  const auto n = static_cast<std::size_t>(std::floor(s.duration * p.rate + 1e-9));
  std::vector<PupilSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / p.rate;
    const double noise = rng.normal();
    const bool blink = std::any_of(p.blinks.begin(), p.blinks.end(),
                                   [t](const BlinkSpec& b) { return t >= b.start && t < b.start + b.duration; });
    if (blink) {
      out.push_back({t, 0.0, false});
      continue;
    }
    const double area = pupil_area_model(p, t, hippus_phase) * (1.0 + p.noise_level * noise);
    out.push_back({t, std::max(area, 1.0), true});
  }
  return out;
}

EyeFrame render_eye_frame(double cx, double cy, double semi_a, double semi_b, double angle, double timestamp,
                          const FrameRenderOptions& opt, std::uint64_t noise_seed) {
  EyeFrame f;
  f.width = opt.width;
  f.height = opt.height;
  f.timestamp = timestamp;
  f.intensity.resize(static_cast<std::size_t>(opt.width) * static_cast<std::size_t>(opt.height));
  Rng rng(noise_seed);
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  auto inside = [&](double x, double y) {
    if (semi_a <= 0.0 || semi_b <= 0.0) return false;
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = (dx * ca + dy * sa) / semi_a;
    const double v = (-dx * sa + dy * ca) / semi_b;
    return u * u + v * v <= 1.0;
  };
  for (int y = 0; y < opt.height; ++y) {
    for (int x = 0; x < opt.width; ++x) {
      const int corners = inside(x, y) + inside(x + 1, y) + inside(x, y + 1) + inside(x + 1, y + 1);
      double cover = 0.0;
      if (corners == 4) {
        cover = 1.0;
      } else if (corners > 0) {
        int hits = 0;
        for (int sy = 0; sy < 4; ++sy)
          for (int sx = 0; sx < 4; ++sx) hits += inside(x + (sx + 0.5) / 4.0, y + (sy + 0.5) / 4.0);
        cover = hits / 16.0;
      }
      const double v = opt.background + (opt.pupil - opt.background) * cover + opt.noise_std * rng.normal();
      f.intensity[static_cast<std::size_t>(y * opt.width + x)] =
          static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return f;
}

std::vector<EyeFrame> gen_frames(const SimScenario& s, std::span<const PupilSample> trace, const FrameRenderOptions& opt) {
  std::vector<EyeFrame> out;
  out.reserve(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto seed = splitmix64(s.seed ^ splitmix64(kFrameStream + i));
    const double r = trace[i].valid ? std::sqrt(trace[i].area / kPi) : 0.0;
    out.push_back(render_eye_frame(opt.width / 2.0, opt.height / 2.0, r, r, 0.0, trace[i].timestamp, opt, seed));
  }
  return out;
}

} // namespace parbci
