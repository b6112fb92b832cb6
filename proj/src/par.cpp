#include "parbci/pupil.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace parbci {

namespace {
constexpr double kTimeEps = 1e-9;
}

void ParConfig::validate() const {
  if (!(max_gap >= 0.0)) throw std::invalid_argument("pupil: max_gap must be >= 0");
  if (!(baseline_window > 0.0)) throw std::invalid_argument("pupil: baseline_window must be > 0");
  if (!(smoothing >= 0.0)) throw std::invalid_argument("pupil: smoothing must be >= 0");
  if (!(theta_on > 0.0 && theta_on < theta_off)) {
    throw std::invalid_argument("pupil: thresholds must satisfy 0 < theta_on < theta_off");
  }
  if (!(hold >= 0.0)) throw std::invalid_argument("pupil: hold must be >= 0");
}

// ---- conditioner ---------------------------------------------------------------

PupilConditioner::PupilConditioner(ParConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::optional<double> PupilConditioner::baseline() const {
  if (window_.empty()) return std::nullopt;
  return median_baseline();
}

double PupilConditioner::median_baseline() const {
  std::vector<double> v;
  v.reserve(window_.size());
  for (const auto& [t, a] : window_) v.push_back(a);
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

NormalizedSample PupilConditioner::process_valid(double t, double area) {
  while (!window_.empty() && t - window_.front().first >= cfg_.baseline_window - kTimeEps) window_.pop_front();
  const double provisional = window_.empty() ? area : median_baseline();
  // Constricted samples do not feed the baseline.
  if (area / provisional >= cfg_.theta_on) window_.emplace_back(t, area);
  const double base = window_.empty() ? provisional : median_baseline();
  const double n = area / base;

  while (!smooth_.empty() && t - smooth_.front().first >= cfg_.smoothing - kTimeEps) smooth_.pop_front();
  smooth_.emplace_back(t, n);
  double acc = 0.0;
  for (const auto& [ts, v] : smooth_) acc += v;
  return NormalizedSample{t, acc / static_cast<double>(smooth_.size()), true};
}

std::vector<NormalizedSample> PupilConditioner::push(const PupilSample& s) {
  std::vector<NormalizedSample> out;
  const bool valid = s.valid && s.area > 0.0 && std::isfinite(s.area);
  if (!valid) {
    if (!last_valid_ || masking_) {
      out.push_back({s.timestamp, 0.0, false});
      return out;
    }
    pending_.push_back(s.timestamp);
    if (s.timestamp - last_valid_->timestamp >= cfg_.max_gap - kTimeEps) {
      // The gap can no longer close within max_gap.
      for (double t : pending_) out.push_back({t, 0.0, false});
      pending_.clear();
      masking_ = true;
      smooth_.clear();
    }
    return out;
  }

  if (!pending_.empty()) {
    const double t0 = last_valid_->timestamp;
    const double a0 = last_valid_->area;
    const double span = s.timestamp - t0;
    if (span > cfg_.max_gap + kTimeEps) {
      for (double t : pending_) out.push_back({t, 0.0, false});
      smooth_.clear();
    } else {
      for (double t : pending_) {
        const double f = span > 0.0 ? (t - t0) / span : 0.0;
        out.push_back(process_valid(t, a0 + f * (s.area - a0)));
      }
    }
    pending_.clear();
  }
  masking_ = false;
  out.push_back(process_valid(s.timestamp, s.area));
  last_valid_ = PupilSample{s.timestamp, s.area, true};
  return out;
}

std::vector<NormalizedSample> PupilConditioner::flush() {
  std::vector<NormalizedSample> out;
  for (double t : pending_) out.push_back({t, 0.0, false});
  pending_.clear();
  return out;
}

std::vector<NormalizedSample> condition(std::span<const PupilSample> series, const ParConfig& cfg) {
  const bool any_valid = std::any_of(series.begin(), series.end(), [](const PupilSample& s) {
    return s.valid && s.area > 0.0 && std::isfinite(s.area);
  });
  if (!any_valid) throw std::invalid_argument("condition: series has no valid samples");
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (!(series[i].timestamp > series[i - 1].timestamp)) {
      throw std::invalid_argument("condition: timestamps must be strictly increasing");
    }
  }
  PupilConditioner c(cfg);
  std::vector<NormalizedSample> out;
  out.reserve(series.size());
  for (const auto& s : series) {
    for (const auto& n : c.push(s)) out.push_back(n);
  }
  for (const auto& n : c.flush()) out.push_back(n);
  return out;
}

// ---- detector -------------------------------------------------------------------

DetectorUpdate ParDetector::push(const NormalizedSample& s) {
  DetectorUpdate u;
  if (!s.valid) return u;
  switch (state_) {
  case State::idle:
    if (s.value < cfg_.theta_on) {
      state_ = State::candidate;
      onset_ = s.timestamp;
      min_value_ = s.value;
      if (cfg_.hold <= 0.0) {
        state_ = State::open;
        u.opened = onset_;
      }
    }
    break;
  case State::candidate:
    if (s.value < cfg_.theta_on) {
      min_value_ = std::min(min_value_, s.value);
      if (s.timestamp - onset_ >= cfg_.hold - kTimeEps) {
        state_ = State::open;
        u.opened = onset_;
      }
    } else {
      state_ = State::idle;
    }
    break;
  case State::open:
    if (s.value > cfg_.theta_off) {
      u.closed = PupilEvent{onset_, s.timestamp - onset_, 1.0 - min_value_};
      state_ = State::idle;
    } else {
      min_value_ = std::min(min_value_, s.value);
    }
    break;
  }
  return u;
}

std::vector<PupilEvent> detect_par_events(std::span<const NormalizedSample> series, const ParConfig& cfg) {
  cfg.validate();
  ParDetector d(cfg);
  std::vector<PupilEvent> out;
  for (const auto& s : series) {
    if (auto u = d.push(s); u.closed) out.push_back(*u.closed);
  }
  return out;
}

// ---- command decoding ---------------------------------------------------------------

void PromptSchedule::validate() const {
  if (!(long_threshold > 0.0)) throw std::invalid_argument("schedule: long_threshold must be > 0");
  std::vector<OnsetWindow> all;
  for (const auto& p : prompts) {
    for (const auto& w : p) {
      if (!(w.end > w.start)) throw std::invalid_argument("schedule: window end must exceed start");
      all.push_back(w);
    }
  }
  std::sort(all.begin(), all.end(), [](const OnsetWindow& a, const OnsetWindow& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].start < all[i - 1].end) {
      std::ostringstream os;
      os << "schedule: overlapping onset windows [" << all[i - 1].start << ", " << all[i - 1].end << ") and ["
         << all[i].start << ", " << all[i].end << ")";
      throw std::invalid_argument(os.str());
    }
  }
}

std::optional<int> classify_par_command(const PupilEvent& ev, const PromptSchedule& schedule) {
  schedule.validate();
  for (const auto& p : schedule.prompts) {
    for (int w = 0; w < 2; ++w) {
      const OnsetWindow& win = p[static_cast<std::size_t>(w)];
      if (ev.onset >= win.start && ev.onset < win.end) {
        const bool is_long = ev.duration >= schedule.long_threshold;
        return 2 * w + (is_long ? 2 : 1);
      }
    }
  }
  return std::nullopt;
}

} // namespace parbci
