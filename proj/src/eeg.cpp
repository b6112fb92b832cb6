#include "parbci/eeg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace parbci {

using cd = std::complex<double>;

void EegStream::validate() const {
  if (!(fs > 0.0)) throw std::invalid_argument("EegStream: fs must be positive");
  if (samples.rows() < 1) throw std::invalid_argument("EegStream: no channels");
  if (samples.cols() < 1) throw std::invalid_argument("EegStream: no samples");
  if (!label_track.empty() && static_cast<Eigen::Index>(label_track.size()) != samples.cols()) {
    throw std::invalid_argument("EegStream: label_track length differs from sample count");
  }
  if (!channel_names.empty() && static_cast<Eigen::Index>(channel_names.size()) != samples.rows()) {
    throw std::invalid_argument("EegStream: channel_names length differs from channel count");
  }
}

EegStream EegStream::slice(Eigen::Index first, Eigen::Index count) const {
  if (first < 0 || count < 0 || first + count > length()) {
    throw std::out_of_range("EegStream::slice: range outside stream");
  }
  EegStream out;
  out.fs = fs;
  out.channel_names = channel_names;
  out.samples = samples.middleCols(first, count);
  if (!label_track.empty()) {
    out.label_track.assign(label_track.begin() + first, label_track.begin() + first + count);
  }
  return out;
}

// ---- filter design -------------------------------------------------------

BandpassDesign design_butterworth_bandpass(double fs, double low_hz, double high_hz, int order) {
  if (!(fs > 0.0)) throw std::invalid_argument("bandpass: fs must be positive");
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0)) {
    std::ostringstream os;
    os << "bandpass: band [" << low_hz << ", " << high_hz << "] Hz must satisfy 0 < low < high < "
       << fs / 2.0 << " (Nyquist)";
    throw std::invalid_argument(os.str());
  }
  if (order < 1) throw std::invalid_argument("bandpass: order must be >= 1");

  const double fs2 = 2.0 * fs;
  const double w1 = fs2 * std::tan(std::numbers::pi * low_hz / fs);
  const double w2 = fs2 * std::tan(std::numbers::pi * high_hz / fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  // Analog prototype poles, low-pass to band-pass, then bilinear.
  std::vector<cd> zpoles;
  cd num_prod = 1.0;
  cd den_prod = 1.0;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + 1.0 + order) / (2.0 * order);
    const cd p = std::polar(1.0, theta);
    const cd half = p * bw / 2.0;
    const cd disc = std::sqrt(half * half - w0sq);
    for (const cd s : {half + disc, half - disc}) {
      zpoles.push_back((fs2 + s) / (fs2 - s));
      den_prod *= (fs2 - s);
    }
    num_prod *= fs2; // analog zero at s = 0
  }
  const double gain = std::pow(bw, order) * (num_prod / den_prod).real();

  // Pair conjugates; leftover real poles pair among themselves.
  std::vector<cd> upper;
  std::vector<double> reals;
  for (const cd& z : zpoles) {
    if (z.imag() > 1e-12) upper.push_back(z);
    else if (std::abs(z.imag()) <= 1e-12) reals.push_back(z.real());
  }
  std::sort(upper.begin(), upper.end(), [](cd a, cd b) { return std::abs(a) < std::abs(b); });
  std::sort(reals.begin(), reals.end());

  BandpassDesign d{fs, low_hz, high_hz, order, {}};
  for (const cd& z : upper) {
    d.sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    d.sections.push_back({1.0, 0.0, -1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
  }
  if (static_cast<int>(d.sections.size()) != order) {
    throw std::logic_error("bandpass: pole pairing failed");
  }
  d.sections.front().b0 *= gain;
  d.sections.front().b1 *= gain;
  d.sections.front().b2 *= gain;
  return d;
}

std::complex<double> frequency_response(const BandpassDesign& d, double f_hz) {
  const cd zi = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / d.fs); // z^-1
  cd h = 1.0;
  for (const auto& s : d.sections) {
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  }
  return h;
}

void sosfilt(const BandpassDesign& d, std::span<double> x, std::span<double> state) {
  for (std::size_t k = 0; k < d.sections.size(); ++k) {
    const Biquad& s = d.sections[k];
    double z0 = state[2 * k];
    double z1 = state[2 * k + 1];
    for (double& v : x) {
      const double in = v;
      const double y = s.b0 * in + z0;
      z0 = s.b1 * in - s.a1 * y + z1;
      z1 = s.b2 * in - s.a2 * y;
      v = y;
    }
    state[2 * k] = z0;
    state[2 * k + 1] = z1;
  }
}

namespace {

// Per-section steady state for a unit step at the cascade input.
std::vector<double> step_state(const BandpassDesign& d) {
  std::vector<double> zi(2 * d.sections.size());
  double scale = 1.0;
  for (std::size_t k = 0; k < d.sections.size(); ++k) {
    const Biquad& s = d.sections[k];
    const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double z1 = s.b2 - s.a2 * g;
    const double z0 = s.b1 - s.a1 * g + z1;
    zi[2 * k] = z0 * scale;
    zi[2 * k + 1] = z1 * scale;
    scale *= g;
  }
  return zi;
}

} // namespace

std::vector<double> filtfilt(const BandpassDesign& d, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t padlen = std::min<std::size_t>(3 * (2 * d.sections.size() + 1), n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const std::vector<double> zi = step_state(d);
  std::vector<double> state(zi.size());

  for (std::size_t i = 0; i < zi.size(); ++i) state[i] = zi[i] * ext.front();
  sosfilt(d, ext, state);

  std::reverse(ext.begin(), ext.end());
  for (std::size_t i = 0; i < zi.size(); ++i) state[i] = zi[i] * ext.front();
  sosfilt(d, ext, state);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(padlen),
                             ext.begin() + static_cast<std::ptrdiff_t>(padlen + n));
}

EegStream bandpass(const EegStream& stream, double low_hz, double high_hz, int order) {
  stream.validate();
  const BandpassDesign d = design_butterworth_bandpass(stream.fs, low_hz, high_hz, order);
  EegStream out = stream;
  std::vector<double> row(static_cast<std::size_t>(stream.length()));
  for (int ch = 0; ch < stream.channels(); ++ch) {
    for (Eigen::Index t = 0; t < stream.length(); ++t) row[static_cast<std::size_t>(t)] = stream.samples(ch, t);
    const std::vector<double> y = filtfilt(d, row);
    for (Eigen::Index t = 0; t < stream.length(); ++t) out.samples(ch, t) = y[static_cast<std::size_t>(t)];
  }
  return out;
}

EegStream causal_bandpass(const EegStream& stream, double low_hz, double high_hz, int order) {
  stream.validate();
  const BandpassDesign d = design_butterworth_bandpass(stream.fs, low_hz, high_hz, order);
  EegStream out = stream;
  std::vector<double> row(static_cast<std::size_t>(stream.length()));
  std::vector<double> state(2 * d.sections.size());
  for (int ch = 0; ch < stream.channels(); ++ch) {
    for (Eigen::Index t = 0; t < stream.length(); ++t) row[static_cast<std::size_t>(t)] = stream.samples(ch, t);
    std::fill(state.begin(), state.end(), 0.0);
    sosfilt(d, row, state);
    for (Eigen::Index t = 0; t < stream.length(); ++t) out.samples(ch, t) = row[static_cast<std::size_t>(t)];
  }
  return out;
}

// ---- epoching ------------------------------------------------------------

Eigen::Index EpochingOptions::epoch_length(double fs) const {
  if (!(epoch_seconds > 0.0)) throw std::invalid_argument("epoching: epoch_seconds must be positive");
  const auto l = static_cast<Eigen::Index>(std::llround(epoch_seconds * fs));
  if (l < 1) throw std::invalid_argument("epoching: epoch shorter than one sample");
  return l;
}

Eigen::Index EpochingOptions::step(double fs) const {
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw std::invalid_argument("epoching: overlap_fraction must lie in [0, 1)");
  }
  const auto l = epoch_length(fs);
  const auto s = static_cast<Eigen::Index>(std::floor(static_cast<double>(l) * (1.0 - overlap_fraction)));
  return std::max<Eigen::Index>(s, 1);
}

Label majority_label(std::span<const Label> labels) {
  if (labels.empty()) return kIdle;
  std::map<Label, int> counts;
  for (const auto& l : labels) ++counts[l];
  int best = 0;
  const Label* winner = nullptr;
  bool tie = false;
  for (const auto& [label, count] : counts) {
    if (count > best) {
      best = count;
      winner = &label;
      tie = false;
    } else if (count == best) {
      tie = true;
    }
  }
  return tie ? kIdle : *winner;
}

std::vector<Epoch> epoch_stream(const EegStream& stream, EpochingOptions opt) {
  stream.validate();
  const auto l = opt.epoch_length(stream.fs);
  const auto step = opt.step(stream.fs);
  std::vector<Epoch> out;
  for (Eigen::Index start = 0; start + l <= stream.length(); start += step) {
    Epoch e;
    e.data = stream.samples.middleCols(start, l);
    e.start_sample = start;
    e.start_time = static_cast<double>(start) / stream.fs;
    if (!stream.label_track.empty()) {
      e.label = majority_label(std::span<const Label>(stream.label_track).subspan(
          static_cast<std::size_t>(start), static_cast<std::size_t>(l)));
    }
    out.push_back(std::move(e));
  }
  return out;
}

StreamingEpocher::StreamingEpocher(double fs, int channels, EpochingOptions opt)
  : fs_(fs), channels_(channels), length_(opt.epoch_length(fs)), step_(opt.step(fs)),
    buffer_(channels, 0) {
  if (channels < 1) throw std::invalid_argument("StreamingEpocher: no channels");
}

std::vector<Epoch> StreamingEpocher::push(const Matrix& block, std::span<const Label> labels) {
  if (block.rows() != channels_) throw std::invalid_argument("StreamingEpocher: channel count mismatch");
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != block.cols()) {
    throw std::invalid_argument("StreamingEpocher: label count mismatch");
  }
  const Eigen::Index old = buffer_.cols();
  buffer_.conservativeResize(Eigen::NoChange, old + block.cols());
  buffer_.rightCols(block.cols()) = block;
  if (labels.empty()) labels_.insert(labels_.end(), static_cast<std::size_t>(block.cols()), kIdle);
  else labels_.insert(labels_.end(), labels.begin(), labels.end());

  std::vector<Epoch> out;
  while (next_start_ + length_ <= buffer_start_ + buffer_.cols()) {
    const Eigen::Index local = next_start_ - buffer_start_;
    Epoch e;
    e.data = buffer_.middleCols(local, length_);
    e.start_sample = next_start_;
    e.start_time = static_cast<double>(next_start_) / fs_;
    e.label = majority_label(std::span<const Label>(labels_).subspan(
        static_cast<std::size_t>(local), static_cast<std::size_t>(length_)));
    out.push_back(std::move(e));
    next_start_ += step_;
  }
  // Drop columns no future epoch can touch.
  const Eigen::Index drop = std::min(next_start_ - buffer_start_, buffer_.cols());
  if (drop > 0) {
    Matrix rest = buffer_.rightCols(buffer_.cols() - drop);
    buffer_ = std::move(rest);
    labels_.erase(labels_.begin(), labels_.begin() + drop);
    buffer_start_ += drop;
  }
  return out;
}

// ---- covariance ------------------------------------------------------------

SpdMatrix covariance(const Matrix& data, double shrinkage) {
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) {
    throw std::invalid_argument("covariance: shrinkage must lie in [0, 1]");
  }
  const Eigen::Index n = data.rows();
  const Eigen::Index l = data.cols();
  if (l < 2) throw std::invalid_argument("covariance: epoch needs at least 2 samples");
  const Matrix centered = data.colwise() - data.rowwise().mean();
  Matrix c = centered * centered.transpose() / static_cast<double>(l - 1);
  const double tr = c.trace();
  if (!(tr > 0.0)) throw std::invalid_argument("degenerate epoch");
  Matrix shrunk = (1.0 - shrinkage) * c;
  shrunk.diagonal().array() += shrinkage * tr / static_cast<double>(n);
  return SpdMatrix(shrunk);
}

SpdMatrix covariance(const Epoch& e, double shrinkage) { return covariance(e.data, shrinkage); }

} // namespace parbci
