#pragma once

#include "parbci/spd.hpp"

#include <complex>
#include <span>
#include <string>
#include <vector>

namespace parbci {

using Label = std::string;
inline const Label kIdle = "idle";

// Multichannel EEG recording. samples(ch, t) in microvolts.
struct EegStream {
  double fs{256.0};
  std::vector<std::string> channel_names;
  Matrix samples;                 // channels x T
  std::vector<Label> label_track; // empty, or one label per sample

  int channels() const { return static_cast<int>(samples.rows()); }
  Eigen::Index length() const { return samples.cols(); }
  double duration() const { return static_cast<double>(length()) / fs; }

  // Throws std::invalid_argument when fs/T/label_track are inconsistent.
  void validate() const;

  // Columns [first, first + count) with the matching labels.
  EegStream slice(Eigen::Index first, Eigen::Index count) const;
};

struct Epoch {
  Matrix data; // channels x L
  double start_time{0.0};
  Eigen::Index start_sample{0};
  Label label{kIdle};
};

// ---- band-pass filter --------------------------------------------------

// Second-order section in direct form II transposed:
//   y = b0 x + z0;  z0' = b1 x - a1 y + z1;  z1' = b2 x - a2 y
struct Biquad {
  double b0, b1, b2, a1, a2;
};

// Digital Butterworth band-pass of the given prototype order (2*order poles),
// produced by the bilinear transform with pre-warped band edges.
struct BandpassDesign {
  double fs{0.0};
  double low_hz{0.0};
  double high_hz{0.0};
  int order{0};
  std::vector<Biquad> sections;
};

BandpassDesign design_butterworth_bandpass(double fs, double low_hz, double high_hz, int order);

// Single-pass complex response H(e^{j 2 pi f / fs}).
std::complex<double> frequency_response(const BandpassDesign& d, double f_hz);

// Causal single pass with explicit per-section state (2 values per section).
void sosfilt(const BandpassDesign& d, std::span<double> x, std::span<double> state);

// Zero-phase forward-backward filtering with odd-extension padding of
// 3 * (2 * sections + 1) samples and steady-state initial conditions.
std::vector<double> filtfilt(const BandpassDesign& d, std::span<const double> x);

EegStream bandpass(const EegStream& stream, double low_hz, double high_hz, int order = 4);

// One forward pass from rest: the online (causal) form of bandpass().
EegStream causal_bandpass(const EegStream& stream, double low_hz, double high_hz, int order = 4);

// ---- epoching ------------------------------------------------------------

struct EpochingOptions {
  double epoch_seconds{0.5};
  double overlap_fraction{0.5};

  Eigen::Index epoch_length(double fs) const;
  Eigen::Index step(double fs) const;
};

// Majority label over the window; ties (or an empty track) resolve to idle.
Label majority_label(std::span<const Label> labels);

std::vector<Epoch> epoch_stream(const EegStream& stream, EpochingOptions opt = {});

// Incremental epoching; emits the same epochs as epoch_stream applied to the
// concatenation of all pushed blocks.
class StreamingEpocher {
public:
  StreamingEpocher(double fs, int channels, EpochingOptions opt = {});

  // block is channels x n; labels empty or length n.
  std::vector<Epoch> push(const Matrix& block, std::span<const Label> labels = {});

private:
  double fs_;
  int channels_;
  Eigen::Index length_;
  Eigen::Index step_;
  Matrix buffer_;
  std::vector<Label> labels_;
  Eigen::Index buffer_start_{0}; // absolute index of buffer_ column 0
  Eigen::Index next_start_{0};   // absolute index of the next epoch start
};

// ---- covariance ------------------------------------------------------------

// Sample covariance of the row-centered epoch, shrunk toward (tr(C)/n) I.
// Throws std::invalid_argument("degenerate epoch") when tr(C) == 0.
SpdMatrix covariance(const Epoch& e, double shrinkage = 0.1);
SpdMatrix covariance(const Matrix& data, double shrinkage = 0.1);

// ---- stream files ----------------------------------------------------------

// CSV with a leading version/fs line and a column header:
//   parbci-eeg,1,<fs>
//   label,<ch0>,<ch1>,...
//   idle,<v>,<v>,...
void write_stream_csv(const std::string& path, const EegStream& stream);
EegStream read_stream_csv(const std::string& path);

} // namespace parbci
