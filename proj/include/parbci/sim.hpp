#pragma once

#include "parbci/eeg.hpp"
#include "parbci/pupil.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace parbci {

struct TaskInterval {
  double start{0.0}; // s, inclusive
  double end{0.0};   // s, exclusive
  Label label;
};

struct EegSimParams {
  double fs{256.0};
  int channels{16};
  double erd_depth{0.3};    // fractional band-power drop on the task's channel group
  double noise_level{1.0};  // multiplier on the background noise std
  double background_uv{2.0};
  double mu_uv{6.0};        // RMS of the 10 Hz rhythm per channel
  double beta_uv{3.0};      // RMS of the 22 Hz rhythm per channel
  double mu_hz{10.0};
  double beta_hz{22.0};
  double linewidth_hz{2.0}; // spectral line width of the rhythms (phase diffusion)
  double rhythm_coherence{0.97};  // share of rhythm variance from the band's common oscillator
  double noise_common_share{0.3}; // share of background variance common to all channels
  std::vector<TaskInterval> schedule;
};

// A scheduled pupillary accommodative response. `onset` and `onset + duration`
// are the half-depth points of the raised-cosine edges.
struct ParSpec {
  double onset{0.0};
  double duration{0.0};
  double depth{0.3};
};

struct BlinkSpec {
  double start{0.0};
  double duration{0.15};
};

struct PupilSimParams {
  double rate{30.0};                 // samples (frames) per second
  double baseline_area{5026.548245743669}; // pi * 40^2 px^2
  double hippus_amplitude{0.05};
  double hippus_hz{0.3};
  double noise_level{0.01};          // relative white noise std
  double edge_seconds{0.3};
  std::vector<ParSpec> schedule;
  std::vector<BlinkSpec> blinks;
};

struct DriftSpec {
  double time{0.0};
  double factor{1.0}; // covariance scale applied from `time` on
};

struct SimScenario {
  std::uint64_t seed{1};
  double duration{60.0};
  EegSimParams eeg;
  PupilSimParams pupil;
  std::optional<DriftSpec> drift;

  // Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
};

// Channel groups of the lateralized layout: left (C3 side), centre, right.
enum class ChannelGroup { left, centre, right };
ChannelGroup channel_group(int channels, int ch);
std::vector<std::string> default_channel_names(int channels);

// Channel group whose rhythms a task suppresses (nullopt for idle).
std::optional<ChannelGroup> task_group(const Label& label);
bool is_known_task(const Label& label);

EegStream gen_eeg(const SimScenario& s);

// Non-idle runs of a label track as intervals in seconds.
std::vector<TaskInterval> schedule_from_labels(std::span<const Label> labels, double fs);

// Population covariance of the generated EEG for a steady `label` epoch after
// a linear filter with power gain `power_gain(f)` (|H(f)|^2 of the full
// filtering chain; pass f -> 1 for raw signal). Drift is not included.
Matrix expected_eeg_covariance(const EegSimParams& p, const Label& label,
                               const std::function<double(double)>& power_gain);

// Noise-free pupil area at time t (hippus and PAR schedule only).
double pupil_area_model(const PupilSimParams& p, double t, double hippus_phase);

std::vector<PupilSample> gen_pupil(const SimScenario& s);

struct FrameRenderOptions {
  int width{200};
  int height{160};
  double background{200.0};
  double pupil{30.0};
  double noise_std{3.0};
};

// Anti-aliased dark ellipse on a light background (4x4 supersampling).
EyeFrame render_eye_frame(double cx, double cy, double semi_a, double semi_b, double angle, double timestamp,
                          const FrameRenderOptions& opt, std::uint64_t noise_seed);

// One frame per trace sample: a centred disc of radius sqrt(area / pi);
// invalid samples render a closed eye (no pupil).
std::vector<EyeFrame> gen_frames(const SimScenario& s, std::span<const PupilSample> trace,
                                 const FrameRenderOptions& opt = {});

} // namespace parbci
