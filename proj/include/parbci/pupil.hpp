#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace parbci {

// ---- domain types ------------------------------------------------------------

struct EyeFrame {
  int width{0};
  int height{0};
  std::vector<std::uint8_t> intensity; // row-major, height * width
  double timestamp{0.0};

  std::uint8_t at(int x, int y) const {
    return intensity[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                     static_cast<std::size_t>(x)];
  }
  bool empty() const { return width <= 0 || height <= 0 || intensity.empty(); }
};

struct PupilSample {
  double timestamp{0.0};
  double area{0.0}; // px^2, or arbitrary units for direct traces
  bool valid{false};
};

struct PupilEvent {
  double onset{0.0};
  double duration{0.0};
  double depth{0.0}; // 1 - min normalized area
};

// ---- frame processing --------------------------------------------------------

// Half-open pixel box [x0, x1) x [y0, y1).
struct Roi {
  int x0{0}, y0{0}, x1{0}, y1{0};
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

struct EllipseFit {
  double cx{0.0}, cy{0.0};
  double semi_major{0.0}, semi_minor{0.0};
  double angle{0.0}; // radians, major axis vs +x
  double area() const;
};

// Direct least-squares ellipse-specific conic fit (numerically stable
// Halir-Flusser form) on centred, scaled points. nullopt when degenerate.
std::optional<EllipseFit> fit_ellipse(std::span<const Eigen::Vector2d> points);

// Otsu threshold over a 256-bin histogram; class "dark" is intensity <= t.
int otsu_threshold(const std::array<std::uint32_t, 256>& histogram);

struct PupilDetectOptions {
  std::optional<int> threshold; // nullopt = automatic
  double roi_margin{0.2};
  int min_boundary_pixels{20};
  double min_contrast{20.0}; // required gap between dark and light class means
};

struct PupilDetection {
  PupilSample sample;
  std::optional<Roi> component_box; // bounding box of the pupil blob
  std::optional<EllipseFit> ellipse;
  int threshold{0};
  int boundary_pixels{0};
};

// Segment the largest dark blob inside `roi` (full frame when nullopt), fit an
// ellipse to its crack-edge boundary and report area = pi * a * b.
PupilDetection detect_pupil(const EyeFrame& frame, const PupilDetectOptions& opt = {},
                            const std::optional<Roi>& roi = std::nullopt);

// Per-stream detector remembering the previous blob for the next ROI.
class PupilTracker {
public:
  explicit PupilTracker(PupilDetectOptions opt = {}) : opt_(opt) {}

  PupilSample process(const EyeFrame& frame);
  const std::optional<Roi>& roi() const { return roi_; }

private:
  PupilDetectOptions opt_;
  std::optional<Roi> roi_;
};

// ---- conditioning and event detection ----------------------------------------

struct ParConfig {
  double max_gap{0.3};          // s, longest invalid gap that is interpolated
  double baseline_window{5.0};  // s, trailing running-median window
  double smoothing{0.1};        // s, trailing moving average
  double theta_on{0.85};
  double theta_off{0.93};
  double hold{0.3};             // s below theta_on before an event opens

  void validate() const;
};

struct NormalizedSample {
  double timestamp{0.0};
  double value{1.0}; // area / baseline, smoothed
  bool valid{false}; // false = masked
};

// Streaming conditioner. Outputs come out in input order; samples inside an
// invalid gap are held back until the gap resolves.
class PupilConditioner {
public:
  explicit PupilConditioner(ParConfig cfg = {});

  std::vector<NormalizedSample> push(const PupilSample& s);
  // Emits held-back gap samples as masked.
  std::vector<NormalizedSample> flush();

  // Current baseline (nullopt before the first valid sample).
  std::optional<double> baseline() const;

private:
  NormalizedSample process_valid(double t, double area);
  double median_baseline() const;

  ParConfig cfg_;
  std::optional<PupilSample> last_valid_;
  std::vector<double> pending_; // timestamps of held-back invalid samples
  bool masking_{false};
  std::deque<std::pair<double, double>> window_; // (t, area) accepted into baseline
  std::deque<std::pair<double, double>> smooth_; // (t, normalized)
};

// Batch conditioning; throws std::invalid_argument if every sample is invalid.
std::vector<NormalizedSample> condition(std::span<const PupilSample> series, const ParConfig& cfg = {});

struct DetectorUpdate {
  std::optional<double> opened; // onset of an event that just passed the hold test
  std::optional<PupilEvent> closed;
};

// Hysteresis detector: opens after `hold` seconds continuously below theta_on,
// closes on the first sample above theta_off. Masked samples are skipped.
class ParDetector {
public:
  explicit ParDetector(ParConfig cfg = {}) : cfg_(cfg) {}

  DetectorUpdate push(const NormalizedSample& s);
  bool is_open() const { return state_ == State::open; }

private:
  enum class State { idle, candidate, open };
  ParConfig cfg_;
  State state_{State::idle};
  double onset_{0.0};
  double min_value_{1.0};
};

// Closed events only; an event still open at the end of the series is dropped.
std::vector<PupilEvent> detect_par_events(std::span<const NormalizedSample> series, const ParConfig& cfg = {});

// ---- command decoding ----------------------------------------------------------

struct OnsetWindow {
  double start{0.0};
  double end{0.0};
};

// Each prompt cycle offers two consecutive onset windows; the constriction's
// onset window and duration class (short < long_threshold <= long) select one
// of four commands:
//   window 1 short -> 1, window 1 long -> 2, window 2 short -> 3, window 2 long -> 4
struct PromptSchedule {
  std::vector<std::array<OnsetWindow, 2>> prompts;
  double long_threshold{1.0};

  // Throws std::invalid_argument on empty or overlapping windows.
  void validate() const;
};

std::optional<int> classify_par_command(const PupilEvent& ev, const PromptSchedule& schedule);

// ---- files -----------------------------------------------------------------------

// Trace CSV:  parbci-pupil,1  /  timestamp,area,valid  /  rows
void write_trace_csv(const std::string& path, std::span<const PupilSample> trace);
std::vector<PupilSample> read_trace_csv(const std::string& path);

// Binary PGM (P5, maxval 255) with a "# t=<timestamp>" comment line.
void write_pgm(const std::string& path, const EyeFrame& frame);
EyeFrame read_pgm(const std::string& path);

// Directory of frame_000000.pgm, frame_000001.pgm, ...
void write_frame_sequence(const std::string& dir, std::span<const EyeFrame> frames);
std::vector<EyeFrame> read_frame_sequence(const std::string& dir);

} // namespace parbci
