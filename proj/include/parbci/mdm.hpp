#pragma once

#include "parbci/eeg.hpp"
#include "parbci/spd.hpp"

#include <span>
#include <string>
#include <vector>

namespace parbci {

struct LabeledCovariance {
  SpdMatrix cov;
  Label label;
};

// Minimum-distance-to-mean model: one Riemannian prototype per class plus the
// supervised adaptation state. Treated as an immutable value: train, adapt and
// accumulate return new models.
struct MiModel {
  std::vector<Label> classes; // unique, contains idle
  std::vector<SpdMatrix> prototypes;
  double adaptation_alpha{0.1};
  int adaptation_period{16};
  std::vector<std::vector<SpdMatrix>> pending; // per class, since last update

  int dim() const { return prototypes.empty() ? 0 : prototypes.front().dim(); }
  // -1 when the label is not a model class.
  int class_index(const Label& label) const;
  std::size_t pending_count() const;
  void validate() const;

  // Field-for-field exact equality (pending included).
  bool operator==(const MiModel& other) const;
};

struct TrainOptions {
  std::vector<Label> classes; // empty: idle first, then order of first appearance
  double adaptation_alpha{0.1};
  int adaptation_period{16};
  FrechetOptions mean{};
};

// Prototype per class = unweighted Frechet mean of its matrices. Throws
// std::invalid_argument listing every class with fewer than 2 examples.
MiModel train(std::span<const LabeledCovariance> labeled, const TrainOptions& opt = {});

struct Classification {
  Label label;
  std::size_t index{0};
  std::vector<double> distances; // per class, model order
  double score{0.0};             // (d2 - d1) / (d2 + d1), winner vs runner-up
};

Classification classify(const SpdMatrix& c, const MiModel& m);

// Weighted re-estimation: for each class with new data,
// prototype <- geodesic(prototype, mean(new), alpha). Clears pending buffers.
MiModel adapt(const MiModel& m, std::span<const LabeledCovariance> batch);

// Buffers one labeled matrix; runs adapt() on the buffered batch once
// adaptation_period matrices are pending.
MiModel accumulate(const MiModel& m, const SpdMatrix& c, const Label& label);

inline constexpr double kSeparabilityCap = 1e6;

struct PerformanceMetrics {
  std::vector<Label> classes; // classes present in the data, model order
  std::vector<double> dispersion;
  std::vector<double> consistency;
  double separability{0.0}; // capped at kSeparabilityCap

  double consistency_of(const Label& label) const; // -1 when absent
};

// Requires >= 2 present classes, each with >= 2 matrices.
PerformanceMetrics performance_metrics(std::span<const LabeledCovariance> labeled, const MiModel& m);

// ---- snapshots ----------------------------------------------------------------

// Versioned text snapshot (classes, dim, alpha, period, prototypes row-major
// in shortest round-trip decimal). Pending buffers are not persisted.
std::string serialize_model(const MiModel& m);
MiModel parse_model(const std::string& text);
void snapshot_model(const MiModel& m, const std::string& path);
MiModel load_model(const std::string& path);

} // namespace parbci
