#include "parbci/mdm.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace parbci {

int MiModel::class_index(const Label& label) const {
  const auto it = std::find(classes.begin(), classes.end(), label);
  return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
}

std::size_t MiModel::pending_count() const {
  std::size_t n = 0;
  for (const auto& p : pending) n += p.size();
  return n;
}

void MiModel::validate() const {
  if (classes.size() < 2) throw std::invalid_argument("MiModel: needs at least 2 classes");
  if (prototypes.size() != classes.size()) throw std::invalid_argument("MiModel: one prototype per class required");
  if (std::find(classes.begin(), classes.end(), kIdle) == classes.end()) {
    throw std::invalid_argument("MiModel: idle class missing");
  }
  for (std::size_t i = 0; i < classes.size(); ++i) {
    for (std::size_t j = i + 1; j < classes.size(); ++j) {
      if (classes[i] == classes[j]) throw std::invalid_argument("MiModel: duplicate class '" + classes[i] + "'");
    }
  }
  for (const auto& p : prototypes) {
    if (p.dim() != dim()) throw std::invalid_argument("MiModel: prototypes differ in dimension");
  }
  if (!(adaptation_alpha >= 0.0 && adaptation_alpha <= 1.0)) {
    throw std::invalid_argument("MiModel: adaptation_alpha must lie in [0, 1]");
  }
  if (adaptation_period < 1) throw std::invalid_argument("MiModel: adaptation_period must be >= 1");
  if (!pending.empty() && pending.size() != classes.size()) {
    throw std::invalid_argument("MiModel: pending buffers do not match classes");
  }
}

bool MiModel::operator==(const MiModel& o) const {
  if (classes != o.classes || adaptation_alpha != o.adaptation_alpha || adaptation_period != o.adaptation_period ||
      prototypes.size() != o.prototypes.size() || pending_count() != o.pending_count()) {
    return false;
  }
  for (std::size_t i = 0; i < prototypes.size(); ++i) {
    if (!(prototypes[i] == o.prototypes[i])) return false;
  }
  for (std::size_t k = 0; k < pending.size() && k < o.pending.size(); ++k) {
    if (pending[k].size() != o.pending[k].size()) return false;
    for (std::size_t i = 0; i < pending[k].size(); ++i) {
      if (!(pending[k][i] == o.pending[k][i])) return false;
    }
  }
  return true;
}

MiModel train(std::span<const LabeledCovariance> labeled, const TrainOptions& opt) {
  std::vector<Label> classes = opt.classes;
  if (classes.empty()) {
    classes.push_back(kIdle);
    for (const auto& lc : labeled) {
      if (std::find(classes.begin(), classes.end(), lc.label) == classes.end()) classes.push_back(lc.label);
    }
  }
  std::vector<std::vector<SpdMatrix>> per_class(classes.size());
  for (const auto& lc : labeled) {
    const auto it = std::find(classes.begin(), classes.end(), lc.label);
    if (it == classes.end()) throw std::invalid_argument("train: label '" + lc.label + "' is not a declared class");
    per_class[static_cast<std::size_t>(it - classes.begin())].push_back(lc.cov);
  }
  std::vector<Label> starved;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (per_class[k].size() < 2) starved.push_back(classes[k]);
  }
  if (!starved.empty()) {
    std::ostringstream os;
    os << "train: classes with fewer than 2 examples:";
    for (const auto& s : starved) os << ' ' << s;
    throw std::invalid_argument(os.str());
  }

  MiModel m;
  m.classes = classes;
  m.adaptation_alpha = opt.adaptation_alpha;
  m.adaptation_period = opt.adaptation_period;
  for (const auto& mats : per_class) m.prototypes.push_back(frechet_mean(mats, {}, opt.mean));
  m.pending.assign(classes.size(), {});
  m.validate();
  return m;
}

Classification classify(const SpdMatrix& c, const MiModel& m) {
  if (m.prototypes.empty()) throw std::invalid_argument("classify: empty model");
  if (c.dim() != m.dim()) {
    throw std::invalid_argument("classify: dimension mismatch (" + std::to_string(c.dim()) + " vs " +
                                std::to_string(m.dim()) + ")");
  }
  Classification out;
  out.distances.reserve(m.prototypes.size());
  for (const auto& p : m.prototypes) out.distances.push_back(riemannian_distance(c, p));
  std::size_t best = 0;
  for (std::size_t k = 1; k < out.distances.size(); ++k) {
    if (out.distances[k] < out.distances[best]) best = k;
  }
  double runner = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < out.distances.size(); ++k) {
    if (k != best) runner = std::min(runner, out.distances[k]);
  }
  const double d1 = out.distances[best];
  out.index = best;
  out.label = m.classes[best];
  out.score = (runner + d1) > 0.0 ? (runner - d1) / (runner + d1) : 0.0;
  return out;
}

MiModel adapt(const MiModel& m, std::span<const LabeledCovariance> batch) {
  std::vector<std::vector<SpdMatrix>> fresh(m.classes.size());
  for (const auto& lc : batch) {
    const int k = m.class_index(lc.label);
    if (k < 0) throw std::invalid_argument("adapt: unknown label '" + lc.label + "'");
    if (lc.cov.dim() != m.dim()) throw std::invalid_argument("adapt: dimension mismatch");
    fresh[static_cast<std::size_t>(k)].push_back(lc.cov);
  }
  MiModel out = m;
  for (std::size_t k = 0; k < fresh.size(); ++k) {
    if (fresh[k].empty()) continue;
    const SpdMatrix mean = frechet_mean(fresh[k]);
    out.prototypes[k] = geodesic(m.prototypes[k], mean, m.adaptation_alpha);
  }
  out.pending.assign(m.classes.size(), {});
  return out;
}

MiModel accumulate(const MiModel& m, const SpdMatrix& c, const Label& label) {
  const int k = m.class_index(label);
  if (k < 0) throw std::invalid_argument("accumulate: unknown label '" + label + "'");
  MiModel out = m;
  if (out.pending.size() != out.classes.size()) out.pending.assign(out.classes.size(), {});
  out.pending[static_cast<std::size_t>(k)].push_back(c);
  if (static_cast<int>(out.pending_count()) < out.adaptation_period) return out;
  std::vector<LabeledCovariance> batch;
  for (std::size_t j = 0; j < out.pending.size(); ++j) {
    for (const auto& p : out.pending[j]) batch.push_back({p, out.classes[j]});
  }
  return adapt(out, batch);
}

double PerformanceMetrics::consistency_of(const Label& label) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == label) return consistency[i];
  }
  return -1.0;
}

PerformanceMetrics performance_metrics(std::span<const LabeledCovariance> labeled, const MiModel& m) {
  std::vector<std::vector<double>> dist(m.classes.size());
  for (const auto& lc : labeled) {
    const int k = m.class_index(lc.label);
    if (k < 0) throw std::invalid_argument("performance_metrics: unknown label '" + lc.label + "'");
    dist[static_cast<std::size_t>(k)].push_back(riemannian_distance(lc.cov, m.prototypes[static_cast<std::size_t>(k)]));
  }
  PerformanceMetrics pm;
  std::vector<std::size_t> present;
  std::vector<Label> starved;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    if (dist[k].empty()) continue;
    if (dist[k].size() < 2) {
      starved.push_back(m.classes[k]);
      continue;
    }
    const double n = static_cast<double>(dist[k].size());
    const double mean = std::accumulate(dist[k].begin(), dist[k].end(), 0.0) / n;
    double var = 0.0;
    for (double d : dist[k]) var += (d - mean) * (d - mean);
    const double sd = std::sqrt(var / n);
    present.push_back(k);
    pm.classes.push_back(m.classes[k]);
    pm.dispersion.push_back(mean);
    pm.consistency.push_back(1.0 / (1.0 + sd));
  }
  if (!starved.empty()) {
    std::ostringstream os;
    os << "performance_metrics: classes with fewer than 2 matrices:";
    for (const auto& s : starved) os << ' ' << s;
    throw std::invalid_argument(os.str());
  }
  if (present.size() < 2) throw std::invalid_argument("performance_metrics: needs at least 2 classes with data");

  double sep = kSeparabilityCap;
  for (std::size_t i = 0; i < present.size(); ++i) {
    for (std::size_t j = i + 1; j < present.size(); ++j) {
      const double num = riemannian_distance(m.prototypes[present[i]], m.prototypes[present[j]]);
      const double den = pm.dispersion[i] + pm.dispersion[j];
      double ratio = 0.0;
      if (num > 0.0) ratio = den > 0.0 ? std::min(num / den, kSeparabilityCap) : kSeparabilityCap;
      sep = std::min(sep, ratio);
    }
  }
  pm.separability = sep;
  return pm;
}

} // namespace parbci
