#include "parbci/pupil.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>

namespace parbci {

double EllipseFit::area() const { return std::numbers::pi * semi_major * semi_minor; }

std::optional<EllipseFit> fit_ellipse(std::span<const Eigen::Vector2d> points) {
  if (points.size() < 6) return std::nullopt;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  double scale = 0.0;
  for (const auto& p : points) scale += (p - mean).squaredNorm();
  scale = std::sqrt(scale / static_cast<double>(points.size()));
  if (!(scale > 0.0)) return std::nullopt;

  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d q = (points[static_cast<std::size_t>(i)] - mean) / scale;
    d1.row(i) << q.x() * q.x(), q.x() * q.y(), q.y() * q.y();
    d2.row(i) << q.x(), q.y(), 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1;
  const Eigen::Matrix3d s2 = d1.transpose() * d2;
  const Eigen::Matrix3d s3 = d2.transpose() * d2;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
  if (lu.rank() < 3) return std::nullopt;
  const Eigen::Matrix3d t = -lu.inverse() * s2.transpose();
  const Eigen::Matrix3d m = s1 + s2 * t;
  // Premultiply by the inverse of the ellipse constraint matrix.
  Eigen::Matrix3d mc;
  mc.row(0) = m.row(2) / 2.0;
  mc.row(1) = -m.row(1);
  mc.row(2) = m.row(0) / 2.0;

  Eigen::EigenSolver<Eigen::Matrix3d> es(mc);
  if (es.info() != Eigen::Success) return std::nullopt;
  std::optional<Eigen::Vector3d> a1;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d v = es.eigenvectors().col(k).real();
    if (4.0 * v(0) * v(2) - v(1) * v(1) > 0.0) {
      a1 = v;
      break;
    }
  }
  if (!a1) return std::nullopt;
  const Eigen::Vector3d a2 = t * *a1;
  const double A = (*a1)(0), B = (*a1)(1), C = (*a1)(2);
  const double D = a2(0), E = a2(1), F = a2(2);

  Eigen::Matrix2d m2;
  m2 << A, B / 2.0, B / 2.0, C;
  const Eigen::Vector2d centre = m2.ldlt().solve(Eigen::Vector2d(-D / 2.0, -E / 2.0));
  const double f0 = F + (D * centre.x() + E * centre.y()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> ms(m2);
  const double l0 = ms.eigenvalues()(0);
  const double l1 = ms.eigenvalues()(1);
  const double ax0 = -f0 / l0;
  const double ax1 = -f0 / l1;
  if (!(ax0 > 0.0 && ax1 > 0.0) || !std::isfinite(ax0) || !std::isfinite(ax1)) return std::nullopt;

  EllipseFit fit;
  fit.cx = centre.x() * scale + mean.x();
  fit.cy = centre.y() * scale + mean.y();
  // Smaller eigenvalue of the quadratic form <-> longer axis.
  const double r0 = std::sqrt(ax0) * scale;
  const double r1 = std::sqrt(ax1) * scale;
  const int major = r0 >= r1 ? 0 : 1;
  fit.semi_major = std::max(r0, r1);
  fit.semi_minor = std::min(r0, r1);
  const Eigen::Vector2d dir = ms.eigenvectors().col(major);
  fit.angle = std::atan2(dir.y(), dir.x());
  return fit;
}

int otsu_threshold(const std::array<std::uint32_t, 256>& histogram) {
  double total = 0.0, sum_all = 0.0;
  for (int i = 0; i < 256; ++i) {
    total += histogram[static_cast<std::size_t>(i)];
    sum_all += static_cast<double>(i) * histogram[static_cast<std::size_t>(i)];
  }
  if (total == 0.0) return 0;
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += histogram[static_cast<std::size_t>(t)];
    sum0 += static_cast<double>(t) * histogram[static_cast<std::size_t>(t)];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

namespace {

Roi clip(const Roi& r, const EyeFrame& f) {
  return Roi{std::clamp(r.x0, 0, f.width), std::clamp(r.y0, 0, f.height), std::clamp(r.x1, 0, f.width),
             std::clamp(r.y1, 0, f.height)};
}

struct Blob {
  std::vector<int> pixels; // ROI-local linear indices
  Roi box;
};

// Largest 4-connected component of `mask` (ROI-local, row-major).
Blob largest_component(const std::vector<std::uint8_t>& mask, const Roi& roi) {
  const int w = roi.width();
  const int h = roi.height();
  std::vector<int> label(mask.size(), -1);
  Blob best;
  std::vector<int> current;
  std::queue<int> frontier;
  int next_label = 0;
  for (int start = 0; start < w * h; ++start) {
    if (!mask[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) continue;
    current.clear();
    label[static_cast<std::size_t>(start)] = next_label;
    frontier.push(start);
    while (!frontier.empty()) {
      const int p = frontier.front();
      frontier.pop();
      current.push_back(p);
      const int x = p % w;
      const int y = p / w;
      const int nbrs[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& nb : nbrs) {
        if (nb[0] < 0 || nb[0] >= w || nb[1] < 0 || nb[1] >= h) continue;
        const int q = nb[1] * w + nb[0];
        if (mask[static_cast<std::size_t>(q)] && label[static_cast<std::size_t>(q)] < 0) {
          label[static_cast<std::size_t>(q)] = next_label;
          frontier.push(q);
        }
      }
    }
    ++next_label;
    if (current.size() > best.pixels.size()) best.pixels = current;
  }
  if (!best.pixels.empty()) {
    int x0 = w, y0 = h, x1 = 0, y1 = 0;
    for (int p : best.pixels) {
      x0 = std::min(x0, p % w);
      x1 = std::max(x1, p % w + 1);
      y0 = std::min(y0, p / w);
      y1 = std::max(y1, p / w + 1);
    }
    best.box = Roi{x0 + roi.x0, y0 + roi.y0, x1 + roi.x0, y1 + roi.y0};
  }
  return best;
}

PupilDetection detect_in(const EyeFrame& frame, const PupilDetectOptions& opt, const Roi& roi) {
  PupilDetection out;
  out.sample.timestamp = frame.timestamp;
  const int w = roi.width();
  const int h = roi.height();
  if (w <= 0 || h <= 0) return out;

  std::array<std::uint32_t, 256> hist{};
  for (int y = roi.y0; y < roi.y1; ++y)
    for (int x = roi.x0; x < roi.x1; ++x) ++hist[frame.at(x, y)];
  const int thr = opt.threshold ? *opt.threshold : otsu_threshold(hist);
  out.threshold = thr;

  double n0 = 0, s0 = 0, n1 = 0, s1 = 0;
  for (int i = 0; i < 256; ++i) {
    if (i <= thr) {
      n0 += hist[static_cast<std::size_t>(i)];
      s0 += static_cast<double>(i) * hist[static_cast<std::size_t>(i)];
    } else {
      n1 += hist[static_cast<std::size_t>(i)];
      s1 += static_cast<double>(i) * hist[static_cast<std::size_t>(i)];
    }
  }
  if (n0 == 0 || n1 == 0 || (s1 / n1 - s0 / n0) < opt.min_contrast) return out;

  std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      mask[static_cast<std::size_t>(y * w + x)] = frame.at(x + roi.x0, y + roi.y0) <= thr ? 1 : 0;

  const Blob blob = largest_component(mask, roi);
  if (blob.pixels.empty()) return out;
  out.component_box = blob.box;

  std::vector<std::uint8_t> in_blob(mask.size(), 0);
  for (int p : blob.pixels) in_blob[static_cast<std::size_t>(p)] = 1;

  // Crack-edge midpoints between blob pixels and their outside 4-neighbours.
  std::vector<Eigen::Vector2d> edge;
  int boundary = 0;
  for (int p : blob.pixels) {
    const int x = p % w;
    const int y = p / w;
    bool on_boundary = false;
    const int nbrs[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    for (const auto& d : nbrs) {
      const int nx = x + d[0];
      const int ny = y + d[1];
      const bool outside = nx < 0 || nx >= w || ny < 0 || ny >= h || !in_blob[static_cast<std::size_t>(ny * w + nx)];
      if (outside) {
        on_boundary = true;
        edge.emplace_back(roi.x0 + x + 0.5 + 0.5 * d[0], roi.y0 + y + 0.5 + 0.5 * d[1]);
      }
    }
    if (on_boundary) ++boundary;
  }
  out.boundary_pixels = boundary;
  if (boundary < opt.min_boundary_pixels) return out;

  out.ellipse = fit_ellipse(edge);
  if (!out.ellipse) return out;
  const double area = out.ellipse->area();
  if (!(area > 0.0) || !std::isfinite(area)) return out;
  out.sample.area = area;
  out.sample.valid = true;
  return out;
}

bool touches_edge(const Roi& box, const Roi& roi, const EyeFrame& f) {
  return (box.x0 == roi.x0 && roi.x0 > 0) || (box.y0 == roi.y0 && roi.y0 > 0) ||
         (box.x1 == roi.x1 && roi.x1 < f.width) || (box.y1 == roi.y1 && roi.y1 < f.height);
}

} // namespace

PupilDetection detect_pupil(const EyeFrame& frame, const PupilDetectOptions& opt, const std::optional<Roi>& roi) {
  if (frame.empty() ||
      frame.intensity.size() != static_cast<std::size_t>(frame.width) * static_cast<std::size_t>(frame.height)) {
    PupilDetection out;
    out.sample.timestamp = frame.timestamp;
    return out;
  }
  const Roi full{0, 0, frame.width, frame.height};
  if (!roi) return detect_in(frame, opt, full);
  const Roi r = clip(*roi, frame);
  PupilDetection d = detect_in(frame, opt, r);
  // A blob cut by the ROI border has moved; retry on the full frame.
  if (!d.sample.valid || (d.component_box && touches_edge(*d.component_box, r, frame))) {
    return detect_in(frame, opt, full);
  }
  return d;
}

PupilSample PupilTracker::process(const EyeFrame& frame) {
  const PupilDetection d = detect_pupil(frame, opt_, roi_);
  if (d.sample.valid && d.component_box) {
    const Roi& b = *d.component_box;
    const int mx = static_cast<int>(std::ceil(opt_.roi_margin * b.width()));
    const int my = static_cast<int>(std::ceil(opt_.roi_margin * b.height()));
    roi_ = Roi{b.x0 - mx, b.y0 - my, b.x1 + mx, b.y1 + my};
  } else {
    roi_.reset();
  }
  return d.sample;
}

} // namespace parbci
