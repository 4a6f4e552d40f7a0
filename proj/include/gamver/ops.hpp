#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "gamver/errors.hpp"
#include "gamver/tensor.hpp"

// Shared numeric operations on 2D maps. Pure functions; all inputs immutable.

namespace gamver {

// Linear interpolation that is exact for a == b and never leaves [a, b].
inline double lerpClamped(double a, double b, double t) {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  return std::clamp(a + t * (b - a), lo, hi);
}

// Corner-aligned bilinear resampling. Output values stay within the input's
// [min, max]; constant inputs map to constant outputs exactly. A single
// row/column resolves to source index 0.
inline Array2d resizeBilinear(const Eigen::Ref<const Array2d>& in, Eigen::Index outH, Eigen::Index outW) {
  const Eigen::Index h = in.rows(), w = in.cols();
  if (h < 1 || w < 1) throw ValidationError("resizeBilinear: empty input");
  if (outH < 1 || outW < 1) throw ValidationError("resizeBilinear: target size must be >= 1");
  Array2d out(outH, outW);
  for (Eigen::Index i = 0; i < outH; ++i) {
    const double si = (outH == 1) ? 0.0 : static_cast<double>(i) * static_cast<double>(h - 1) / static_cast<double>(outH - 1);
    const auto i0 = static_cast<Eigen::Index>(std::floor(si));
    const Eigen::Index i1 = std::min(i0 + 1, h - 1);
    const double ti = si - static_cast<double>(i0);
    for (Eigen::Index j = 0; j < outW; ++j) {
      const double sj = (outW == 1) ? 0.0 : static_cast<double>(j) * static_cast<double>(w - 1) / static_cast<double>(outW - 1);
      const auto j0 = static_cast<Eigen::Index>(std::floor(sj));
      const Eigen::Index j1 = std::min(j0 + 1, w - 1);
      const double tj = sj - static_cast<double>(j0);
      const double top = lerpClamped(in(i0, j0), in(i0, j1), tj);
      const double bot = lerpClamped(in(i1, j0), in(i1, j1), tj);
      out(i, j) = lerpClamped(top, bot, ti);
    }
  }
  return out;
}

// Scales to [0,1]; a constant input becomes all zeros (flat maps are data,
// not errors). Idempotent on non-degenerate inputs.
template <typename Derived>
Array2d minMaxNormalize(const Eigen::ArrayBase<Derived>& t) {
  const Array2d a = t.derived();
  if (a.size() == 0) throw ValidationError("minMaxNormalize: empty input");
  const double lo = a.minCoeff();
  const double hi = a.maxCoeff();
  if (lo == hi) return Array2d::Zero(a.rows(), a.cols());
  return (a - lo) / (hi - lo);
}

// Divides by the (compensated) sum. Requires non-negative values and a
// positive total; an all-zero input is a degenerate map the caller decides
// how to handle.
template <typename Derived>
Array2d toDistribution(const Eigen::ArrayBase<Derived>& t) {
  const Array2d a = t.derived();
  if (a.size() == 0) throw ValidationError("toDistribution: empty input");
  if ((a < 0.0).any()) throw ValidationError("toDistribution: negative value");
  const double s = kahanSum(a);
  if (s <= 0.0) throw DegenerateDataError("toDistribution: all-zero input");
  return a / s;
}

// Median with the even-count rule (mean of the two middle values).
inline double medianValue(const Eigen::Ref<const Array2d>& a) {
  if (a.size() == 0) throw ValidationError("medianValue: empty input");
  std::vector<double> v(a.data(), a.data() + a.size());
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (n % 2 == 0) {
    const double below = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (below + m);
  }
  return m;
}

// Nearest-neighbor rotation about the image center, zero fill outside.
inline Array2d rotateNearest(const Eigen::Ref<const Array2d>& in, double angleDegrees) {
  const Eigen::Index h = in.rows(), w = in.cols();
  const double rad = angleDegrees * M_PI / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = 0.5 * static_cast<double>(h - 1);
  const double cx = 0.5 * static_cast<double>(w - 1);
  Array2d out = Array2d::Zero(h, w);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) {
      const double dy = static_cast<double>(i) - cy;
      const double dx = static_cast<double>(j) - cx;
      const double sy = c * dy - s * dx + cy;
      const double sx = s * dy + c * dx + cx;
      const auto ri = static_cast<Eigen::Index>(std::llround(sy));
      const auto rj = static_cast<Eigen::Index>(std::llround(sx));
      if (ri >= 0 && ri < h && rj >= 0 && rj < w) out(i, j) = in(ri, rj);
    }
  }
  return out;
}

// Row-major flattening; fixes the pixel order shared by serialization and
// the spatial-distribution metrics.
inline Eigen::VectorXd flattenRowMajor(const Eigen::Ref<const Array2d>& a) {
  Eigen::VectorXd v(a.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) v(k++) = a(i, j);
  return v;
}

// Normalized histogram of values in [0,1] over uniform bins.
inline Eigen::VectorXd intensityHistogram(const Eigen::Ref<const Array2d>& a, int bins) {
  if (bins < 2) throw ValidationError("intensityHistogram: bins must be >= 2");
  if (a.size() == 0) throw ValidationError("intensityHistogram: empty input");
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(bins);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double v = std::clamp(a(i, j), 0.0, 1.0);
      const auto b = std::min<Eigen::Index>(bins - 1, static_cast<Eigen::Index>(std::floor(v * bins)));
      hist(b) += 1.0;
    }
  }
  return hist / static_cast<double>(a.size());
}

inline Eigen::VectorXd uniformDistribution(Eigen::Index n) {
  return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
}

}  // namespace gamver
