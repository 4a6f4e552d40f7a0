#include "gamver/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "gamver/errors.hpp"
#include "gamver/ops.hpp"

namespace gamver {

namespace {

void requireSameShape(const Array2d& a, const Array2d& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError(std::string(op) + ": shape mismatch");
}

void requireNormalizedMap(const AttentionMap& m, const char* op) {
  if (!m.normalized) throw ValidationError(std::string(op) + ": attention map must be normalized");
}

void requireDistribution(const Eigen::VectorXd& p, const char* op) {
  if ((p.array() < 0.0).any()) throw ValidationError(std::string(op) + ": negative probability");
  const double s = kahanSum(p.data(), static_cast<std::size_t>(p.size()));
  if (std::abs(s - 1.0) > 1e-9) throw ValidationError(std::string(op) + ": input does not sum to 1");
}

long long maskCount(const Array2d& m) { return static_cast<long long>(m.sum() + 0.5); }

long long intersectionCount(const Array2d& a, const Array2d& b) {
  return static_cast<long long>((a * b).sum() + 0.5);
}

}  // namespace

Eigen::Matrix<double, 7, 1> SimilarityVector::asVector() const {
  Eigen::Matrix<double, 7, 1> v;
  v << iou, dice, ssim, cosine, pearson, kl, wasserstein;
  return v;
}

const std::vector<std::string>& featureNames() {
  static const std::vector<std::string> names = {"iou",     "dice", "ssim",       "cosine",
                                                 "pearson", "kl",   "wasserstein"};
  return names;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  requireSameShape(a.mask, b.mask, "iou");
  const long long inter = intersectionCount(a.mask, b.mask);
  const long long uni = maskCount(a.mask) + maskCount(b.mask) - inter;
  if (uni == 0) return 1.0;  // identical emptiness
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  requireSameShape(a.mask, b.mask, "dice");
  const long long inter = intersectionCount(a.mask, b.mask);
  const long long total = maskCount(a.mask) + maskCount(b.mask);
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double ssimGlobal(const AttentionMap& a, const AttentionMap& b) {
  requireSameShape(a.map, b.map, "ssimGlobal");
  requireNormalizedMap(a, "ssimGlobal");
  requireNormalizedMap(b, "ssimGlobal");
  constexpr double c1 = 0.01 * 0.01;  // (K1*L)^2, L = 1
  constexpr double c2 = 0.03 * 0.03;
  const double n = static_cast<double>(a.map.size());
  const double mu_a = a.map.mean();
  const double mu_b = b.map.mean();
  const double var_a = ((a.map - mu_a) * (a.map - mu_a)).sum() / n;
  const double var_b = ((b.map - mu_b) * (b.map - mu_b)).sum() / n;
  const double cov = ((a.map - mu_a) * (b.map - mu_b)).sum() / n;
  return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
         ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

double cosine(const AttentionMap& a, const AttentionMap& b) {
  requireSameShape(a.map, b.map, "cosine");
  const double na = std::sqrt((a.map * a.map).sum());
  const double nb = std::sqrt((b.map * b.map).sum());
  if (na == 0.0 || nb == 0.0) throw DegenerateDataError("cosine: zero-norm map");
  return (a.map * b.map).sum() / (na * nb);
}

double pearson(const AttentionMap& a, const AttentionMap& b) {
  requireSameShape(a.map, b.map, "pearson");
  // constant detection on the raw values; the centered norm can round to a
  // nonzero denominator for a genuinely flat map
  if (a.map.minCoeff() == a.map.maxCoeff() || b.map.minCoeff() == b.map.maxCoeff())
    throw DegenerateDataError("pearson: constant map");
  const double mu_a = a.map.mean();
  const double mu_b = b.map.mean();
  const Array2d da = a.map - mu_a;
  const Array2d db = b.map - mu_b;
  const double sa = std::sqrt((da * da).sum());
  const double sb = std::sqrt((db * db).sum());
  return (da * db).sum() / (sa * sb);
}

double klDivergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double epsilon) {
  if (p.size() != q.size()) throw ValidationError("klDivergence: shape mismatch");
  if (!(epsilon > 0.0)) throw ValidationError("klDivergence: epsilon must be > 0");
  requireDistribution(p, "klDivergence");
  requireDistribution(q, "klDivergence");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) sum += p(i) * std::log(p(i) / (q(i) + epsilon));
  }
  return sum;
}

double wasserstein1d(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw ValidationError("wasserstein1d: shape mismatch");
  const Eigen::Index bins = p.size();
  if (bins < 2) throw ValidationError("wasserstein1d: need at least 2 bins");
  requireDistribution(p, "wasserstein1d");
  requireDistribution(q, "wasserstein1d");
  const double spacing = 1.0 / static_cast<double>(bins - 1);
  double cdf_p = 0.0, cdf_q = 0.0, w = 0.0;
  for (Eigen::Index i = 0; i + 1 < bins; ++i) {
    cdf_p += p(i);
    cdf_q += q(i);
    w += std::abs(cdf_p - cdf_q) * spacing;
  }
  return w;
}

ExtractionResult computeAll(const AttentionMap& candidate, const AttentionMap& reference,
                            const MetricConfig& config) {
  requireSameShape(candidate.map, reference.map, "computeAll");
  requireNormalizedMap(candidate, "computeAll");
  requireNormalizedMap(reference, "computeAll");

  ExtractionResult out;
  const bool cand_zero = (candidate.map == 0.0).all();
  const bool ref_zero = (reference.map == 0.0).all();
  // Normalized maps are constant only when all-zero, but manually built maps
  // may not be; constant maps fall back the same way.
  const bool cand_const = candidate.map.minCoeff() == candidate.map.maxCoeff();
  const bool ref_const = reference.map.minCoeff() == reference.map.maxCoeff();
  out.degenerate = cand_const || ref_const;

  const BinaryMask mask_c = binarizeMedian(candidate);
  const BinaryMask mask_r = binarizeMedian(reference);
  out.features.iou = iou(mask_c, mask_r);
  out.features.dice = dice(mask_c, mask_r);
  out.features.ssim = ssimGlobal(candidate, reference);
  out.features.cosine = (cand_zero || ref_zero) ? 0.0 : cosine(candidate, reference);
  out.features.pearson = (cand_const || ref_const) ? 0.0 : pearson(candidate, reference);

  const Eigen::Index n = candidate.map.size();
  const Eigen::VectorXd p =
      cand_zero ? uniformDistribution(n) : flattenRowMajor(toDistribution(candidate.map));
  const Eigen::VectorXd q =
      ref_zero ? uniformDistribution(n) : flattenRowMajor(toDistribution(reference.map));
  out.features.kl = klDivergence(p, q, config.epsilon);

  const Eigen::VectorXd hp = cand_zero ? uniformDistribution(config.histogram_bins)
                                       : intensityHistogram(candidate.map, config.histogram_bins);
  const Eigen::VectorXd hq = ref_zero ? uniformDistribution(config.histogram_bins)
                                      : intensityHistogram(reference.map, config.histogram_bins);
  out.features.wasserstein = wasserstein1d(hp, hq);
  return out;
}

std::string toCsvRow(const SimilarityVector& v) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", v.iou, v.dice,
                v.ssim, v.cosine, v.pearson, v.kl, v.wasserstein);
  return buf;
}

Tensor featuresToTensor(const std::vector<SimilarityVector>& rows) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(rows.size()), 7};
  t.values.reserve(rows.size() * 7);
  for (const auto& row : rows) {
    const auto v = row.asVector();
    for (int f = 0; f < 7; ++f) t.values.push_back(v(f));
  }
  return t;
}

std::vector<SimilarityVector> featuresFromTensor(const Tensor& t) {
  if (t.dims.size() != 2 || t.dims[1] != 7)
    throw ValidationError("featuresFromTensor: expected a rows x 7 tensor");
  std::vector<SimilarityVector> rows(t.dims[0]);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* p = t.values.data() + i * 7;
    rows[i].iou = p[0];
    rows[i].dice = p[1];
    rows[i].ssim = p[2];
    rows[i].cosine = p[3];
    rows[i].pearson = p[4];
    rows[i].kl = p[5];
    rows[i].wasserstein = p[6];
  }
  return rows;
}

}  // namespace gamver
