#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gamver/gradcam.hpp"
#include "gamver/tensor.hpp"

// The seven similarity metrics comparing a candidate attention map against a
// reference, and the aggregate feature-vector builder feeding the forest.

namespace gamver {

struct SimilarityVector {
  double iou = 0.0;         // [0,1]
  double dice = 0.0;        // [0,1]
  double ssim = 0.0;        // [-1,1]
  double cosine = 0.0;      // [0,1]
  double pearson = 0.0;     // [-1,1]
  double kl = 0.0;          // >= 0 (nats, up to the epsilon perturbation)
  double wasserstein = 0.0; // >= 0 over the normalized bin domain

  Eigen::Matrix<double, 7, 1> asVector() const;
};

// Fixed feature order shared by CSV rows, datasets and the forest.
const std::vector<std::string>& featureNames();

struct MetricConfig {
  double epsilon = 1e-10;   // KL guard on the second distribution
  int histogram_bins = 64;  // Wasserstein intensity histogram
};

double iou(const BinaryMask& a, const BinaryMask& b);
double dice(const BinaryMask& a, const BinaryMask& b);

// Single-window SSIM from global means/variances/covariance;
// C1=(0.01)^2, C2=(0.03)^2 for dynamic range 1.
double ssimGlobal(const AttentionMap& a, const AttentionMap& b);

double cosine(const AttentionMap& a, const AttentionMap& b);
double pearson(const AttentionMap& a, const AttentionMap& b);

// sum_i p(i) ln(p(i)/(q(i)+eps)); terms with p(i)=0 contribute 0.
double klDivergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q, double epsilon = 1e-10);

// W1 between distributions over bin positions i/(B-1).
double wasserstein1d(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

struct ExtractionResult {
  SimilarityVector features;
  bool degenerate = false;
};

// Runs all seven metrics with the documented degenerate fallbacks: an
// all-zero map contributes a uniform distribution to KL/Wasserstein, and
// cosine/pearson report 0 with the degeneracy flag set. Pathology is the
// signal; nothing here throws for it.
ExtractionResult computeAll(const AttentionMap& candidate, const AttentionMap& reference,
                            const MetricConfig& config = {});

// 7 columns, fixed order, 17 significant digits.
std::string toCsvRow(const SimilarityVector& v);

// Batch form for the GAMV container: a rows x 7 tensor in feature order.
Tensor featuresToTensor(const std::vector<SimilarityVector>& rows);
std::vector<SimilarityVector> featuresFromTensor(const Tensor& t);

}  // namespace gamver
