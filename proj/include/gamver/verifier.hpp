#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gamver/forest.hpp"
#include "gamver/gradcam.hpp"
#include "gamver/metrics.hpp"
#include "gamver/net.hpp"
#include "gamver/synth.hpp"

// End-to-end orchestration of the three verification methods: reference
// building, record extraction, verifier fitting, verdicts, and the
// garbage-class protocol.

namespace gamver {

enum class VerifyMethod { gradcam, featuremap_l1, featuremap_l2, garbage };

VerifyMethod methodFromString(const std::string& name);
std::string toString(VerifyMethod method);

struct ReferenceOptions {
  int working_size = 224;
  bool per_class = true;      // one reference GAM per class vs one global map
  bool correct_only = true;   // average only correctly classified samples
  std::vector<int> layers = {0, 1};  // conv layers for feature-response refs (0-based)
  MetricConfig metrics;
};

struct ReferenceBundle {
  std::vector<AttentionMap> class_gams;  // per class; single entry in global mode
  bool per_class = true;
  std::map<int, AttentionMap> layer_refs;  // 0-based conv layer -> normalized reference map
  int working_size = 224;
  MetricConfig metrics;
  std::string model_fingerprint;
  int num_classes = 0;
  int gam_layer = 0;
};

ReferenceBundle buildReference(const Network& ref_net, const LabeledDataset& data,
                               const ReferenceOptions& options);

// Directory layout: meta.json, gam_class_<i>.gamv, layer_<j>.gamv
// (<j> is the 1-based layer ordinal matching the featuremap-L<j> methods).
void saveReference(const std::filesystem::path& dir, const ReferenceBundle& bundle);
ReferenceBundle loadReference(const std::filesystem::path& dir);

struct VerificationRecord {
  std::string sample_id;
  SimilarityVector features;
  bool degenerate = false;
  int label = -1;  // 1 aligned, 0 misaligned, -1 unlabeled
};

VerificationRecord extractRecord(const Network& candidate, const Array2d& image,
                                 const ReferenceBundle& ref, VerifyMethod method,
                                 const std::string& sample_id);

std::vector<VerificationRecord> extractRecords(const Network& candidate, const LabeledDataset& data,
                                               const ReferenceBundle& ref, VerifyMethod method,
                                               const std::string& tag, int label, int jobs = 1);

// CSV schema: sampleId,iou,dice,ssim,cosine,pearson,kl,wasserstein,degenerate,label
void writeRecordsCsv(const std::filesystem::path& path, const std::vector<VerificationRecord>& records);
std::vector<VerificationRecord> readRecordsCsv(const std::filesystem::path& path);

// aligned -> label 1, misaligned -> label 0; rows ordered by sampleId.
FeatureDataset assembleDataset(const std::vector<VerificationRecord>& aligned,
                               const std::vector<VerificationRecord>& misaligned);

struct VerifierFit {
  ForestModel model;    // refit on all rows
  EvalReport cv_report; // pooled out-of-fold predictions
  std::vector<double> oof_scores;
  int folds = 5;
};

VerifierFit fitVerifier(const FeatureDataset& data, const ForestConfig& config, int folds = 5,
                        double threshold = 0.5, int jobs = 1);

struct Verdict {
  std::string sample_id;
  bool accept = false;
  double probability = 0.0;  // forest positive probability, or 1 - P(garbage)
  VerifyMethod method = VerifyMethod::gradcam;
  SimilarityVector features;      // metric methods
  std::vector<double> posterior;  // garbage method
  bool degenerate = false;
};

struct VerifyOutcome {
  std::vector<Verdict> verdicts;
  std::vector<std::pair<std::string, std::string>> errors;  // per-file failures
  double accepted_fraction = 0.0;
  bool dataset_accept = false;
};

// Per-image verdicts plus the dataset-level quorum verdict. For metric
// methods accept == (probability >= threshold); the garbage method accepts
// when the predicted class is not the garbage index.
VerifyOutcome verify(const Network& candidate, const LabeledDataset& data,
                     const ReferenceBundle* ref, const ForestModel* forest, VerifyMethod method,
                     double threshold = 0.5, double quorum = 0.5, int jobs = 1);

// Images from a directory; unreadable files become error entries instead of
// aborting the run. Uses labels.csv when present, otherwise takes every
// .pgm/.png in name order (labels -1).
LabeledDataset readImagesLenient(const std::filesystem::path& dir,
                                 std::vector<std::pair<std::string, std::string>>& errors);

struct GarbageOptions {
  double test_split = 0.25;
  int epochs = 20;
  double learning_rate = 0.05;
  int batch_size = 16;
};

struct GarbageClassRow {
  int cls = 0;
  std::optional<double> precision, recall, f1;  // absent when support is 0
  long long support = 0;
};

struct GarbageClassReport {
  std::vector<GarbageClassRow> rows;  // k+1 rows
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double accuracy = 0.0;  // on the full held-out set
  long long test_size = 0;
  // Non-degradation comparison on the in-domain portion of the held-out set.
  double in_domain_accuracy_extended = 0.0;
  double in_domain_accuracy_baseline = 0.0;
};

struct GarbageResult {
  GarbageClassReport report;
  Network extended_model;  // the trained k+1-class rejector
};

// Trains the k+1-class model (garbage samples labeled k) and the k-class
// baseline on the same split, then reports Table-style per-class rows.
GarbageResult garbageTrainEval(const NetworkConfig& config, const LabeledDataset& in_domain,
                               const LabeledDataset& garbage, const GarbageOptions& options);

// Discrimination between a dataset and its rotated copy through the
// feature-map pipeline (nearest-neighbor rotation, zero fill).
EvalReport rotationProbe(const Network& ref_net, const ReferenceBundle& ref,
                         const LabeledDataset& data, double angle_degrees, VerifyMethod method,
                         const ForestConfig& forest_config, int folds = 5, double threshold = 0.5,
                         int jobs = 1);

}  // namespace gamver
