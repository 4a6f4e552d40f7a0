#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gamver/errors.hpp"
#include "gamver/ops.hpp"
#include "gamver/verifier.hpp"
#include "oracles.hpp"

using namespace gamver;
namespace fs = std::filesystem;

namespace {

fs::path tempDir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "gamver_verifier_test" / leaf;
  fs::create_directories(dir);
  return dir;
}

NetworkConfig smallConfig(int classes, std::uint64_t seed, int input = 16) {
  NetworkConfig config;
  config.input_size = input;
  config.conv_layers = {{4, 3, 1, true}, {6, 3, 1, false}};
  config.hidden_units = 12;
  config.num_classes = classes;
  config.seed = seed;
  return config;
}

LabeledDataset makeSynth(SynthDomain domain, int classes, int per_class, std::uint64_t seed,
                         int size = 16) {
  SyntheticSpec spec;
  spec.domain = domain;
  spec.classes = classes;
  spec.samples_per_class = per_class;
  spec.noise_sigma = 0.03;
  spec.size = size;
  spec.seed = seed;
  return generateSynthetic(spec);
}

Network trainOn(const LabeledDataset& data, int classes, std::uint64_t seed, int epochs = 8) {
  return train(smallConfig(classes, seed), data.images, data.labels, epochs, 0.08, 8);
}

VerificationRecord fakeRecord(const std::string& id, double fill) {
  VerificationRecord r;
  r.sample_id = id;
  r.features.iou = fill;
  r.features.dice = fill;
  r.features.ssim = fill;
  r.features.cosine = fill;
  r.features.pearson = fill;
  r.features.kl = 1.0 - fill;
  r.features.wasserstein = 1.0 - fill;
  return r;
}

}  // namespace

TEST_CASE("reference from identical images equals the single-image GAM") {
  const LabeledDataset base = makeSynth(SynthDomain::rings, 2, 2, 1);
  const Network net = trainOn(base, 2, 7, 3);
  LabeledDataset same;
  for (int i = 0; i < 4; ++i) {
    same.images.push_back(base.images[0]);
    same.labels.push_back(base.labels[0]);
    same.names.push_back("dup" + std::to_string(i) + ".pgm");
  }
  ReferenceOptions options;
  options.working_size = 16;
  options.per_class = false;
  options.correct_only = false;
  const ReferenceBundle bundle = buildReference(net, same, options);
  const AttentionMap single = computeGradcam(net, base.images[0], base.labels[0], kLastConvLayer, 16);
  CHECK((bundle.class_gams[0].map - single.map).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("correct-only reference building fails when nothing qualifies") {
  const LabeledDataset base = makeSynth(SynthDomain::rings, 2, 3, 2);
  NetworkConfig config = smallConfig(2, 3);
  Network net{config, init(config)};
  // rig the head so class 0 always wins, then claim every sample is class 1
  net.params.output.weights.setZero();
  net.params.output.bias << 1.0, 0.0;
  LabeledDataset mislabeled = base;
  for (auto& y : mislabeled.labels) y = 1;
  ReferenceOptions options;
  options.working_size = 16;
  options.per_class = false;
  CHECK_THROWS_AS(buildReference(net, mislabeled, options), DegenerateDataError);
}

TEST_CASE("reference bundle round-trips bit-exactly") {
  const LabeledDataset data = makeSynth(SynthDomain::rings, 2, 4, 3);
  const Network net = trainOn(data, 2, 11, 4);
  ReferenceOptions options;
  options.working_size = 20;
  options.per_class = true;
  options.correct_only = false;
  options.metrics.epsilon = 1e-9;
  options.metrics.histogram_bins = 32;
  const ReferenceBundle bundle = buildReference(net, data, options);

  const fs::path dir = tempDir("roundtrip");
  saveReference(dir, bundle);
  const ReferenceBundle back = loadReference(dir);
  CHECK(back.working_size == bundle.working_size);
  CHECK(back.per_class == bundle.per_class);
  CHECK(back.num_classes == bundle.num_classes);
  CHECK(back.gam_layer == bundle.gam_layer);
  CHECK(back.metrics.epsilon == bundle.metrics.epsilon);
  CHECK(back.metrics.histogram_bins == bundle.metrics.histogram_bins);
  CHECK(back.model_fingerprint == bundle.model_fingerprint);
  REQUIRE(back.class_gams.size() == bundle.class_gams.size());
  for (std::size_t i = 0; i < back.class_gams.size(); ++i)
    CHECK((back.class_gams[i].map == bundle.class_gams[i].map).all());
  REQUIRE(back.layer_refs.size() == bundle.layer_refs.size());
  for (const auto& [layer, map] : bundle.layer_refs)
    CHECK((back.layer_refs.at(layer).map == map.map).all());
}

TEST_CASE("self-reference identity: single-image bundle scores as a perfect match") {
  const LabeledDataset data = makeSynth(SynthDomain::rings, 2, 2, 4);
  const Network net = trainOn(data, 2, 13, 4);
  LabeledDataset one;
  one.images.push_back(data.images[1]);
  one.labels.push_back(data.labels[1]);
  one.names.push_back(data.names[1]);
  ReferenceOptions options;
  options.working_size = 16;
  options.per_class = false;
  options.correct_only = false;
  const ReferenceBundle bundle = buildReference(net, one, options);

  const VerificationRecord r = extractRecord(net, one.images[0], bundle, VerifyMethod::gradcam, "self");
  CHECK(std::abs(r.features.iou - 1.0) <= 1e-9);
  CHECK(std::abs(r.features.dice - 1.0) <= 1e-9);
  CHECK(std::abs(r.features.ssim - 1.0) <= 1e-9);
  CHECK(std::abs(r.features.cosine - 1.0) <= 1e-9);
  CHECK(r.features.wasserstein <= 1e-9);
}

TEST_CASE("all-zero candidate GAM sets the degeneracy flag instead of throwing") {
  const LabeledDataset data = makeSynth(SynthDomain::rings, 2, 2, 5);
  const Network ref_net = trainOn(data, 2, 17, 3);
  ReferenceOptions options;
  options.working_size = 16;
  options.per_class = false;
  options.correct_only = false;
  const ReferenceBundle bundle = buildReference(ref_net, data, options);

  // both head weights negative: every class gradient is negative, the CAM
  // rectifies to zero
  NetworkConfig config = smallConfig(2, 19);
  Network zero_net{config, init(config)};
  zero_net.params.output.weights.setConstant(-0.5);
  zero_net.params.output.weights.row(1).setConstant(-0.25);
  const VerificationRecord r =
      extractRecord(zero_net, data.images[0], bundle, VerifyMethod::gradcam, "zero");
  CHECK(r.degenerate);
  CHECK(r.features.iou == 0.0);
  CHECK(std::isfinite(r.features.kl));
  CHECK(std::isfinite(r.features.wasserstein));
}

TEST_CASE("featuremap extraction requires the layer reference") {
  const LabeledDataset data = makeSynth(SynthDomain::rings, 2, 2, 6);
  const Network net = trainOn(data, 2, 23, 3);
  ReferenceOptions options;
  options.working_size = 16;
  options.per_class = false;
  options.correct_only = false;
  options.layers = {0};  // only L1
  const ReferenceBundle bundle = buildReference(net, data, options);
  CHECK_NOTHROW(extractRecord(net, data.images[0], bundle, VerifyMethod::featuremap_l1, "a"));
  CHECK_THROWS_AS(extractRecord(net, data.images[0], bundle, VerifyMethod::featuremap_l2, "b"),
                  ValidationError);
}

TEST_CASE("assemble_dataset: counts, ordering, labels, duplicate detection") {
  std::vector<VerificationRecord> aligned, misaligned;
  for (int i = 0; i < 274; ++i) aligned.push_back(fakeRecord("a" + std::to_string(1000 + i), 0.9));
  for (int i = 0; i < 312; ++i) misaligned.push_back(fakeRecord("m" + std::to_string(1000 + i), 0.2));
  const FeatureDataset data = assembleDataset(aligned, misaligned);
  CHECK(data.rows() == 586);
  long long ones = 0;
  for (const int y : data.labels) ones += y;
  CHECK(ones == 274);
  CHECK(data.feature_names == featureNames());

  // duplicate across sides is an identity-hygiene error
  misaligned.push_back(fakeRecord("a1000", 0.1));
  CHECK_THROWS_AS(assembleDataset(aligned, misaligned), ValidationError);
  CHECK_THROWS_AS(assembleDataset({}, misaligned), ValidationError);
}

TEST_CASE("records csv round-trips doubles exactly") {
  std::vector<VerificationRecord> records;
  records.push_back(fakeRecord("x:one.pgm", 1.0 / 3.0));
  records.back().label = 1;
  records.push_back(fakeRecord("x:two.pgm", 0.123456789012345678));
  records.back().degenerate = true;
  const fs::path csv = tempDir("csv") / "records.csv";
  writeRecordsCsv(csv, records);
  const auto back = readRecordsCsv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].sample_id == "x:one.pgm");
  CHECK(back[0].features.iou == records[0].features.iou);
  CHECK(back[0].features.wasserstein == records[0].features.wasserstein);
  CHECK(back[0].label == 1);
  CHECK(back[1].degenerate);
  CHECK(back[1].label == -1);
}

TEST_CASE("fit_verifier: separable toy features give perfect CV; seeded reruns agree") {
  std::vector<VerificationRecord> aligned, misaligned;
  Rng rng(31);
  for (int i = 0; i < 25; ++i) {
    aligned.push_back(fakeRecord("a" + std::to_string(i), 0.8 + 0.1 * uniformReal(rng)));
    misaligned.push_back(fakeRecord("m" + std::to_string(i), 0.1 + 0.1 * uniformReal(rng)));
  }
  const FeatureDataset data = assembleDataset(aligned, misaligned);
  ForestConfig config;
  config.num_trees = 20;
  config.seed = 5;
  const VerifierFit fit_a = fitVerifier(data, config, 5, 0.5);
  CHECK(fit_a.cv_report.accuracy == 1.0);
  REQUIRE(fit_a.cv_report.roc_auc.has_value());
  CHECK(*fit_a.cv_report.roc_auc == 1.0);

  const VerifierFit fit_b = fitVerifier(data, config, 5, 0.5);
  CHECK(fit_a.oof_scores == fit_b.oof_scores);
  CHECK(fit_a.cv_report.accuracy == fit_b.cv_report.accuracy);
}

TEST_CASE("verify: garbage method accepts exactly the non-garbage argmax") {
  NetworkConfig config = smallConfig(3, 37);
  const Network net{config, init(config)};
  LabeledDataset data;
  Rng rng(38);
  for (int i = 0; i < 6; ++i) {
    data.images.push_back(oracle::randomArray(rng, 16, 16));
    data.labels.push_back(-1);
    data.names.push_back("img" + std::to_string(i) + ".pgm");
  }
  const VerifyOutcome outcome = verify(net, data, nullptr, nullptr, VerifyMethod::garbage, 0.5, 0.5);
  REQUIRE(outcome.verdicts.size() == 6);
  for (const auto& v : outcome.verdicts) {
    const auto [pred, probs] = predict(net, data.images[0]);
    (void)pred;
    (void)probs;
    REQUIRE(v.posterior.size() == 3);
    CHECK(v.probability == doctest::Approx(1.0 - v.posterior[2]).epsilon(1e-12));
  }
}

TEST_CASE("verify: metric method enforces accept == probability >= threshold and quorum") {
  const LabeledDataset data = makeSynth(SynthDomain::rings, 2, 3, 8);
  const Network net = trainOn(data, 2, 41, 3);
  ReferenceOptions options;
  options.working_size = 16;
  options.per_class = false;
  options.correct_only = false;
  const ReferenceBundle bundle = buildReference(net, data, options);
  const auto aligned = extractRecords(net, data, bundle, VerifyMethod::gradcam, "a", 1);
  std::vector<VerificationRecord> misaligned;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    misaligned.push_back(fakeRecord("m" + std::to_string(i), 0.05 + 0.01 * static_cast<double>(i)));
  }
  const FeatureDataset fd = assembleDataset(aligned, misaligned);
  ForestConfig fc;
  fc.num_trees = 15;
  fc.seed = 3;
  const ForestModel forest = fit(fc, fd);
  const VerifyOutcome outcome = verify(net, data, &bundle, &forest, VerifyMethod::gradcam, 0.5, 0.5);
  for (const auto& v : outcome.verdicts) CHECK(v.accept == (v.probability >= 0.5));
  long long accepted = 0;
  for (const auto& v : outcome.verdicts) accepted += v.accept;
  CHECK(outcome.accepted_fraction ==
        doctest::Approx(static_cast<double>(accepted) / static_cast<double>(outcome.verdicts.size())));
  CHECK(outcome.dataset_accept == (outcome.accepted_fraction >= 0.5));

  LabeledDataset empty;
  CHECK_THROWS_AS(verify(net, empty, &bundle, &forest, VerifyMethod::gradcam, 0.5, 0.5),
                  ValidationError);
}

TEST_CASE("readImagesLenient: bad files become error entries, the run continues") {
  const fs::path dir = tempDir("lenient");
  {
    const LabeledDataset data = makeSynth(SynthDomain::rings, 2, 1, 9);
    writeDataset(dir, data);
    std::ofstream bad(dir / "img_c1_0000.pgm", std::ios::trunc);  // clobber one file
    bad << "not an image";
  }
  std::vector<std::pair<std::string, std::string>> errors;
  const LabeledDataset loaded = readImagesLenient(dir, errors);
  CHECK(loaded.size() == 1);
  REQUIRE(errors.size() == 1);
  CHECK(errors[0].first == "img_c1_0000.pgm");
}

TEST_CASE("garbage_train_eval: report accounting and the zero-support rule") {
  const LabeledDataset in_domain = makeSynth(SynthDomain::rings, 2, 8, 10);
  const LabeledDataset garbage = makeSynth(SynthDomain::stripes, 2, 2, 11);
  LabeledDataset garbage_flat = garbage;  // merge stripe classes into one pool
  for (auto& y : garbage_flat.labels) y = 0;

  NetworkConfig config = smallConfig(3, 43);
  GarbageOptions options;
  options.test_split = 0.25;
  options.epochs = 4;
  options.learning_rate = 0.08;
  options.batch_size = 8;
  const GarbageResult outcome = garbageTrainEval(config, in_domain, garbage_flat, options);
  const GarbageClassReport& report = outcome.report;
  REQUIRE(report.rows.size() == 3);
  long long support = 0;
  for (const auto& row : report.rows) support += row.support;
  CHECK(support == report.test_size);
  // garbage pool has 4 images, split 0.25 -> exactly 1 held out
  CHECK(report.rows[2].support == 1);
  CHECK(outcome.extended_model.config.num_classes == 3);

  // test_split 0 keeps every garbage sample in training: support-0 row with
  // absent metrics
  GarbageOptions no_test = options;
  no_test.test_split = 0.0;
  const GarbageClassReport empty_report =
      garbageTrainEval(config, in_domain, garbage_flat, no_test).report;
  CHECK(empty_report.rows[2].support == 0);
  CHECK(!empty_report.rows[2].precision.has_value());
  CHECK(!empty_report.rows[2].recall.has_value());

  NetworkConfig wrong = smallConfig(2, 43);
  CHECK_THROWS_AS(garbageTrainEval(wrong, in_domain, garbage_flat, options), ValidationError);
  LabeledDataset no_garbage;
  CHECK_THROWS_AS(garbageTrainEval(config, in_domain, no_garbage, options), ValidationError);
}

TEST_CASE("rotation probe: angle validation and the identity-angle null result") {
  const LabeledDataset data = makeSynth(SynthDomain::stripes, 2, 6, 12);
  const Network net = trainOn(data, 2, 47, 4);
  ReferenceOptions options;
  options.working_size = 16;
  options.per_class = false;
  options.correct_only = false;
  const ReferenceBundle bundle = buildReference(net, data, options);
  ForestConfig fc;
  fc.num_trees = 20;
  fc.seed = 7;

  CHECK_THROWS_AS(rotationProbe(net, bundle, data, -5.0, VerifyMethod::featuremap_l1, fc),
                  ValidationError);
  CHECK_THROWS_AS(rotationProbe(net, bundle, data, 360.0, VerifyMethod::featuremap_l1, fc),
                  ValidationError);
  CHECK_THROWS_AS(rotationProbe(net, bundle, data, 90.0, VerifyMethod::gradcam, fc),
                  ValidationError);

  // angle 0: rotated copies are identical, discrimination collapses to chance
  const EvalReport report = rotationProbe(net, bundle, data, 0.0, VerifyMethod::featuremap_l1, fc, 4);
  REQUIRE(report.roc_auc.has_value());
  CHECK(*report.roc_auc > 0.3);
  CHECK(*report.roc_auc < 0.7);
}

TEST_CASE("extraction is independent of the worker count") {
  const LabeledDataset data = makeSynth(SynthDomain::rings, 2, 4, 13);
  const Network net = trainOn(data, 2, 53, 3);
  ReferenceOptions options;
  options.working_size = 16;
  options.per_class = false;
  options.correct_only = false;
  const ReferenceBundle bundle = buildReference(net, data, options);
  const auto serial = extractRecords(net, data, bundle, VerifyMethod::gradcam, "t", 1, 1);
  const auto parallel = extractRecords(net, data, bundle, VerifyMethod::gradcam, "t", 1, 4);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].sample_id == parallel[i].sample_id);
    CHECK(serial[i].features.asVector() == parallel[i].features.asVector());
  }
}
