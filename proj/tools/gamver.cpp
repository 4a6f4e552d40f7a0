// gamver: verification toolkit for convolutional classifiers based on
// gradient attention maps, early feature maps, and a garbage-class rejector.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>

#include "gamver/errors.hpp"
#include "gamver/gradcam.hpp"
#include "gamver/log.hpp"
#include "gamver/net.hpp"
#include "gamver/report.hpp"
#include "gamver/synth.hpp"
#include "gamver/verifier.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gamver;

namespace {

// Effective value resolution: CLI flag > config file > default.
class ConfigLayer {
public:
  ConfigLayer(const CLI::App* cmd, std::string config_path) : cmd_(cmd) {
    if (config_path.empty()) return;
    std::ifstream f(config_path);
    if (!f) throw ValidationError("cannot open config file " + config_path);
    try {
      f >> file_;
    } catch (const json::exception& e) {
      throw ValidationError("bad config file " + config_path + ": " + e.what());
    }
    if (!file_.is_object()) throw ValidationError("config file must hold a JSON object");
  }

  template <typename T>
  void overlay(const std::string& flag, T& value) const {
    const std::string key = flag.substr(2);  // strip leading --
    if (cmd_->count(flag) == 0 && file_.contains(key)) {
      try {
        value = file_.at(key).get<T>();
      } catch (const json::exception&) {
        throw ValidationError("config key '" + key + "' has the wrong type");
      }
    }
  }

private:
  const CLI::App* cmd_;
  json file_ = json::object();
};

std::vector<ConvLayerSpec> parseConvSpec(const std::string& text) {
  std::vector<ConvLayerSpec> layers;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    ConvLayerSpec spec;
    spec.pool_after = false;
    if (!item.empty() && item.back() == 'p') {
      spec.pool_after = true;
      item.pop_back();
    }
    const auto x = item.find('x');
    if (x == std::string::npos) throw ValidationError("bad --conv entry '" + item + "' (want FxK[sS][p])");
    spec.filters = parseInt(item.substr(0, x), "--conv filters");
    std::string rest = item.substr(x + 1);
    const auto s = rest.find('s');
    if (s != std::string::npos) {
      spec.stride = parseInt(rest.substr(s + 1), "--conv stride");
      rest = rest.substr(0, s);
    }
    spec.kernel = parseInt(rest, "--conv kernel");
    layers.push_back(spec);
  }
  if (layers.empty()) throw ValidationError("--conv parsed to zero layers");
  return layers;
}

json convSpecToJson(const std::vector<ConvLayerSpec>& layers) {
  json out = json::array();
  for (const auto& spec : layers)
    out.push_back({{"filters", spec.filters},
                   {"kernel", spec.kernel},
                   {"stride", spec.stride},
                   {"poolAfter", spec.pool_after}});
  return out;
}

std::vector<int> parseLayerList(const std::string& text) {
  std::vector<int> layers;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    layers.push_back(parseInt(item, "--layers entry") - 1);  // 1-based ordinals
  if (layers.empty()) throw ValidationError("--layers parsed to zero entries");
  return layers;
}

void printEvalTable(const EvalReport& r) {
  std::printf("%-12s %10s\n", "metric", "value");
  std::printf("%-12s %10.4f\n", "accuracy", r.accuracy);
  std::printf("%-12s %10.4f\n", "precision", r.precision);
  std::printf("%-12s %10.4f\n", "recall", r.recall);
  std::printf("%-12s %10.4f\n", "f1", r.f1);
  if (r.roc_auc)
    std::printf("%-12s %10.4f\n", "rocAuc", *r.roc_auc);
  else
    std::printf("%-12s %10s\n", "rocAuc", "n/a");
  std::printf("confusion: tp=%lld fp=%lld tn=%lld fn=%lld\n", r.tp, r.fp, r.tn, r.fn);
}

// ---------------------------------------------------------------- synthgen

int cmdSynthgen(const CLI::App* cmd, const std::string& config_path, std::string domain,
                int classes, int samples, double noise, int size, std::uint64_t seed,
                std::string out) {
  const ConfigLayer cfg(cmd, config_path);
  cfg.overlay("--domain", domain);
  cfg.overlay("--classes", classes);
  cfg.overlay("--samples-per-class", samples);
  cfg.overlay("--noise", noise);
  cfg.overlay("--size", size);
  cfg.overlay("--seed", seed);
  cfg.overlay("--out", out);
  if (out.empty()) throw ValidationError("--out is required");

  SyntheticSpec spec;
  spec.domain = synthDomainFromString(domain);
  spec.classes = classes;
  spec.samples_per_class = samples;
  spec.noise_sigma = noise;
  spec.size = size;
  spec.seed = seed;
  const LabeledDataset data = generateSynthetic(spec);
  writeDataset(out, data);
  log::info("synthgen: wrote ", data.size(), " images to ", out);

  json report = makeReport("synthgen", {{"domain", domain},
                                        {"classes", classes},
                                        {"samples-per-class", samples},
                                        {"noise", noise},
                                        {"size", size},
                                        {"seed", seed},
                                        {"out", out}});
  report["files"] = data.size();
  report["classes"] = classes;
  report["samplesPerClass"] = samples;
  report["domain"] = domain;
  report["outDir"] = out;
  writeReport(fs::path(out) / "dataset.json", report);
  std::printf("synthgen: %zu images (%d classes x %d samples) -> %s\n", data.size(), classes,
              samples, out.c_str());
  return 0;
}

// ------------------------------------------------------------------- train

int cmdTrain(const CLI::App* cmd, const std::string& config_path, std::string data_dir,
             std::string out, std::uint64_t seed, int epochs, double lr, int batch, int hidden,
             int classes, std::string conv) {
  const ConfigLayer cfg(cmd, config_path);
  cfg.overlay("--data", data_dir);
  cfg.overlay("--out", out);
  cfg.overlay("--seed", seed);
  cfg.overlay("--epochs", epochs);
  cfg.overlay("--lr", lr);
  cfg.overlay("--batch-size", batch);
  cfg.overlay("--hidden", hidden);
  cfg.overlay("--classes", classes);
  cfg.overlay("--conv", conv);
  if (data_dir.empty() || out.empty()) throw ValidationError("--data and --out are required");

  const LabeledDataset data = readDataset(data_dir);
  NetworkConfig config;
  config.input_size = static_cast<int>(data.images[0].rows());
  config.conv_layers = parseConvSpec(conv);
  config.hidden_units = hidden;
  config.num_classes = classes > 0 ? classes : data.numClasses();
  config.seed = seed;

  const Network net = train(config, data.images, data.labels, epochs, lr, batch);
  saveNetwork(out, net);

  std::vector<const Array2d*> ptrs;
  for (const auto& img : data.images) ptrs.push_back(&img);
  const double final_loss = meanLoss(net, ptrs, data.labels);
  long long correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto [pred, probs] = predict(net, data.images[i]);
    (void)probs;
    correct += pred == data.labels[i];
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  log::info("train: final loss ", final_loss, ", train accuracy ", accuracy);

  json report = makeReport("train", {{"data", data_dir},
                                     {"out", out},
                                     {"seed", seed},
                                     {"epochs", epochs},
                                     {"lr", lr},
                                     {"batch-size", batch},
                                     {"hidden", hidden},
                                     {"classes", config.num_classes},
                                     {"conv", conv},
                                     {"convLayers", convSpecToJson(config.conv_layers)},
                                     {"inputSize", config.input_size}});
  report["finalLoss"] = final_loss;
  report["trainAccuracy"] = accuracy;
  report["modelDir"] = out;
  report["fingerprint"] = networkFingerprint(net);
  report["epochs"] = epochs;
  writeReport(fs::path(out) / "train_report.json", report);
  std::printf("train: %zu images, %d epochs -> loss %.6f, accuracy %.4f\n", data.size(), epochs,
              final_loss, accuracy);
  return 0;
}

// --------------------------------------------------------------- build-ref

int cmdBuildRef(const CLI::App* cmd, const std::string& config_path, std::string model_dir,
                std::string data_dir, std::string out, int working_size, bool global_mode,
                bool all_samples, std::string layers, double epsilon, int bins) {
  const ConfigLayer cfg(cmd, config_path);
  cfg.overlay("--model", model_dir);
  cfg.overlay("--data", data_dir);
  cfg.overlay("--out", out);
  cfg.overlay("--working-size", working_size);
  cfg.overlay("--layers", layers);
  cfg.overlay("--epsilon", epsilon);
  cfg.overlay("--bins", bins);
  if (model_dir.empty() || data_dir.empty() || out.empty())
    throw ValidationError("--model, --data and --out are required");

  const Network net = loadNetwork(model_dir);
  const LabeledDataset data = readDataset(data_dir);
  ReferenceOptions options;
  options.working_size = working_size;
  options.per_class = !global_mode;
  options.correct_only = !all_samples;
  options.layers = parseLayerList(layers);
  options.metrics.epsilon = epsilon;
  options.metrics.histogram_bins = bins;
  const ReferenceBundle bundle = buildReference(net, data, options);
  saveReference(out, bundle);

  std::vector<long long> per_class(bundle.class_gams.size(), 0);
  long long qualifying = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (options.correct_only) {
      const auto [pred, probs] = predict(net, data.images[i]);
      (void)probs;
      if (pred != data.labels[i]) continue;
    }
    qualifying++;
    if (options.per_class) per_class[static_cast<std::size_t>(data.labels[i])]++;
  }
  if (!options.per_class) per_class[0] = qualifying;

  json report = makeReport("build-ref", {{"model", model_dir},
                                         {"data", data_dir},
                                         {"out", out},
                                         {"working-size", working_size},
                                         {"global", global_mode},
                                         {"all-samples", all_samples},
                                         {"layers", layers},
                                         {"epsilon", epsilon},
                                         {"bins", bins}});
  report["qualifyingSamples"] = qualifying;
  report["perClassCounts"] = per_class;
  report["workingSize"] = working_size;
  report["fingerprint"] = bundle.model_fingerprint;
  writeReport(fs::path(out) / "build_report.json", report);
  std::printf("build-ref: %lld qualifying samples -> %s (working size %d)\n", qualifying,
              out.c_str(), working_size);
  return 0;
}

// ----------------------------------------------------------------- extract

int cmdExtract(const CLI::App* cmd, const std::string& config_path, std::string model_dir,
               std::string ref_dir, std::string data_dir, std::string method_name, int label,
               std::string tag, std::string out, int jobs) {
  const ConfigLayer cfg(cmd, config_path);
  cfg.overlay("--model", model_dir);
  cfg.overlay("--ref", ref_dir);
  cfg.overlay("--data", data_dir);
  cfg.overlay("--method", method_name);
  cfg.overlay("--label", label);
  cfg.overlay("--tag", tag);
  cfg.overlay("--out", out);
  cfg.overlay("--jobs", jobs);
  if (model_dir.empty() || ref_dir.empty() || data_dir.empty() || out.empty())
    throw ValidationError("--model, --ref, --data and --out are required");
  const VerifyMethod method = methodFromString(method_name);
  if (method == VerifyMethod::garbage)
    throw ValidationError("extract: the garbage method has no similarity records");
  if (label < -1 || label > 1) throw ValidationError("--label must be 0, 1 or -1");

  const Network net = loadNetwork(model_dir);
  const ReferenceBundle bundle = loadReference(ref_dir);
  const LabeledDataset data = readDataset(data_dir);
  if (tag.empty()) tag = fs::path(model_dir).filename().string();
  const auto records = extractRecords(net, data, bundle, method, tag, label, jobs);
  writeRecordsCsv(out, records);
  // feature batch in the GAMV container, next to the CSV
  std::vector<SimilarityVector> features;
  features.reserve(records.size());
  for (const auto& r : records) features.push_back(r.features);
  fs::path gamv_path(out);
  gamv_path.replace_extension(".gamv");
  writeGamv(gamv_path, featuresToTensor(features));

  long long degenerate = 0;
  for (const auto& r : records) degenerate += r.degenerate;
  json report = makeReport("extract", {{"model", model_dir},
                                       {"ref", ref_dir},
                                       {"data", data_dir},
                                       {"method", method_name},
                                       {"label", label},
                                       {"tag", tag},
                                       {"out", out},
                                       {"jobs", jobs}});
  report["records"] = records.size();
  report["degenerateCount"] = degenerate;
  report["csv"] = out;
  report["method"] = method_name;
  report["label"] = label;
  fs::path report_path(out);
  report_path.replace_extension(".report.json");
  writeReport(report_path, report);
  std::printf("extract: %zu records (%lld degenerate) -> %s\n", records.size(), degenerate,
              out.c_str());
  return 0;
}

// -------------------------------------------------------------- fit-verify

int cmdFitVerify(const CLI::App* cmd, const std::string& config_path, std::string aligned_csv,
                 std::string misaligned_csv, std::string out, int folds, int trees, int max_depth,
                 int min_leaf, int features_per_split, std::uint64_t seed, double threshold,
                 int jobs) {
  const ConfigLayer cfg(cmd, config_path);
  cfg.overlay("--aligned", aligned_csv);
  cfg.overlay("--misaligned", misaligned_csv);
  cfg.overlay("--out", out);
  cfg.overlay("--folds", folds);
  cfg.overlay("--trees", trees);
  cfg.overlay("--max-depth", max_depth);
  cfg.overlay("--min-samples-leaf", min_leaf);
  cfg.overlay("--features-per-split", features_per_split);
  cfg.overlay("--seed", seed);
  cfg.overlay("--threshold", threshold);
  cfg.overlay("--jobs", jobs);
  if (aligned_csv.empty() || misaligned_csv.empty() || out.empty())
    throw ValidationError("--aligned, --misaligned and --out are required");

  const auto aligned = readRecordsCsv(aligned_csv);
  const auto misaligned = readRecordsCsv(misaligned_csv);
  const FeatureDataset data = assembleDataset(aligned, misaligned);
  ForestConfig config;
  config.num_trees = trees;
  config.max_depth = max_depth;
  config.min_samples_leaf = min_leaf;
  config.features_per_split = features_per_split;
  config.seed = seed;
  const VerifierFit result = fitVerifier(data, config, folds, threshold, jobs);

  fs::create_directories(out);
  {
    std::ofstream f(fs::path(out) / "forest.json", std::ios::trunc);
    if (!f) throw ValidationError("cannot open " + (fs::path(out) / "forest.json").string());
    f << forestToJson(result.model);
  }
  long long positives = 0;
  for (const int y : data.labels) positives += y;
  json report = makeReport("fit-verify", {{"aligned", aligned_csv},
                                          {"misaligned", misaligned_csv},
                                          {"out", out},
                                          {"folds", folds},
                                          {"trees", trees},
                                          {"max-depth", max_depth},
                                          {"min-samples-leaf", min_leaf},
                                          {"features-per-split", features_per_split},
                                          {"seed", seed},
                                          {"threshold", threshold},
                                          {"jobs", jobs}});
  report["rows"] = data.rows();
  report["positives"] = positives;
  report["folds"] = folds;
  report["cv"] = evalReportToJson(result.cv_report);
  report["forestFile"] = (fs::path(out) / "forest.json").string();
  writeReport(fs::path(out) / "report.json", report);
  std::printf("fit-verify: %lld rows (%lld aligned), %d-fold CV\n",
              static_cast<long long>(data.rows()), positives, folds);
  printEvalTable(result.cv_report);
  return 0;
}

// ------------------------------------------------------------------ verify

int cmdVerify(const CLI::App* cmd, const std::string& config_path, std::string model_dir,
              std::string ref_dir, std::string verifier_file, std::string data_dir,
              std::string method_name, double threshold, double quorum, std::string out,
              int jobs) {
  const ConfigLayer cfg(cmd, config_path);
  cfg.overlay("--model", model_dir);
  cfg.overlay("--ref", ref_dir);
  cfg.overlay("--verifier", verifier_file);
  cfg.overlay("--data", data_dir);
  cfg.overlay("--method", method_name);
  cfg.overlay("--threshold", threshold);
  cfg.overlay("--quorum", quorum);
  cfg.overlay("--out", out);
  cfg.overlay("--jobs", jobs);
  if (model_dir.empty() || data_dir.empty() || out.empty())
    throw ValidationError("--model, --data and --out are required");
  const VerifyMethod method = methodFromString(method_name);

  const Network net = loadNetwork(model_dir);
  ReferenceBundle bundle;
  ForestModel forest;
  const ReferenceBundle* bundle_ptr = nullptr;
  const ForestModel* forest_ptr = nullptr;
  if (method != VerifyMethod::garbage) {
    if (ref_dir.empty() || verifier_file.empty())
      throw ValidationError("--ref and --verifier are required for metric methods");
    bundle = loadReference(ref_dir);
    std::ifstream f(verifier_file);
    if (!f) throw ValidationError("cannot open verifier " + verifier_file);
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    forest = forestFromJson(text);
    bundle_ptr = &bundle;
    forest_ptr = &forest;
  }

  std::vector<std::pair<std::string, std::string>> file_errors;
  LabeledDataset data;
  if (fs::is_directory(data_dir)) {
    data = readImagesLenient(data_dir, file_errors);
  } else {
    data.images.push_back(loadImage(data_dir).pixels);
    data.labels.push_back(-1);
    data.names.push_back(fs::path(data_dir).filename().string());
  }
  if (data.size() == 0) throw DegenerateDataError("verify: no readable images in " + data_dir);
  for (const auto& [name, message] : file_errors) log::warn("verify: skipping ", name, ": ", message);

  const VerifyOutcome outcome =
      verify(net, data, bundle_ptr, forest_ptr, method, threshold, quorum, jobs);

  json verdicts = json::array();
  for (const auto& v : outcome.verdicts) {
    json entry = {{"sampleId", v.sample_id},
                  {"accept", v.accept},
                  {"probability", v.probability},
                  {"method", toString(v.method)},
                  {"degenerate", v.degenerate}};
    if (method == VerifyMethod::garbage) {
      entry["features"] = nullptr;
      entry["posterior"] = v.posterior;
    } else {
      entry["features"] = similarityToJson(v.features);
      entry["posterior"] = nullptr;
    }
    verdicts.push_back(std::move(entry));
  }
  json errors = json::array();
  for (const auto& [name, message] : file_errors)
    errors.push_back({{"sampleId", name}, {"message", message}});

  json report = makeReport("verify", {{"model", model_dir},
                                      {"ref", ref_dir},
                                      {"verifier", verifier_file},
                                      {"data", data_dir},
                                      {"method", method_name},
                                      {"threshold", threshold},
                                      {"quorum", quorum},
                                      {"out", out},
                                      {"jobs", jobs}});
  report["method"] = method_name;
  report["threshold"] = threshold;
  report["quorum"] = quorum;
  report["acceptedFraction"] = outcome.accepted_fraction;
  report["datasetAccept"] = outcome.dataset_accept;
  report["verdicts"] = std::move(verdicts);
  report["errors"] = std::move(errors);
  writeReport(out, report);

  std::printf("%-30s %8s %12s\n", "sample", "accept", "probability");
  for (const auto& v : outcome.verdicts)
    std::printf("%-30s %8s %12.4f\n", v.sample_id.c_str(), v.accept ? "yes" : "no", v.probability);
  std::printf("dataset verdict: %s (accepted fraction %.3f, quorum %.2f)\n",
              outcome.dataset_accept ? "ACCEPT" : "REJECT", outcome.accepted_fraction, quorum);
  return 0;
}

// ---------------------------------------------------------------- fmverify

int cmdFmVerify(const CLI::App* cmd, const std::string& config_path, std::string model_dir,
                std::string ref_dir, std::string data_dir, double angle, std::string method_name,
                int folds, int trees, int max_depth, std::uint64_t seed, double threshold,
                std::string out, int jobs) {
  const ConfigLayer cfg(cmd, config_path);
  cfg.overlay("--model", model_dir);
  cfg.overlay("--ref", ref_dir);
  cfg.overlay("--data", data_dir);
  cfg.overlay("--angle", angle);
  cfg.overlay("--method", method_name);
  cfg.overlay("--folds", folds);
  cfg.overlay("--trees", trees);
  cfg.overlay("--max-depth", max_depth);
  cfg.overlay("--seed", seed);
  cfg.overlay("--threshold", threshold);
  cfg.overlay("--out", out);
  cfg.overlay("--jobs", jobs);
  if (model_dir.empty() || ref_dir.empty() || data_dir.empty() || out.empty())
    throw ValidationError("--model, --ref, --data and --out are required");

  const Network net = loadNetwork(model_dir);
  const ReferenceBundle bundle = loadReference(ref_dir);
  const LabeledDataset data = readDataset(data_dir);
  ForestConfig config;
  config.num_trees = trees;
  config.max_depth = max_depth;
  config.seed = seed;
  const EvalReport report_cv = rotationProbe(net, bundle, data, angle,
                                             methodFromString(method_name), config, folds,
                                             threshold, jobs);

  json report = makeReport("fmverify", {{"model", model_dir},
                                        {"ref", ref_dir},
                                        {"data", data_dir},
                                        {"angle", angle},
                                        {"method", method_name},
                                        {"folds", folds},
                                        {"trees", trees},
                                        {"max-depth", max_depth},
                                        {"seed", seed},
                                        {"threshold", threshold},
                                        {"out", out},
                                        {"jobs", jobs}});
  report["angle"] = angle;
  report["method"] = method_name;
  report["rows"] = 2 * data.size();
  report["cv"] = evalReportToJson(report_cv);
  writeReport(out, report);
  std::printf("fmverify: %s, rotation %.1f deg, %zu originals vs %zu rotated\n",
              method_name.c_str(), angle, data.size(), data.size());
  printEvalTable(report_cv);
  return 0;
}

// ----------------------------------------------------------------- garbage

int cmdGarbage(const CLI::App* cmd, const std::string& config_path, std::string data_dir,
               std::string garbage_dir, std::string out, std::uint64_t seed, int epochs, double lr,
               int batch, double test_split, int hidden, std::string conv) {
  const ConfigLayer cfg(cmd, config_path);
  cfg.overlay("--data", data_dir);
  cfg.overlay("--garbage-data", garbage_dir);
  cfg.overlay("--out", out);
  cfg.overlay("--seed", seed);
  cfg.overlay("--epochs", epochs);
  cfg.overlay("--lr", lr);
  cfg.overlay("--batch-size", batch);
  cfg.overlay("--test-split", test_split);
  cfg.overlay("--hidden", hidden);
  cfg.overlay("--conv", conv);
  if (data_dir.empty() || garbage_dir.empty() || out.empty())
    throw ValidationError("--data, --garbage-data and --out are required");

  const LabeledDataset in_domain = readDataset(data_dir);
  LabeledDataset garbage = readDataset(garbage_dir);
  for (auto& y : garbage.labels) y = 0;  // one undifferentiated garbage pool

  NetworkConfig config;
  config.input_size = static_cast<int>(in_domain.images[0].rows());
  config.conv_layers = parseConvSpec(conv);
  config.hidden_units = hidden;
  config.num_classes = in_domain.numClasses() + 1;
  config.seed = seed;
  GarbageOptions options;
  options.test_split = test_split;
  options.epochs = epochs;
  options.learning_rate = lr;
  options.batch_size = batch;
  const GarbageResult outcome = garbageTrainEval(config, in_domain, garbage, options);
  const GarbageClassReport& result = outcome.report;
  saveNetwork(fs::path(out) / "model", outcome.extended_model);

  json report = makeReport("garbage", {{"data", data_dir},
                                       {"garbage-data", garbage_dir},
                                       {"out", out},
                                       {"seed", seed},
                                       {"epochs", epochs},
                                       {"lr", lr},
                                       {"batch-size", batch},
                                       {"test-split", test_split},
                                       {"hidden", hidden},
                                       {"conv", conv}});
  report.update(garbageReportToJson(result));
  fs::create_directories(out);
  writeReport(fs::path(out) / "garbage_report.json", report);

  std::printf("%-8s %10s %10s %10s %10s\n", "class", "precision", "recall", "f1", "support");
  for (const auto& row : result.rows) {
    if (row.precision)
      std::printf("%-8d %10.4f %10.4f %10.4f %10lld\n", row.cls, *row.precision, *row.recall,
                  *row.f1, row.support);
    else
      std::printf("%-8d %10s %10s %10s %10lld\n", row.cls, "n/a", "n/a", "n/a", row.support);
  }
  std::printf("%-8s %10.4f %10.4f %10.4f %10lld\n", "macro", result.macro_precision,
              result.macro_recall, result.macro_f1, result.test_size);
  std::printf("accuracy %.4f | in-domain: extended %.4f vs baseline %.4f\n", result.accuracy,
              result.in_domain_accuracy_extended, result.in_domain_accuracy_baseline);
  return 0;
}

// ------------------------------------------------------------------ report

int cmdReport(const CLI::App* cmd, const std::string& config_path, std::string records_csv,
              std::string out, std::string model_dir, std::string data_dir,
              std::string overlay_dir, int working_size) {
  const ConfigLayer cfg(cmd, config_path);
  cfg.overlay("--records", records_csv);
  cfg.overlay("--out", out);
  cfg.overlay("--model", model_dir);
  cfg.overlay("--data", data_dir);
  cfg.overlay("--overlay-dir", overlay_dir);
  cfg.overlay("--working-size", working_size);
  if (records_csv.empty() || out.empty()) throw ValidationError("--records and --out are required");

  const auto records = readRecordsCsv(records_csv);
  if (records.empty()) throw DegenerateDataError("report: no records in " + records_csv);

  std::map<int, std::vector<const VerificationRecord*>> by_label;
  for (const auto& r : records) by_label[r.label].push_back(&r);

  json by_label_json = json::array();
  std::printf("%-6s %-12s %10s %10s %10s %10s\n", "label", "metric", "mean", "min", "max", "std");
  for (const auto& [label, rows] : by_label) {
    json metrics;
    for (int f = 0; f < 7; ++f) {
      std::vector<double> values;
      values.reserve(rows.size());
      for (const auto* r : rows) values.push_back(r->features.asVector()(f));
      const double n = static_cast<double>(values.size());
      double mean = 0, lo = values[0], hi = values[0];
      for (const double v : values) {
        mean += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      mean /= n;
      double var = 0;
      for (const double v : values) var += (v - mean) * (v - mean);
      const double stddev = values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
      metrics[featureNames()[static_cast<std::size_t>(f)]] = {
          {"mean", mean}, {"min", lo}, {"max", hi}, {"std", stddev}};
      std::printf("%-6d %-12s %10.4f %10.4f %10.4f %10.4f\n", label,
                  featureNames()[static_cast<std::size_t>(f)].c_str(), mean, lo, hi, stddev);
    }
    by_label_json.push_back(
        {{"label", label}, {"count", rows.size()}, {"metrics", std::move(metrics)}});
  }

  int overlays = 0;
  if (!overlay_dir.empty()) {
    if (model_dir.empty() || data_dir.empty())
      throw ValidationError("--overlay-dir needs --model and --data");
    const Network net = loadNetwork(model_dir);
    const LabeledDataset data = readDataset(data_dir);
    fs::create_directories(overlay_dir);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const AttentionMap att =
          computeGradcam(net, data.images[i], kAutoClass, kLastConvLayer, working_size);
      fs::path out_png = fs::path(overlay_dir) / data.names[i];
      out_png.replace_extension(".png");
      exportOverlay(Image{data.images[i]}, att, out_png);
      overlays++;
    }
    log::info("report: wrote ", overlays, " overlays to ", overlay_dir);
  }

  json report = makeReport("report", {{"records", records_csv},
                                      {"out", out},
                                      {"model", model_dir},
                                      {"data", data_dir},
                                      {"overlay-dir", overlay_dir},
                                      {"working-size", working_size}});
  report["byLabel"] = std::move(by_label_json);
  writeReport(out, report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gamver: gradient-attention-map model verification toolkit"};
  app.require_subcommand(1);

  try {
    // synthgen
    auto* synth = app.add_subcommand("synthgen", "generate a labeled synthetic PGM dataset");
    std::string sg_config, sg_domain = "rings", sg_out;
    int sg_classes = 5, sg_samples = 100, sg_size = 32;
    double sg_noise = 0.05;
    std::uint64_t sg_seed = 0;
    synth->add_option("--config", sg_config);
    synth->add_option("--domain", sg_domain)->check(CLI::IsMember({"rings", "stripes", "blobs", "checker"}));
    synth->add_option("--classes", sg_classes);
    synth->add_option("--samples-per-class", sg_samples);
    synth->add_option("--noise", sg_noise);
    synth->add_option("--size", sg_size);
    synth->add_option("--seed", sg_seed);
    synth->add_option("--out", sg_out);

    // train
    auto* tr = app.add_subcommand("train", "train a classifier on a PGM dataset");
    std::string tr_config, tr_data, tr_out, tr_conv = "6x3p,12x3p";
    std::uint64_t tr_seed = 0;
    int tr_epochs = 30, tr_batch = 16, tr_hidden = 32, tr_classes = 0;
    double tr_lr = 0.05;
    tr->add_option("--config", tr_config);
    tr->add_option("--data", tr_data);
    tr->add_option("--out", tr_out);
    tr->add_option("--seed", tr_seed);
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--lr", tr_lr);
    tr->add_option("--batch-size", tr_batch);
    tr->add_option("--hidden", tr_hidden);
    tr->add_option("--classes", tr_classes);
    tr->add_option("--conv", tr_conv);

    // build-ref
    auto* br = app.add_subcommand("build-ref", "build the reference bundle for a trained model");
    std::string br_config, br_model, br_data, br_out, br_layers = "1,2";
    int br_working = 224, br_bins = 64;
    double br_epsilon = 1e-10;
    bool br_global = false, br_all = false;
    br->add_option("--config", br_config);
    br->add_option("--model", br_model);
    br->add_option("--data", br_data);
    br->add_option("--out", br_out);
    br->add_option("--working-size", br_working);
    br->add_flag("--global", br_global, "one global reference GAM instead of per-class maps");
    br->add_flag("--all-samples", br_all, "average over all samples, not only correct ones");
    br->add_option("--layers", br_layers, "feature-response layers, 1-based ordinals");
    br->add_option("--epsilon", br_epsilon);
    br->add_option("--bins", br_bins);

    // extract
    auto* ex = app.add_subcommand("extract", "extract similarity records for a candidate model");
    std::string ex_config, ex_model, ex_ref, ex_data, ex_method = "gradcam", ex_tag, ex_out;
    int ex_label = -1, ex_jobs = 1;
    ex->add_option("--config", ex_config);
    ex->add_option("--model", ex_model);
    ex->add_option("--ref", ex_ref);
    ex->add_option("--data", ex_data);
    ex->add_option("--method", ex_method);
    ex->add_option("--label", ex_label);
    ex->add_option("--tag", ex_tag);
    ex->add_option("--out", ex_out);
    ex->add_option("--jobs", ex_jobs);

    // fit-verify
    auto* fv = app.add_subcommand("fit-verify", "fit the random-forest verifier with k-fold CV");
    std::string fv_config, fv_aligned, fv_misaligned, fv_out;
    int fv_folds = 5, fv_trees = 100, fv_depth = 8, fv_min_leaf = 2, fv_fps = 3, fv_jobs = 1;
    std::uint64_t fv_seed = 0;
    double fv_threshold = 0.5;
    fv->add_option("--config", fv_config);
    fv->add_option("--aligned", fv_aligned);
    fv->add_option("--misaligned", fv_misaligned);
    fv->add_option("--out", fv_out);
    fv->add_option("--folds", fv_folds);
    fv->add_option("--trees", fv_trees);
    fv->add_option("--max-depth", fv_depth);
    fv->add_option("--min-samples-leaf", fv_min_leaf);
    fv->add_option("--features-per-split", fv_fps);
    fv->add_option("--seed", fv_seed);
    fv->add_option("--threshold", fv_threshold);
    fv->add_option("--jobs", fv_jobs);

    // verify
    auto* vf = app.add_subcommand("verify", "verdicts for a candidate model on images");
    std::string vf_config, vf_model, vf_ref, vf_verifier, vf_data, vf_method = "gradcam", vf_out;
    double vf_threshold = 0.5, vf_quorum = 0.5;
    int vf_jobs = 1;
    vf->add_option("--config", vf_config);
    vf->add_option("--model", vf_model);
    vf->add_option("--ref", vf_ref);
    vf->add_option("--verifier", vf_verifier);
    vf->add_option("--data", vf_data);
    vf->add_option("--method", vf_method);
    vf->add_option("--threshold", vf_threshold);
    vf->add_option("--quorum", vf_quorum);
    vf->add_option("--out", vf_out);
    vf->add_option("--jobs", vf_jobs);

    // fmverify
    auto* fm = app.add_subcommand("fmverify", "feature-map rotation probe");
    std::string fm_config, fm_model, fm_ref, fm_data, fm_method = "featuremap-L1", fm_out;
    double fm_angle = 90.0, fm_threshold = 0.5;
    int fm_folds = 5, fm_trees = 100, fm_depth = 8, fm_jobs = 1;
    std::uint64_t fm_seed = 0;
    fm->add_option("--config", fm_config);
    fm->add_option("--model", fm_model);
    fm->add_option("--ref", fm_ref);
    fm->add_option("--data", fm_data);
    fm->add_option("--angle", fm_angle);
    fm->add_option("--method", fm_method);
    fm->add_option("--folds", fm_folds);
    fm->add_option("--trees", fm_trees);
    fm->add_option("--max-depth", fm_depth);
    fm->add_option("--seed", fm_seed);
    fm->add_option("--threshold", fm_threshold);
    fm->add_option("--out", fm_out);
    fm->add_option("--jobs", fm_jobs);

    // garbage
    auto* gb = app.add_subcommand("garbage", "k+1-class garbage training and evaluation");
    std::string gb_config, gb_data, gb_garbage, gb_out, gb_conv = "6x3p,12x3p";
    std::uint64_t gb_seed = 0;
    int gb_epochs = 20, gb_batch = 16, gb_hidden = 32;
    double gb_lr = 0.05, gb_split = 0.25;
    gb->add_option("--config", gb_config);
    gb->add_option("--data", gb_data);
    gb->add_option("--garbage-data", gb_garbage);
    gb->add_option("--out", gb_out);
    gb->add_option("--seed", gb_seed);
    gb->add_option("--epochs", gb_epochs);
    gb->add_option("--lr", gb_lr);
    gb->add_option("--batch-size", gb_batch);
    gb->add_option("--test-split", gb_split);
    gb->add_option("--hidden", gb_hidden);
    gb->add_option("--conv", gb_conv);

    // report
    auto* rp = app.add_subcommand("report", "per-label statistics of a records CSV, plus overlays");
    std::string rp_config, rp_records, rp_out, rp_model, rp_data, rp_overlay;
    int rp_working = 224;
    rp->add_option("--config", rp_config);
    rp->add_option("--records", rp_records);
    rp->add_option("--out", rp_out);
    rp->add_option("--model", rp_model);
    rp->add_option("--data", rp_data);
    rp->add_option("--overlay-dir", rp_overlay);
    rp->add_option("--working-size", rp_working);

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      return app.exit(e) == 0 ? 0 : 2;
    }

    if (synth->parsed())
      return cmdSynthgen(synth, sg_config, sg_domain, sg_classes, sg_samples, sg_noise, sg_size,
                         sg_seed, sg_out);
    if (tr->parsed())
      return cmdTrain(tr, tr_config, tr_data, tr_out, tr_seed, tr_epochs, tr_lr, tr_batch,
                      tr_hidden, tr_classes, tr_conv);
    if (br->parsed())
      return cmdBuildRef(br, br_config, br_model, br_data, br_out, br_working, br_global, br_all,
                         br_layers, br_epsilon, br_bins);
    if (ex->parsed())
      return cmdExtract(ex, ex_config, ex_model, ex_ref, ex_data, ex_method, ex_label, ex_tag,
                        ex_out, ex_jobs);
    if (fv->parsed())
      return cmdFitVerify(fv, fv_config, fv_aligned, fv_misaligned, fv_out, fv_folds, fv_trees,
                          fv_depth, fv_min_leaf, fv_fps, fv_seed, fv_threshold, fv_jobs);
    if (vf->parsed())
      return cmdVerify(vf, vf_config, vf_model, vf_ref, vf_verifier, vf_data, vf_method,
                       vf_threshold, vf_quorum, vf_out, vf_jobs);
    if (fm->parsed())
      return cmdFmVerify(fm, fm_config, fm_model, fm_ref, fm_data, fm_angle, fm_method, fm_folds,
                         fm_trees, fm_depth, fm_seed, fm_threshold, fm_out, fm_jobs);
    if (gb->parsed())
      return cmdGarbage(gb, gb_config, gb_data, gb_garbage, gb_out, gb_seed, gb_epochs, gb_lr,
                        gb_batch, gb_split, gb_hidden, gb_conv);
    if (rp->parsed())
      return cmdReport(rp, rp_config, rp_records, rp_out, rp_model, rp_data, rp_overlay,
                       rp_working);
    return 2;
  } catch (const ValidationError& e) {
    log::error(e.what());
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DegenerateDataError& e) {
    log::error(e.what());
    std::fprintf(stderr, "degenerate data: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    log::error(e.what());
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
}
