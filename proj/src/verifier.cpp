#include "gamver/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "gamver/errors.hpp"
#include "gamver/ops.hpp"
#include "gamver/parallel.hpp"
#include "gamver/rng.hpp"

namespace gamver {

namespace {

int layerForMethod(VerifyMethod method) {
  switch (method) {
    case VerifyMethod::featuremap_l1: return 0;
    case VerifyMethod::featuremap_l2: return 1;
    default: throw ValidationError("method has no feature layer");
  }
}

AttentionMap normalizedFeatureMap(const Network& net, const Array2d& image, int layer,
                                  int working_size) {
  const FeatureResponseMap raw = featureResponse(net, image, layer, /*as_distribution=*/false);
  AttentionMap att;
  att.source_layer = layer;
  att.target_class = kAutoClass;
  att.map = minMaxNormalize(resizeBilinear(raw.map, working_size, working_size));
  att.normalized = true;
  return att;
}

}  // namespace

VerifyMethod methodFromString(const std::string& name) {
  if (name == "gradcam") return VerifyMethod::gradcam;
  if (name == "featuremap-L1") return VerifyMethod::featuremap_l1;
  if (name == "featuremap-L2") return VerifyMethod::featuremap_l2;
  if (name == "garbage") return VerifyMethod::garbage;
  throw ValidationError("unknown method: " + name +
                        " (expect gradcam|featuremap-L1|featuremap-L2|garbage)");
}

std::string toString(VerifyMethod method) {
  switch (method) {
    case VerifyMethod::gradcam: return "gradcam";
    case VerifyMethod::featuremap_l1: return "featuremap-L1";
    case VerifyMethod::featuremap_l2: return "featuremap-L2";
    case VerifyMethod::garbage: return "garbage";
  }
  return "?";
}

ReferenceBundle buildReference(const Network& ref_net, const LabeledDataset& data,
                               const ReferenceOptions& options) {
  if (data.size() == 0) throw ValidationError("buildReference: empty dataset");
  if (options.working_size < 1) throw ValidationError("buildReference: working size must be >= 1");
  for (const int layer : options.layers)
    if (layer < 0 || layer >= static_cast<int>(ref_net.config.conv_layers.size()))
      throw ValidationError("buildReference: feature layer out of range");

  const int num_classes = ref_net.config.num_classes;
  const int gam_layer = static_cast<int>(ref_net.config.conv_layers.size()) - 1;

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] < 0 || data.labels[i] >= num_classes)
      throw ValidationError("buildReference: label out of range for " + data.names[i]);
    if (options.correct_only) {
      const auto [pred, probs] = predict(ref_net, data.images[i]);
      (void)probs;
      if (pred != data.labels[i]) continue;
    }
    kept.push_back(i);
  }
  if (kept.empty())
    throw DegenerateDataError("buildReference: no qualifying samples (model misclassifies everything?)");

  std::vector<std::vector<AttentionMap>> gams_by_class(static_cast<std::size_t>(num_classes));
  std::vector<AttentionMap> gams_all;
  for (const std::size_t i : kept) {
    AttentionMap gam =
        computeGradcam(ref_net, data.images[i], data.labels[i], gam_layer, options.working_size);
    if (options.per_class)
      gams_by_class[static_cast<std::size_t>(data.labels[i])].push_back(gam);
    else
      gams_all.push_back(std::move(gam));
  }

  ReferenceBundle bundle;
  bundle.per_class = options.per_class;
  bundle.working_size = options.working_size;
  bundle.metrics = options.metrics;
  bundle.num_classes = num_classes;
  bundle.gam_layer = gam_layer;
  bundle.model_fingerprint = networkFingerprint(ref_net);
  if (options.per_class) {
    for (int cls = 0; cls < num_classes; ++cls) {
      auto& maps = gams_by_class[static_cast<std::size_t>(cls)];
      if (maps.empty())
        throw DegenerateDataError("buildReference: class " + std::to_string(cls) +
                                  " has zero qualifying samples");
      bundle.class_gams.push_back(averageAttention(maps));
      bundle.class_gams.back().target_class = cls;
    }
  } else {
    bundle.class_gams.push_back(averageAttention(gams_all));
  }

  for (const int layer : options.layers) {
    std::vector<AttentionMap> maps;
    maps.reserve(kept.size());
    for (const std::size_t i : kept)
      maps.push_back(normalizedFeatureMap(ref_net, data.images[i], layer, options.working_size));
    bundle.layer_refs.emplace(layer, averageAttention(maps));
  }
  return bundle;
}

void saveReference(const std::filesystem::path& dir, const ReferenceBundle& bundle) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["schemaVersion"] = 1;
  meta["workingSize"] = bundle.working_size;
  meta["averagingMode"] = bundle.per_class ? "per-class" : "global";
  meta["numClasses"] = bundle.num_classes;
  meta["gamLayer"] = bundle.gam_layer + 1;  // 1-based ordinal, as in featuremap-L<j>
  std::vector<int> layers;
  for (const auto& [layer, map] : bundle.layer_refs) layers.push_back(layer + 1);
  meta["featureLayers"] = layers;
  meta["epsilon"] = bundle.metrics.epsilon;
  meta["histogramBins"] = bundle.metrics.histogram_bins;
  meta["modelFingerprint"] = bundle.model_fingerprint;
  std::ofstream f(dir / "meta.json", std::ios::trunc);
  if (!f) throw ValidationError("saveReference: cannot open " + (dir / "meta.json").string());
  f << meta.dump(2) << "\n";

  for (std::size_t i = 0; i < bundle.class_gams.size(); ++i)
    writeGamv(dir / ("gam_class_" + std::to_string(i) + ".gamv"), toTensor(bundle.class_gams[i].map));
  for (const auto& [layer, map] : bundle.layer_refs)
    writeGamv(dir / ("layer_" + std::to_string(layer + 1) + ".gamv"), toTensor(map.map));
}

ReferenceBundle loadReference(const std::filesystem::path& dir) {
  std::ifstream f(dir / "meta.json");
  if (!f) throw ValidationError("loadReference: cannot open " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    f >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("loadReference: bad meta.json: " + std::string(e.what()));
  }
  ReferenceBundle bundle;
  bundle.working_size = meta.at("workingSize").get<int>();
  bundle.per_class = meta.at("averagingMode").get<std::string>() == "per-class";
  bundle.num_classes = meta.at("numClasses").get<int>();
  bundle.gam_layer = meta.at("gamLayer").get<int>() - 1;
  bundle.metrics.epsilon = meta.at("epsilon").get<double>();
  bundle.metrics.histogram_bins = meta.at("histogramBins").get<int>();
  bundle.model_fingerprint = meta.at("modelFingerprint").get<std::string>();

  const std::size_t gam_count = bundle.per_class ? static_cast<std::size_t>(bundle.num_classes) : 1;
  for (std::size_t i = 0; i < gam_count; ++i) {
    AttentionMap att;
    att.map = toArray2d(readGamv(dir / ("gam_class_" + std::to_string(i) + ".gamv")));
    att.source_layer = bundle.gam_layer;
    att.target_class = bundle.per_class ? static_cast<int>(i) : kAutoClass;
    att.normalized = true;
    if (att.map.rows() != bundle.working_size || att.map.cols() != bundle.working_size)
      throw ValidationError("loadReference: stored GAM does not match workingSize");
    bundle.class_gams.push_back(std::move(att));
  }
  for (const int ordinal : meta.at("featureLayers").get<std::vector<int>>()) {
    AttentionMap att;
    att.map = toArray2d(readGamv(dir / ("layer_" + std::to_string(ordinal) + ".gamv")));
    att.source_layer = ordinal - 1;
    att.target_class = kAutoClass;
    att.normalized = true;
    if (att.map.rows() != bundle.working_size || att.map.cols() != bundle.working_size)
      throw ValidationError("loadReference: stored layer reference does not match workingSize");
    bundle.layer_refs.emplace(ordinal - 1, std::move(att));
  }
  return bundle;
}

VerificationRecord extractRecord(const Network& candidate, const Array2d& image,
                                 const ReferenceBundle& ref, VerifyMethod method,
                                 const std::string& sample_id) {
  VerificationRecord record;
  record.sample_id = sample_id;
  AttentionMap cand_map;
  const AttentionMap* ref_map = nullptr;
  if (method == VerifyMethod::gradcam) {
    cand_map = computeGradcam(candidate, image, kAutoClass, kLastConvLayer, ref.working_size);
    if (ref.per_class) {
      if (cand_map.target_class >= static_cast<int>(ref.class_gams.size()))
        throw ValidationError("extractRecord: predicted class " +
                              std::to_string(cand_map.target_class) +
                              " has no reference GAM");
      ref_map = &ref.class_gams[static_cast<std::size_t>(cand_map.target_class)];
    } else {
      ref_map = &ref.class_gams[0];
    }
  } else if (method == VerifyMethod::featuremap_l1 || method == VerifyMethod::featuremap_l2) {
    const int layer = layerForMethod(method);
    const auto it = ref.layer_refs.find(layer);
    if (it == ref.layer_refs.end())
      throw ValidationError("extractRecord: reference bundle has no layer_" +
                            std::to_string(layer + 1) + " map");
    if (layer >= static_cast<int>(candidate.config.conv_layers.size()))
      throw ValidationError("extractRecord: candidate has no conv layer " + std::to_string(layer + 1));
    cand_map = normalizedFeatureMap(candidate, image, layer, ref.working_size);
    ref_map = &it->second;
  } else {
    throw ValidationError("extractRecord: method must be gradcam or featuremap-Lx");
  }
  const ExtractionResult res = computeAll(cand_map, *ref_map, ref.metrics);
  record.features = res.features;
  record.degenerate = res.degenerate;
  return record;
}

std::vector<VerificationRecord> extractRecords(const Network& candidate, const LabeledDataset& data,
                                               const ReferenceBundle& ref, VerifyMethod method,
                                               const std::string& tag, int label, int jobs) {
  std::vector<VerificationRecord> records(data.size());
  parallelFor(static_cast<int>(data.size()), jobs, [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    records[idx] = extractRecord(candidate, data.images[idx], ref, method,
                                 tag + ":" + data.names[idx]);
    records[idx].label = label;
  });
  return records;
}

void writeRecordsCsv(const std::filesystem::path& path, const std::vector<VerificationRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ValidationError("writeRecordsCsv: cannot open " + path.string());
  f << "sampleId,iou,dice,ssim,cosine,pearson,kl,wasserstein,degenerate,label\n";
  for (const auto& r : records) {
    if (r.sample_id.find(',') != std::string::npos)
      throw ValidationError("writeRecordsCsv: sampleId contains a comma: " + r.sample_id);
    f << r.sample_id << "," << toCsvRow(r.features) << "," << (r.degenerate ? 1 : 0) << ","
      << r.label << "\n";
  }
  if (!f) throw ValidationError("writeRecordsCsv: write failed for " + path.string());
}

std::vector<VerificationRecord> readRecordsCsv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("readRecordsCsv: cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) ||
      line.rfind("sampleId,iou,dice,ssim,cosine,pearson,kl,wasserstein,degenerate,label", 0) != 0)
    throw ValidationError("readRecordsCsv: bad header in " + path.string());
  std::vector<VerificationRecord> records;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 10)
      throw ValidationError("readRecordsCsv: malformed row in " + path.string());
    VerificationRecord r;
    r.sample_id = fields[0];
    const std::string what = "readRecordsCsv: row for " + fields[0];
    r.features.iou = parseDouble(fields[1], what);
    r.features.dice = parseDouble(fields[2], what);
    r.features.ssim = parseDouble(fields[3], what);
    r.features.cosine = parseDouble(fields[4], what);
    r.features.pearson = parseDouble(fields[5], what);
    r.features.kl = parseDouble(fields[6], what);
    r.features.wasserstein = parseDouble(fields[7], what);
    r.degenerate = parseInt(fields[8], what) != 0;
    r.label = parseInt(fields[9], what);
    records.push_back(std::move(r));
  }
  return records;
}

FeatureDataset assembleDataset(const std::vector<VerificationRecord>& aligned,
                               const std::vector<VerificationRecord>& misaligned) {
  if (aligned.empty() || misaligned.empty())
    throw ValidationError("assembleDataset: both aligned and misaligned records are required");
  std::vector<VerificationRecord> all;
  all.reserve(aligned.size() + misaligned.size());
  for (auto r : aligned) {
    r.label = 1;
    all.push_back(std::move(r));
  }
  for (auto r : misaligned) {
    r.label = 0;
    all.push_back(std::move(r));
  }
  std::sort(all.begin(), all.end(),
            [](const VerificationRecord& a, const VerificationRecord& b) {
              return a.sample_id < b.sample_id;
            });
  for (std::size_t i = 0; i + 1 < all.size(); ++i)
    if (all[i].sample_id == all[i + 1].sample_id)
      throw ValidationError("assembleDataset: duplicate sampleId " + all[i].sample_id);

  FeatureDataset data;
  data.features.resize(static_cast<Eigen::Index>(all.size()), 7);
  data.labels.resize(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    data.features.row(static_cast<Eigen::Index>(i)) = all[i].features.asVector().transpose();
    data.labels[i] = all[i].label;
  }
  validateDataset(data);
  return data;
}

VerifierFit fitVerifier(const FeatureDataset& data, const ForestConfig& config, int folds,
                        double threshold, int jobs) {
  validateDataset(data);
  if (folds < 2) throw ValidationError("fitVerifier: folds must be >= 2");
  const auto splits = stratifiedKFold(data.labels, folds, config.seed);
  VerifierFit out;
  out.folds = folds;
  out.oof_scores.assign(data.labels.size(), 0.0);
  for (const auto& split : splits) {
    FeatureDataset train;
    train.features.resize(static_cast<Eigen::Index>(split.train.size()), 7);
    train.labels.resize(split.train.size());
    for (std::size_t i = 0; i < split.train.size(); ++i) {
      train.features.row(static_cast<Eigen::Index>(i)) = data.features.row(split.train[i]);
      train.labels[i] = data.labels[static_cast<std::size_t>(split.train[i])];
    }
    const ForestModel fold_model = fit(config, train, jobs);
    for (const auto idx : split.test) {
      out.oof_scores[static_cast<std::size_t>(idx)] =
          predictProba(fold_model, data.features.row(idx).transpose());
    }
  }
  out.cv_report = evaluateScores(data.labels, out.oof_scores, threshold);
  out.model = fit(config, data, jobs);
  return out;
}

VerifyOutcome verify(const Network& candidate, const LabeledDataset& data,
                     const ReferenceBundle* ref, const ForestModel* forest, VerifyMethod method,
                     double threshold, double quorum, int jobs) {
  if (data.size() == 0) throw ValidationError("verify: no images");
  if (method != VerifyMethod::garbage) {
    if (ref == nullptr) throw ValidationError("verify: reference bundle required");
    if (forest == nullptr) throw ValidationError("verify: fitted verifier required");
  }
  VerifyOutcome out;
  out.verdicts.resize(data.size());
  parallelFor(static_cast<int>(data.size()), jobs, [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    Verdict& v = out.verdicts[idx];
    v.sample_id = data.names[idx];
    v.method = method;
    if (method == VerifyMethod::garbage) {
      const auto [pred, probs] = predict(candidate, data.images[idx]);
      const int garbage_index = candidate.config.num_classes - 1;
      v.posterior.assign(probs.data(), probs.data() + probs.size());
      v.probability = 1.0 - probs(garbage_index);
      v.accept = pred != garbage_index;
    } else {
      const VerificationRecord record =
          extractRecord(candidate, data.images[idx], *ref, method, data.names[idx]);
      v.features = record.features;
      v.degenerate = record.degenerate;
      v.probability = predictProba(*forest, record.features.asVector());
      v.accept = v.probability >= threshold;
    }
  });
  long long accepted = 0;
  for (const auto& v : out.verdicts) accepted += v.accept ? 1 : 0;
  out.accepted_fraction = static_cast<double>(accepted) / static_cast<double>(out.verdicts.size());
  out.dataset_accept = out.accepted_fraction >= quorum;
  return out;
}

LabeledDataset readImagesLenient(const std::filesystem::path& dir,
                                 std::vector<std::pair<std::string, std::string>>& errors) {
  if (!std::filesystem::is_directory(dir))
    throw ValidationError("readImagesLenient: not a directory: " + dir.string());
  LabeledDataset data;
  std::vector<std::pair<std::string, int>> entries;
  if (std::filesystem::exists(dir / "labels.csv")) {
    std::ifstream manifest(dir / "labels.csv");
    std::string line;
    std::getline(manifest, line);  // header
    while (std::getline(manifest, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      entries.emplace_back(line.substr(0, comma),
                           parseInt(line.substr(comma + 1), "labels.csv label"));
    }
  } else {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto ext = entry.path().extension().string();
      if (ext == ".pgm" || ext == ".png") entries.emplace_back(entry.path().filename().string(), -1);
    }
    std::sort(entries.begin(), entries.end());
  }
  for (const auto& [name, label] : entries) {
    try {
      data.images.push_back(loadImage(dir / name).pixels);
      data.labels.push_back(label);
      data.names.push_back(name);
    } catch (const std::exception& e) {
      errors.emplace_back(name, e.what());
    }
  }
  return data;
}

namespace {

// Per-class split indices: floor(n_c * test_split) go to test.
void splitIndices(const std::vector<int>& labels, int num_classes, double test_split,
                  std::uint64_t seed, std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
  Rng rng(mixSeed(seed, 0x73706c6974ULL));
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  for (auto& members : by_class) {
    shuffleInPlace(members, rng);
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(members.size()) * test_split));
    for (std::size_t i = 0; i < members.size(); ++i)
      (i < n_test ? test : train).push_back(members[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

double accuracyOn(const Network& net, const LabeledDataset& data, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  long long correct = 0;
  for (const auto i : idx) {
    const auto [pred, probs] = predict(net, data.images[i]);
    (void)probs;
    if (pred == data.labels[i]) correct++;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

GarbageResult garbageTrainEval(const NetworkConfig& config, const LabeledDataset& in_domain,
                               const LabeledDataset& garbage, const GarbageOptions& options) {
  if (garbage.size() == 0) throw ValidationError("garbageTrainEval: missing garbage samples");
  if (in_domain.size() == 0) throw ValidationError("garbageTrainEval: empty in-domain dataset");
  if (options.test_split < 0.0 || options.test_split >= 1.0)
    throw ValidationError("garbageTrainEval: test split must be in [0,1)");
  const int k = in_domain.numClasses();
  if (config.num_classes != k + 1)
    throw ValidationError("garbageTrainEval: config numClasses must be k+1 = " + std::to_string(k + 1));

  LabeledDataset merged = in_domain;
  for (std::size_t i = 0; i < garbage.size(); ++i) {
    merged.images.push_back(garbage.images[i]);
    merged.labels.push_back(k);  // the garbage index
    merged.names.push_back("garbage:" + garbage.names[i]);
  }

  std::vector<std::size_t> train_idx, test_idx;
  splitIndices(merged.labels, k + 1, options.test_split, config.seed, train_idx, test_idx);

  std::vector<Array2d> train_images;
  std::vector<int> train_labels;
  for (const auto i : train_idx) {
    train_images.push_back(merged.images[i]);
    train_labels.push_back(merged.labels[i]);
  }
  Network extended = train(config, train_images, train_labels, options.epochs,
                           options.learning_rate, options.batch_size);

  GarbageClassReport report;
  report.test_size = static_cast<long long>(test_idx.size());
  std::vector<long long> support(static_cast<std::size_t>(k + 1), 0);
  std::vector<long long> predicted(static_cast<std::size_t>(k + 1), 0);
  std::vector<long long> correct(static_cast<std::size_t>(k + 1), 0);
  long long total_correct = 0;
  std::vector<std::size_t> in_domain_test;
  for (const auto i : test_idx) {
    const auto [pred, probs] = predict(extended, merged.images[i]);
    (void)probs;
    const int label = merged.labels[i];
    support[static_cast<std::size_t>(label)]++;
    predicted[static_cast<std::size_t>(pred)]++;
    if (pred == label) {
      correct[static_cast<std::size_t>(label)]++;
      total_correct++;
    }
    if (label < k) in_domain_test.push_back(i);
  }
  report.accuracy = test_idx.empty() ? 0.0
                                     : static_cast<double>(total_correct) /
                                           static_cast<double>(test_idx.size());

  double psum = 0.0, rsum = 0.0, fsum = 0.0;
  int counted = 0;
  for (int cls = 0; cls <= k; ++cls) {
    GarbageClassRow row;
    row.cls = cls;
    row.support = support[static_cast<std::size_t>(cls)];
    if (row.support > 0) {
      const double tp = static_cast<double>(correct[static_cast<std::size_t>(cls)]);
      const double prec = predicted[static_cast<std::size_t>(cls)] == 0
                              ? 0.0
                              : tp / static_cast<double>(predicted[static_cast<std::size_t>(cls)]);
      const double rec = tp / static_cast<double>(row.support);
      row.precision = prec;
      row.recall = rec;
      row.f1 = (prec + rec == 0.0) ? 0.0 : 2.0 * prec * rec / (prec + rec);
      psum += prec;
      rsum += rec;
      fsum += *row.f1;
      counted++;
    }
    report.rows.push_back(row);
  }
  if (counted > 0) {
    report.macro_precision = psum / counted;
    report.macro_recall = rsum / counted;
    report.macro_f1 = fsum / counted;
  }

  // Baseline: same architecture without the garbage class, trained on the
  // in-domain portion of the same split.
  NetworkConfig baseline_config = config;
  baseline_config.num_classes = k;
  std::vector<Array2d> base_images;
  std::vector<int> base_labels;
  for (const auto i : train_idx) {
    if (merged.labels[i] < k) {
      base_images.push_back(merged.images[i]);
      base_labels.push_back(merged.labels[i]);
    }
  }
  const Network baseline = train(baseline_config, base_images, base_labels, options.epochs,
                                 options.learning_rate, options.batch_size);
  report.in_domain_accuracy_extended = accuracyOn(extended, merged, in_domain_test);
  report.in_domain_accuracy_baseline = accuracyOn(baseline, merged, in_domain_test);
  return {std::move(report), std::move(extended)};
}

EvalReport rotationProbe(const Network& ref_net, const ReferenceBundle& ref,
                         const LabeledDataset& data, double angle_degrees, VerifyMethod method,
                         const ForestConfig& forest_config, int folds, double threshold, int jobs) {
  if (angle_degrees < 0.0 || angle_degrees >= 360.0)
    throw ValidationError("rotationProbe: angle must be in [0, 360)");
  if (method != VerifyMethod::featuremap_l1 && method != VerifyMethod::featuremap_l2)
    throw ValidationError("rotationProbe: method must be featuremap-L1 or featuremap-L2");
  if (folds < 2) throw ValidationError("rotationProbe: folds must be >= 2");
  if (static_cast<int>(data.size()) < folds)
    throw DegenerateDataError("rotationProbe: fewer images than folds");

  const std::vector<VerificationRecord> originals =
      extractRecords(ref_net, data, ref, method, "orig", 1, jobs);

  LabeledDataset rotated;
  rotated.labels = data.labels;
  rotated.names = data.names;
  rotated.images.reserve(data.size());
  for (const auto& img : data.images) rotated.images.push_back(rotateNearest(img, angle_degrees));
  const std::vector<VerificationRecord> rotated_records =
      extractRecords(ref_net, rotated, ref, method, "rot", 0, jobs);

  // Paired cross-validation: an image and its rotated copy always land in
  // the same fold. Splitting a pair would leak the twin's features into
  // training and invert the held-out score; with grouped folds an identity
  // rotation collapses to chance as it should.
  const std::size_t pairs = data.size();
  FeatureDataset all;
  all.features.resize(static_cast<Eigen::Index>(2 * pairs), 7);
  all.labels.resize(2 * pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    all.features.row(static_cast<Eigen::Index>(2 * i)) = originals[i].features.asVector().transpose();
    all.labels[2 * i] = 1;
    all.features.row(static_cast<Eigen::Index>(2 * i + 1)) =
        rotated_records[i].features.asVector().transpose();
    all.labels[2 * i + 1] = 0;
  }
  validateDataset(all);

  std::vector<std::size_t> pair_order(pairs);
  std::iota(pair_order.begin(), pair_order.end(), 0);
  Rng rng(mixSeed(forest_config.seed, 0x726f7461ULL));
  shuffleInPlace(pair_order, rng);

  std::vector<double> oof_scores(2 * pairs, 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> test_pairs, train_pairs;
    for (std::size_t p = 0; p < pairs; ++p)
      (static_cast<int>(p % static_cast<std::size_t>(folds)) == f ? test_pairs : train_pairs)
          .push_back(pair_order[p]);
    FeatureDataset train;
    train.features.resize(static_cast<Eigen::Index>(2 * train_pairs.size()), 7);
    train.labels.resize(2 * train_pairs.size());
    for (std::size_t i = 0; i < train_pairs.size(); ++i) {
      for (int half = 0; half < 2; ++half) {
        train.features.row(static_cast<Eigen::Index>(2 * i + static_cast<std::size_t>(half))) =
            all.features.row(static_cast<Eigen::Index>(2 * train_pairs[i] + static_cast<std::size_t>(half)));
        train.labels[2 * i + static_cast<std::size_t>(half)] =
            all.labels[2 * train_pairs[i] + static_cast<std::size_t>(half)];
      }
    }
    const ForestModel fold_model = fit(forest_config, train, jobs);
    for (const std::size_t p : test_pairs) {
      for (int half = 0; half < 2; ++half) {
        const auto row = static_cast<Eigen::Index>(2 * p + static_cast<std::size_t>(half));
        oof_scores[static_cast<std::size_t>(row)] =
            predictProba(fold_model, all.features.row(row).transpose());
      }
    }
  }
  return evaluateScores(all.labels, oof_scores, threshold);
}

}  // namespace gamver
