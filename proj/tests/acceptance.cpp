// Acceptance suite. Each criterion prints one [PASS]/[FAIL] line; the
// process exits nonzero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gamver/forest.hpp"
#include "gamver/gradcam.hpp"
#include "gamver/metrics.hpp"
#include "gamver/net.hpp"
#include "gamver/ops.hpp"
#include "gamver/synth.hpp"
#include "gamver/verifier.hpp"
#include "oracles.hpp"

using namespace gamver;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void criterion(const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] %s — %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c, d);
  return buf;
}

// ------------------------------------------------------------ shared setup

struct Protocol {
  LabeledDataset rings;    // domain A, 5 classes
  LabeledDataset stripes;  // domain B, 5 classes
  Network ref_model;       // trained on A
  Network cand_a;          // trained on A, different seed
  Network cand_b;          // trained on B
  ReferenceBundle ref;     // per-class GAMs + layer refs at working size
};

NetworkConfig protocolConfig(std::uint64_t seed) {
  NetworkConfig config;
  config.input_size = 32;
  config.conv_layers = {{6, 3, 1, true}, {12, 3, 1, true}};
  config.hidden_units = 32;
  config.num_classes = 5;
  config.seed = seed;
  return config;
}

LabeledDataset makeDomain(SynthDomain domain, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.domain = domain;
  spec.classes = 5;
  spec.samples_per_class = 60;  // 300 images per domain
  spec.noise_sigma = 0.05;
  spec.size = 32;
  spec.seed = seed;
  return generateSynthetic(spec);
}

Protocol buildProtocol() {
  Protocol p;
  p.rings = makeDomain(SynthDomain::rings, 1001);
  p.stripes = makeDomain(SynthDomain::stripes, 2002);
  p.ref_model = train(protocolConfig(101), p.rings.images, p.rings.labels, 20, 0.05, 16);
  p.cand_a = train(protocolConfig(202), p.rings.images, p.rings.labels, 20, 0.05, 16);
  p.cand_b = train(protocolConfig(303), p.stripes.images, p.stripes.labels, 20, 0.05, 16);
  ReferenceOptions options;
  options.working_size = 64;
  options.per_class = true;
  options.correct_only = true;
  options.layers = {0, 1};
  p.ref = buildReference(p.ref_model, p.rings, options);
  return p;
}

// --------------------------------------------------- criterion: metric suite

void metricOracleSuite() {
  const auto start = Clock::now();
  bool ok = true;
  std::string detail;
  Rng rng(7);

  // masks: enumeration oracle on fixed and random inputs
  {
    BinaryMask a, b;
    a.mask.resize(2, 2);
    b.mask.resize(2, 2);
    a.mask << 1, 1, 0, 0;
    b.mask << 0, 1, 0, 1;
    ok = ok && iou(a, b) == oracle::iou(a.mask, b.mask);
    ok = ok && std::abs(iou(a, b) - 1.0 / 3.0) <= 1e-12;
    ok = ok && dice(a, b) == 0.5;
    for (int rep = 0; rep < 100 && ok; ++rep) {
      const auto h = static_cast<Eigen::Index>(1 + uniformInt(rng, 8));
      const auto w = static_cast<Eigen::Index>(1 + uniformInt(rng, 8));
      BinaryMask x, y;
      x.mask.resize(h, w);
      y.mask.resize(h, w);
      for (Eigen::Index i = 0; i < h; ++i)
        for (Eigen::Index j = 0; j < w; ++j) {
          x.mask(i, j) = uniformInt(rng, 2) ? 1.0 : 0.0;
          y.mask(i, j) = uniformInt(rng, 2) ? 1.0 : 0.0;
        }
      ok = ok && std::abs(iou(x, y) - oracle::iou(x.mask, y.mask)) <= 1e-12;
      ok = ok && std::abs(dice(x, y) - oracle::dice(x.mask, y.mask)) <= 1e-12;
    }
    if (!ok) detail = "mask metrics disagree with the enumeration oracle";
  }

  // real-valued metrics vs direct-formula oracles
  for (int rep = 0; rep < 100 && ok; ++rep) {
    AttentionMap a, b;
    a.map = minMaxNormalize(oracle::randomArray(rng, 8, 8));
    b.map = minMaxNormalize(oracle::randomArray(rng, 8, 8));
    a.normalized = b.normalized = true;
    const std::vector<double> va(a.map.data(), a.map.data() + a.map.size());
    const std::vector<double> vb(b.map.data(), b.map.data() + b.map.size());
    ok = ok && std::abs(ssimGlobal(a, b) - oracle::ssim(va, vb)) <= 1e-12;
    ok = ok && std::abs(cosine(a, b) - oracle::cosine(va, vb)) <= 1e-12;
    ok = ok && std::abs(pearson(a, b) - oracle::pearson(va, vb)) <= 1e-12;
    if (!ok) detail = "map metrics disagree with the direct-formula oracle";
  }
  if (ok) {
    AttentionMap zero, one;
    zero.map = Array2d::Zero(3, 3);
    one.map = Array2d::Constant(3, 3, 1.0);
    zero.normalized = one.normalized = true;
    ok = std::abs(ssimGlobal(zero, one) - 1e-4 / (1.0 + 1e-4)) <= 1e-12;
    if (!ok) detail = "constant-vs-constant SSIM closed form";
  }

  // distribution metrics
  for (int rep = 0; rep < 100 && ok; ++rep) {
    const std::size_t n = 2 + uniformInt(rng, 63);
    const auto vp = oracle::randomDistribution(rng, n);
    const auto vq = oracle::randomDistribution(rng, n);
    const auto v = [n](const std::vector<double>& x) {
      return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(n));
    };
    ok = ok && std::abs(klDivergence(v(vp), v(vq)) - oracle::kl(vp, vq, 1e-10)) <= 1e-12;
    ok = ok && std::abs(wasserstein1d(v(vp), v(vq)) - oracle::wasserstein(vp, vq)) <= 1e-12;
    if (!ok) detail = "distribution metrics disagree with their oracles";
  }
  if (ok) {
    ok = std::abs(klDivergence(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(0.5, 0.5)) -
                  std::log(2.0)) <= 1e-9;
    Eigen::Vector3d d0(1, 0, 0), d2(0, 0, 1), d1(0, 1, 0);
    ok = ok && std::abs(wasserstein1d(d0, d2) - 1.0) <= 1e-12;
    ok = ok && std::abs(wasserstein1d(d0, d1) - 0.5) <= 1e-12;
    if (!ok) detail = "fixed distribution examples";
  }

  const double elapsed = seconds(start);
  ok = ok && elapsed < 10.0;
  criterion("metric-oracle-suite", ok,
            detail.empty() ? fmt("all oracles agree at 1e-12; %.2fs (< 10s)", elapsed) : detail);
}

// ------------------------------------------- criterion: gradient correctness

void gradientCorrectness() {
  const auto start = Clock::now();
  Rng seeds(4242);
  oracle::FdCheck check;      // loss w.r.t. parameters
  oracle::FdCheck act_check;  // class score w.r.t. activations
  for (int net_idx = 0; net_idx < 20; ++net_idx) {
    NetworkConfig config;
    config.input_size = 8 + static_cast<int>(uniformInt(seeds, 5));  // 8..12
    const bool pool1 = uniformInt(seeds, 2) == 0;
    config.conv_layers = {{1 + static_cast<int>(uniformInt(seeds, 4)), 3, 1, pool1},
                          {1 + static_cast<int>(uniformInt(seeds, 4)), 3, 1, false}};
    config.hidden_units = 2 + static_cast<int>(uniformInt(seeds, 4));
    config.num_classes = 2 + static_cast<int>(uniformInt(seeds, 3));
    config.seed = seeds();
    Network net{config, init(config)};
    Rng rng(seeds());
    oracle::jitterBiases(net, rng);
    const Array2d image = oracle::randomArray(rng, config.input_size, config.input_size);
    const int label = static_cast<int>(uniformInt(rng, static_cast<std::uint64_t>(config.num_classes)));

    // loss w.r.t. every parameter
    const LossGrads lg = lossAndGradients(net, {&image}, {label});
    const Eigen::VectorXd theta = flattenParams(config, net.params);
    const Eigen::VectorXd analytic = flattenParams(config, lg.grads);
    Eigen::VectorXd t = theta;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      oracle::fdAccumulate(check, analytic(i), theta(i), [&](double v) {
        t(i) = v;
        const Network probe{config, unflattenParams(config, t)};
        t(i) = theta(i);
        return meanLoss(probe, {&image}, {label});
      });
    }

    // class score w.r.t. conv activations (piecewise linear: exact one-sided
    // hinge detection)
    const ForwardTrace trace = forward(net, image);
    const int cls = static_cast<int>(uniformInt(rng, static_cast<std::uint64_t>(config.num_classes)));
    for (int layer = 0; layer < 2; ++layer) {
      const auto grads = classScoreGradients(net, trace, cls, layer);
      auto post = trace.conv[static_cast<std::size_t>(layer)].post;
      for (std::size_t k = 0; k < post.size(); ++k) {
        for (Eigen::Index y = 0; y < post[k].rows(); ++y) {
          for (Eigen::Index x = 0; x < post[k].cols(); ++x) {
            const double saved = post[k](y, x);
            oracle::fdAccumulateLinear(act_check, grads[k](y, x), saved, [&](double v) {
              post[k](y, x) = v;
              const double out = logitsFromActivation(net, layer, post)(cls);
              post[k](y, x) = saved;
              return out;
            });
          }
        }
      }
    }
  }
  const double elapsed = seconds(start);
  // Coordinates where finite differences disagree across step sizes (or
  // between one-sided differences) sit on ReLU/pool hinges, where a central
  // difference does not estimate the derivative; they are excluded and must
  // stay a clear minority.
  const double max_err = std::max(check.max_rel_err, act_check.max_rel_err);
  const bool ok = max_err < 1e-4 && elapsed < 120.0 && check.skipped * 100 <= check.total &&
                  act_check.skipped * 3 <= act_check.total;
  criterion("gradient-correctness", ok,
            fmt("20 networks, %.0f coordinates, max relative error %.3g (< 1e-4), %.0f hinge "
                "coordinates excluded; %.1fs (< 2min)",
                static_cast<double>(check.total + act_check.total), max_err,
                static_cast<double>(check.skipped + act_check.skipped), elapsed));
}

// --------------------------------------- criteria: method 1 + table 4 analog

struct Method1Result {
  FeatureDataset data;
  EvalReport cv;
};

Method1Result method1(const Protocol& p, VerifyMethod method) {
  const auto aligned = extractRecords(p.cand_a, p.rings, p.ref, method, "candA", 1, 2);
  const auto misaligned = extractRecords(p.cand_b, p.rings, p.ref, method, "candB", 0, 2);
  Method1Result out{assembleDataset(aligned, misaligned), {}};
  ForestConfig config;
  config.seed = 515;
  out.cv = fitVerifier(out.data, config, 5, 0.5, 2).cv_report;
  return out;
}

void method1AndTable4(const Protocol& p, Method1Result& gradcam_out) {
  const auto start = Clock::now();
  gradcam_out = method1(p, VerifyMethod::gradcam);
  const double auc = gradcam_out.cv.roc_auc.value_or(0.0);
  const double acc = gradcam_out.cv.accuracy;
  const double elapsed = seconds(start);
  criterion("method1-gradcam-analog", auc >= 0.90 && acc >= 0.80 && elapsed < 600.0,
            fmt("600 records, 5-fold CV: ROC AUC %.4f (>= 0.90), accuracy %.4f (>= 0.80)", auc, acc));

  // Table 4 analog: directional separation of the label means
  Eigen::Matrix<double, 7, 1> mean1 = Eigen::Matrix<double, 7, 1>::Zero();
  Eigen::Matrix<double, 7, 1> mean0 = Eigen::Matrix<double, 7, 1>::Zero();
  double n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < gradcam_out.data.rows(); ++i) {
    if (gradcam_out.data.labels[static_cast<std::size_t>(i)] == 1) {
      mean1 += gradcam_out.data.features.row(i).transpose();
      n1 += 1;
    } else {
      mean0 += gradcam_out.data.features.row(i).transpose();
      n0 += 1;
    }
  }
  mean1 /= n1;
  mean0 /= n0;
  const bool ok = mean1(0) > mean0(0) && mean1(1) > mean0(1) && mean1(2) > mean0(2) &&
                  mean1(3) > mean0(3) && mean1(5) < mean0(5) && mean1(6) < mean0(6);
  criterion("table4-direction-analog", ok,
            fmt("aligned vs misaligned means: IoU %.3f vs %.3f, KL %.3f vs %.3f", mean1(0), mean0(0),
                mean1(5), mean0(5)) +
                fmt(", W %.3f vs %.3f", mean1(6), mean0(6)));
}

// ------------------------------------------------ criterion: method 2 analog

void method2(const Protocol& p) {
  const Method1Result l1 = method1(p, VerifyMethod::featuremap_l1);
  const double auc = l1.cv.roc_auc.value_or(0.0);
  const double acc = l1.cv.accuracy;

  // rotation probe on the oriented domain (stripes reference model)
  ReferenceOptions options;
  options.working_size = 64;
  options.per_class = true;
  options.correct_only = true;
  options.layers = {0, 1};
  const ReferenceBundle stripe_ref = buildReference(p.cand_b, p.stripes, options);
  ForestConfig fc;
  fc.seed = 616;
  const EvalReport rot_l1 =
      rotationProbe(p.cand_b, stripe_ref, p.stripes, 90.0, VerifyMethod::featuremap_l1, fc, 5, 0.5, 2);
  const EvalReport rot_l2 =
      rotationProbe(p.cand_b, stripe_ref, p.stripes, 90.0, VerifyMethod::featuremap_l2, fc, 5, 0.5, 2);
  // soft expectation from the paper's ordering: logged, not asserted
  std::printf("[info] rotation probe AUC: layer-1 %.4f vs layer-2 %.4f (expected L1 >= L2)\n",
              rot_l1.roc_auc.value_or(0.0), rot_l2.roc_auc.value_or(0.0));

  const bool ok = acc >= 0.90 && auc >= 0.95 && rot_l1.accuracy >= 0.75;
  criterion("method2-featuremap-analog", ok,
            fmt("L1 A-vs-B: accuracy %.4f (>= 0.90), ROC AUC %.4f (>= 0.95)", acc, auc) +
                fmt("; rotation-90 accuracy %.4f (>= 0.75)", rot_l1.accuracy));
}

// ------------------------------------------------ criterion: method 3 analog

void method3(const Protocol& p) {
  NetworkConfig config = protocolConfig(707);
  config.num_classes = 6;
  LabeledDataset garbage = p.stripes;
  for (auto& y : garbage.labels) y = 0;  // one pooled garbage source
  GarbageOptions options;
  options.test_split = 0.25;
  options.epochs = 20;
  options.learning_rate = 0.05;
  options.batch_size = 16;
  const GarbageClassReport report = garbageTrainEval(config, p.rings, garbage, options).report;
  const auto& grow = report.rows.back();
  const double precision = grow.precision.value_or(0.0);
  const double recall = grow.recall.value_or(0.0);
  const bool ok = precision >= 0.95 && recall >= 0.95 &&
                  report.in_domain_accuracy_extended >= report.in_domain_accuracy_baseline;
  criterion("method3-garbage-analog", ok,
            fmt("garbage class: precision %.4f, recall %.4f (>= 0.95)", precision, recall) +
                fmt("; in-domain accuracy %.4f vs baseline %.4f (non-degradation)",
                    report.in_domain_accuracy_extended, report.in_domain_accuracy_baseline));
}

// -------------------------------------------------- criterion: determinism

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return "<missing " + path.string() + ">";
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

bool runPipeline(const fs::path& dir) {
  fs::create_directories(dir);
  const std::string cli = GAMVER_CLI_PATH;
  const std::string cd = "cd " + dir.string() + " && " + cli + " ";
  const std::string quiet = " > /dev/null 2>&1";
  const std::string gen = " --classes 2 --samples-per-class 6 --size 16 --noise 0.03";
  const std::string fit = " --epochs 5 --lr 0.08 --batch-size 8 --hidden 12 --conv 4x3p,6x3";
  const std::vector<std::string> commands = {
      "synthgen --domain rings --seed 1 --out data_a" + gen,
      "synthgen --domain stripes --seed 2 --out data_b" + gen,
      "train --data data_a --out model_ref --seed 11" + fit,
      "train --data data_a --out model_a --seed 12" + fit,
      "train --data data_b --out model_b --seed 13" + fit,
      "build-ref --model model_ref --data data_a --out ref --working-size 16 --all-samples",
      "extract --model model_a --ref ref --data data_a --method gradcam --label 1 --tag a --out rec_a.csv",
      "extract --model model_b --ref ref --data data_a --method gradcam --label 0 --tag b --out rec_b.csv",
      "fit-verify --aligned rec_a.csv --misaligned rec_b.csv --out verifier --folds 3 --trees 20 --seed 21",
      "verify --model model_a --ref ref --verifier verifier/forest.json --data data_a --method gradcam --out verdict.json",
      "fmverify --model model_ref --ref ref --data data_a --angle 90 --method featuremap-L1 --folds 3 --trees 20 --seed 22 --out rotation.json",
      "garbage --data data_a --garbage-data data_b --out garbage --seed 23 --test-split 0.3" + fit,
      "report --records rec_a.csv --out stats.json",
  };
  for (const auto& cmd : commands)
    if (shell(cd + cmd + quiet) != 0) {
      std::printf("[info] pipeline command failed: %s\n", cmd.c_str());
      return false;
    }
  return true;
}

void determinism(const fs::path& root) {
  const auto start = Clock::now();
  const fs::path d1 = root / "determinism1";
  const fs::path d2 = root / "determinism2";
  bool ok = runPipeline(d1) && runPipeline(d2);
  std::string mismatch;
  const std::vector<std::string> artifacts = {
      "data_a/labels.csv",     "data_a/dataset.json",
      "data_a/img_c0_0000.pgm", "data_b/labels.csv",
      "model_ref/train_report.json", "model_ref/model.gamv",
      "ref/meta.json",          "ref/build_report.json",
      "ref/gam_class_0.gamv",   "rec_a.csv",
      "rec_a.gamv",             "rec_a.report.json",
      "rec_b.csv",
      "verifier/forest.json",   "verifier/report.json",
      "verdict.json",           "rotation.json",
      "garbage/garbage_report.json", "stats.json",
  };
  if (ok) {
    for (const auto& rel : artifacts) {
      if (slurp(d1 / rel) != slurp(d2 / rel)) {
        ok = false;
        mismatch = rel;
        break;
      }
    }
  }
  criterion("pipeline-determinism", ok,
            ok ? fmt("full pipeline replayed byte-for-byte over %.0f artifacts; %.1fs",
                     static_cast<double>(artifacts.size()), seconds(start))
               : ("first differing artifact: " + mismatch));
}

// ----------------------------------------- criterion: self-reference identity

void selfReference(const Protocol& p) {
  // first image the reference model classifies correctly with a
  // non-degenerate GAM; an all-zero map exercises the fallback path, not the
  // identity property
  std::size_t chosen = p.rings.size();
  for (std::size_t i = 0; i < p.rings.size(); ++i) {
    const auto [pred, probs] = predict(p.ref_model, p.rings.images[i]);
    (void)probs;
    if (pred != p.rings.labels[i]) continue;
    const AttentionMap gam =
        computeGradcam(p.ref_model, p.rings.images[i], pred, kLastConvLayer, 64);
    if ((gam.map != 0.0).any()) {
      chosen = i;
      break;
    }
  }
  if (chosen == p.rings.size()) {
    criterion("self-reference-identity", false, "no image with a non-degenerate GAM found");
    return;
  }
  LabeledDataset one;
  one.images.push_back(p.rings.images[chosen]);
  one.labels.push_back(p.rings.labels[chosen]);
  one.names.push_back(p.rings.names[chosen]);
  ReferenceOptions options;
  options.working_size = 64;
  options.per_class = false;  // a single-image bundle cannot cover every class
  options.correct_only = false;
  const ReferenceBundle bundle = buildReference(p.ref_model, one, options);
  const VerificationRecord r =
      extractRecord(p.ref_model, one.images[0], bundle, VerifyMethod::gradcam, "self");
  const bool ok = std::abs(r.features.iou - 1.0) <= 1e-9 && std::abs(r.features.dice - 1.0) <= 1e-9 &&
                  std::abs(r.features.ssim - 1.0) <= 1e-9 &&
                  std::abs(r.features.cosine - 1.0) <= 1e-9 && r.features.wasserstein <= 1e-9;
  criterion("self-reference-identity", ok,
            fmt("iou %.12f, ssim %.12f, cosine %.12f, wasserstein %.3g", r.features.iou,
                r.features.ssim, r.features.cosine, r.features.wasserstein));
}

// --------------------------------------------------- criterion: forest oracle

void forestOracle() {
  Rng rng(909);
  bool ok = true;
  for (int rep = 0; rep < 50 && ok; ++rep) {
    const std::size_t n = 2 + uniformInt(rng, 199);
    std::vector<int> labels(n);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(uniformInt(rng, 2));
      scores[i] = static_cast<double>(uniformInt(rng, 20)) / 20.0;  // heavy ties
    }
    labels[0] = 0;
    labels[n - 1] = 1;
    const auto auc = rocAuc(labels, scores);
    ok = auc.has_value() && *auc == oracle::pairwiseAuc(labels, scores);
  }
  criterion("forest-auc-oracle", ok, "rank AUC == exhaustive pairwise AUC on 50 datasets (exact)");
}

}  // namespace

int main() {
  const auto start = Clock::now();
  const fs::path root = fs::temp_directory_path() / "gamver_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  metricOracleSuite();
  gradientCorrectness();

  std::printf("[info] building the two-domain protocol (3 trained models)...\n");
  std::fflush(stdout);
  const Protocol p = buildProtocol();

  Method1Result m1;
  method1AndTable4(p, m1);
  method2(p);
  method3(p);
  determinism(root);
  selfReference(p);
  forestOracle();

  std::printf("%s: %d criteria failed (%.1fs total)\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
              failures, seconds(start));
  return failures == 0 ? 0 : 1;
}
