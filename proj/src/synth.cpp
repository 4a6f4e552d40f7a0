#include "gamver/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gamver/errors.hpp"
#include "gamver/image.hpp"
#include "gamver/rng.hpp"

namespace gamver {

namespace {

// One ring per class, radius growing with the class index; jittered center.
Array2d drawRings(int size, int classes, int cls, Rng& rng) {
  (void)classes;
  const double s = static_cast<double>(size);
  const double radius = s * (0.14 + 0.055 * cls);
  const double width = std::max(1.0, s / 28.0);
  const double jitter = s / 16.0;
  const double cy = 0.5 * (s - 1) + uniformReal(rng, -jitter, jitter);
  const double cx = 0.5 * (s - 1) + uniformReal(rng, -jitter, jitter);
  Array2d img(size, size);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double d = std::hypot(i - cy, j - cx);
      const double t = (d - radius) / width;
      img(i, j) = std::exp(-0.5 * t * t);
    }
  }
  return img;
}

// Sinusoidal stripes; the angle encodes the class, phase is jittered.
Array2d drawStripes(int size, int classes, int cls, Rng& rng) {
  const double s = static_cast<double>(size);
  const double angle = (180.0 / classes) * cls + uniformReal(rng, -5.0, 5.0);
  const double rad = angle * M_PI / 180.0;
  const double cycles = 5.0;
  const double phase = uniformReal(rng, 0.0, 2.0 * M_PI);
  const double kx = std::cos(rad), ky = std::sin(rad);
  Array2d img(size, size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      img(i, j) = 0.5 + 0.5 * std::sin(2.0 * M_PI * cycles * (kx * j + ky * i) / s + phase);
  return img;
}

// cls+1 Gaussian blobs at jittered positions.
Array2d drawBlobs(int size, int classes, int cls, Rng& rng) {
  (void)classes;
  const double s = static_cast<double>(size);
  const double sigma = s / 10.0;
  Array2d img = Array2d::Zero(size, size);
  const int count = cls + 1;
  for (int b = 0; b < count; ++b) {
    const double cy = uniformReal(rng, 0.2 * s, 0.8 * s);
    const double cx = uniformReal(rng, 0.2 * s, 0.8 * s);
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        const double d2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
        img(i, j) += std::exp(-0.5 * d2 / (sigma * sigma));
      }
    }
  }
  return img.min(1.0);
}

// Checkerboard with class-dependent cell size and jittered phase.
Array2d drawChecker(int size, int classes, int cls, Rng& rng) {
  (void)classes;
  const int cell = 2 + cls;
  const int oy = static_cast<int>(uniformInt(rng, static_cast<std::uint64_t>(cell)));
  const int ox = static_cast<int>(uniformInt(rng, static_cast<std::uint64_t>(cell)));
  Array2d img(size, size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j)
      img(i, j) = (((i + oy) / cell + (j + ox) / cell) % 2 == 0) ? 1.0 : 0.0;
  return img;
}

}  // namespace

SynthDomain synthDomainFromString(const std::string& name) {
  if (name == "rings") return SynthDomain::rings;
  if (name == "stripes") return SynthDomain::stripes;
  if (name == "blobs") return SynthDomain::blobs;
  if (name == "checker") return SynthDomain::checker;
  throw ValidationError("unknown synthetic domain: " + name);
}

std::string toString(SynthDomain domain) {
  switch (domain) {
    case SynthDomain::rings: return "rings";
    case SynthDomain::stripes: return "stripes";
    case SynthDomain::blobs: return "blobs";
    case SynthDomain::checker: return "checker";
  }
  return "?";
}

int LabeledDataset::numClasses() const {
  int m = 0;
  for (const int y : labels) m = std::max(m, y + 1);
  return m;
}

LabeledDataset generateSynthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ValidationError("SyntheticSpec: classes must be >= 2");
  if (spec.size < 16) throw ValidationError("SyntheticSpec: size must be >= 16");
  if (spec.samples_per_class < 1) throw ValidationError("SyntheticSpec: samplesPerClass must be >= 1");
  if (spec.noise_sigma < 0.0) throw ValidationError("SyntheticSpec: noiseSigma must be >= 0");

  Rng rng(spec.seed);
  LabeledDataset data;
  for (int cls = 0; cls < spec.classes; ++cls) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      Array2d img;
      switch (spec.domain) {
        case SynthDomain::rings: img = drawRings(spec.size, spec.classes, cls, rng); break;
        case SynthDomain::stripes: img = drawStripes(spec.size, spec.classes, cls, rng); break;
        case SynthDomain::blobs: img = drawBlobs(spec.size, spec.classes, cls, rng); break;
        case SynthDomain::checker: img = drawChecker(spec.size, spec.classes, cls, rng); break;
      }
      if (spec.noise_sigma > 0.0) {
        for (Eigen::Index i = 0; i < img.rows(); ++i)
          for (Eigen::Index j = 0; j < img.cols(); ++j)
            img(i, j) += spec.noise_sigma * normalReal(rng);
      }
      img = img.max(0.0).min(1.0);
      char name[64];
      std::snprintf(name, sizeof(name), "img_c%d_%04d.pgm", cls, s);
      data.images.push_back(std::move(img));
      data.labels.push_back(cls);
      data.names.emplace_back(name);
    }
  }
  return data;
}

void writeDataset(const std::filesystem::path& dir, const LabeledDataset& dataset) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "labels.csv", std::ios::trunc);
  if (!manifest) throw ValidationError("writeDataset: cannot open " + (dir / "labels.csv").string());
  manifest << "filename,label\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    savePgm(dir / dataset.names[i], Image{dataset.images[i]});
    manifest << dataset.names[i] << "," << dataset.labels[i] << "\n";
  }
}

LabeledDataset readDataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "labels.csv");
  if (!manifest) throw ValidationError("readDataset: cannot open " + (dir / "labels.csv").string());
  LabeledDataset data;
  std::string line;
  if (!std::getline(manifest, line) || line.rfind("filename,label", 0) != 0)
    throw ValidationError("readDataset: bad labels.csv header in " + dir.string());
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ValidationError("readDataset: malformed row in " + (dir / "labels.csv").string());
    const std::string name = line.substr(0, comma);
    const int label = parseInt(line.substr(comma + 1), "readDataset: label for " + name);
    if (label < 0) throw ValidationError("readDataset: negative label for " + name);
    data.images.push_back(loadImage(dir / name).pixels);
    data.labels.push_back(label);
    data.names.push_back(name);
  }
  if (data.images.empty()) throw DegenerateDataError("readDataset: empty dataset in " + dir.string());
  return data;
}

}  // namespace gamver
