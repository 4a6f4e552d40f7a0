#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gamver/tensor.hpp"

namespace gamver {

enum class SynthDomain { rings, stripes, blobs, checker };

SynthDomain synthDomainFromString(const std::string& name);
std::string toString(SynthDomain domain);

// Class-dependent structured patterns plus Gaussian pixel noise clipped to
// [0,1]; a stand-in for the domain-specific image sources.
struct SyntheticSpec {
  SynthDomain domain = SynthDomain::rings;
  int classes = 5;
  int samples_per_class = 100;
  double noise_sigma = 0.05;
  int size = 32;
  std::uint64_t seed = 0;
};

struct LabeledDataset {
  std::vector<Array2d> images;
  std::vector<int> labels;
  std::vector<std::string> names;

  std::size_t size() const { return images.size(); }
  int numClasses() const;
};

LabeledDataset generateSynthetic(const SyntheticSpec& spec);

// PGM files plus a labels.csv manifest (filename,label), class-major order.
void writeDataset(const std::filesystem::path& dir, const LabeledDataset& dataset);
LabeledDataset readDataset(const std::filesystem::path& dir);

}  // namespace gamver
