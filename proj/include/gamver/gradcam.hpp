#pragma once

#include <filesystem>
#include <vector>

#include "gamver/image.hpp"
#include "gamver/net.hpp"
#include "gamver/tensor.hpp"

namespace gamver {

constexpr int kAutoClass = -1;  // use the predicted class
constexpr int kLastConvLayer = -1;

// Normalized Grad-CAM heatmap. An all-zero map is legal: it encodes "no
// positive class evidence" and flows through the metrics as-is.
struct AttentionMap {
  Array2d map;
  int source_layer = 0;
  int target_class = 0;
  bool normalized = false;
};

struct BinaryMask {
  Array2d mask;  // values in {0,1}
  double threshold = 0.0;
};

// Per-location sum of absolute filter activations of one conv layer.
struct FeatureResponseMap {
  Array2d map;
  int source_layer = 0;
  bool as_distribution = false;
};

// Channel weights are the spatial means of the target-class score gradients
// (original Grad-CAM pooling); the weighted activation sum is rectified,
// upsampled to working_size and min-max normalized.
AttentionMap computeGradcam(const Network& net, const Array2d& image, int class_index,
                            int layer_index, int working_size);

// mask(i,j) = 1 iff map(i,j) > median(map); even counts use the mean of the
// two middle values.
BinaryMask binarizeMedian(const AttentionMap& att);

FeatureResponseMap featureResponse(const Network& net, const Array2d& image, int layer_index,
                                   bool as_distribution = false);

// Elementwise mean of same-shaped maps, re-normalized. The reference GAM.
AttentionMap averageAttention(const std::vector<AttentionMap>& maps);

// Grayscale image blended 50/50 with a color-mapped heatmap (fixed 5-stop
// linear colormap), written as 8-bit RGB PNG.
void exportOverlay(const Image& image, const AttentionMap& att, const std::filesystem::path& path);

}  // namespace gamver
