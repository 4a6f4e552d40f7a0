#include "gamver/gradcam.hpp"

#include <cmath>

#include "gamver/errors.hpp"
#include "gamver/ops.hpp"

namespace gamver {

AttentionMap computeGradcam(const Network& net, const Array2d& image, int class_index,
                            int layer_index, int working_size) {
  if (working_size < 1) throw ValidationError("computeGradcam: working_size must be >= 1");
  if (layer_index == kLastConvLayer)
    layer_index = static_cast<int>(net.config.conv_layers.size()) - 1;
  const ForwardTrace trace = forward(net, image);
  const int cls = (class_index == kAutoClass) ? argmaxLowest(trace.probabilities) : class_index;
  const std::vector<Array2d> grads = classScoreGradients(net, trace, cls, layer_index);
  const auto& post = trace.conv[static_cast<std::size_t>(layer_index)].post;

  Array2d cam = Array2d::Zero(post[0].rows(), post[0].cols());
  for (std::size_t k = 0; k < post.size(); ++k) {
    const double alpha = grads[k].mean();
    cam += alpha * post[k];
  }
  cam = cam.max(0.0);

  AttentionMap att;
  att.source_layer = layer_index;
  att.target_class = cls;
  att.map = minMaxNormalize(resizeBilinear(cam, working_size, working_size));
  att.normalized = true;
  return att;
}

BinaryMask binarizeMedian(const AttentionMap& att) {
  if (!att.normalized) throw ValidationError("binarizeMedian: attention map must be normalized");
  BinaryMask out;
  out.threshold = medianValue(att.map);
  out.mask = (att.map > out.threshold).cast<double>();
  return out;
}

FeatureResponseMap featureResponse(const Network& net, const Array2d& image, int layer_index,
                                   bool as_distribution) {
  if (layer_index < 0 || layer_index >= static_cast<int>(net.config.conv_layers.size()))
    throw ValidationError("featureResponse: layer index out of range");
  const ForwardTrace trace = forward(net, image);
  const auto& post = trace.conv[static_cast<std::size_t>(layer_index)].post;
  Array2d s = Array2d::Zero(post[0].rows(), post[0].cols());
  for (const auto& filter : post) s += filter.abs();
  FeatureResponseMap out;
  out.source_layer = layer_index;
  out.as_distribution = as_distribution;
  out.map = as_distribution ? toDistribution(s) : s;
  return out;
}

AttentionMap averageAttention(const std::vector<AttentionMap>& maps) {
  if (maps.empty()) throw ValidationError("averageAttention: empty list");
  const auto rows = maps[0].map.rows(), cols = maps[0].map.cols();
  for (const auto& m : maps) {
    if (m.map.rows() != rows || m.map.cols() != cols)
      throw ValidationError("averageAttention: shape mismatch");
    if (m.source_layer != maps[0].source_layer)
      throw ValidationError("averageAttention: sourceLayer mismatch");
  }
  Array2d mean = Array2d::Zero(rows, cols);
  for (const auto& m : maps) mean += m.map;
  mean /= static_cast<double>(maps.size());

  AttentionMap out;
  out.source_layer = maps[0].source_layer;
  out.target_class = maps[0].target_class;
  for (const auto& m : maps)
    if (m.target_class != out.target_class) out.target_class = kAutoClass;
  out.map = minMaxNormalize(mean);
  out.normalized = true;
  return out;
}

namespace {

// 5-stop linear colormap over [0,1]: blue, cyan, green, yellow, red.
void colormap5(double t, unsigned char rgb[3]) {
  static const double stops[5][3] = {
      {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(std::floor(t)));
  const double f = t - i;
  for (int c = 0; c < 3; ++c) {
    const double v = stops[i][c] + f * (stops[i + 1][c] - stops[i][c]);
    rgb[c] = static_cast<unsigned char>(std::lround(v));
  }
}

}  // namespace

void exportOverlay(const Image& image, const AttentionMap& att, const std::filesystem::path& path) {
  if (image.pixels.size() == 0) throw ValidationError("exportOverlay: empty image");
  const Eigen::Index h = image.height(), w = image.width();
  Array2d heat = att.map;
  if (heat.rows() != h || heat.cols() != w) heat = resizeBilinear(heat, h, w);
  std::vector<unsigned char> rgb(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3);
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) {
      unsigned char hc[3];
      colormap5(heat(i, j), hc);
      const double gray = std::clamp(image.pixels(i, j), 0.0, 1.0) * 255.0;
      const std::size_t base = (static_cast<std::size_t>(i) * static_cast<std::size_t>(w) +
                                static_cast<std::size_t>(j)) * 3;
      for (int c = 0; c < 3; ++c)
        rgb[base + static_cast<std::size_t>(c)] =
            static_cast<unsigned char>(std::lround(0.5 * gray + 0.5 * hc[c]));
    }
  }
  saveRgbPng(path, static_cast<int>(h), static_cast<int>(w), rgb);
}

}  // namespace gamver
