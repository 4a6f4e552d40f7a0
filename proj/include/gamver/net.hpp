#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "gamver/rng.hpp"
#include "gamver/tensor.hpp"

// Minimal convolutional classifier: conv/ReLU/max-pool stacks, one hidden
// dense layer, softmax head. Exact analytic gradients for every parameter
// and for any conv layer's post-activation maps.

namespace gamver {

struct ConvLayerSpec {
  int filters = 8;
  int kernel = 3;  // odd
  int stride = 1;
  bool pool_after = true;  // 2x2 max pool, stride 2
};

struct NetworkConfig {
  int input_size = 32;  // square
  std::vector<ConvLayerSpec> conv_layers;
  int hidden_units = 32;
  int num_classes = 2;  // k, or k+1 with a garbage class
  std::uint64_t seed = 0;
};

struct LayerShape {
  int in_c, in_h, in_w;
  int conv_h, conv_w;  // after conv
  int out_h, out_w;    // after optional pooling
};

void validateConfig(const NetworkConfig& config);
std::vector<LayerShape> layerShapes(const NetworkConfig& config);
int flatSize(const NetworkConfig& config);

struct ConvLayerParams {
  std::vector<std::vector<Array2d>> weights;  // [out_channel][in_channel], kernel x kernel
  Eigen::VectorXd bias;
};

struct DenseParams {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

struct NetworkParams {
  std::vector<ConvLayerParams> conv;
  DenseParams hidden;
  DenseParams output;
};

struct Network {
  NetworkConfig config;
  NetworkParams params;
};

struct ConvTrace {
  std::vector<Array2d> pre;     // conv output + bias
  std::vector<Array2d> post;    // relu(pre); the A_k maps
  std::vector<Array2d> pooled;  // == post when pool_after is false
};

struct ForwardTrace {
  Array2d input;
  std::vector<ConvTrace> conv;
  Eigen::VectorXd flat;
  Eigen::VectorXd hidden_pre;
  Eigen::VectorXd hidden_post;
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
};

// Fan-in-scaled zero-mean uniform weights, zero biases. Deterministic per seed.
NetworkParams init(const NetworkConfig& config);
NetworkParams initWithRng(const NetworkConfig& config, Rng& rng);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

ForwardTrace forward(const Network& net, const Array2d& image);

// argmax of probabilities, ties broken toward the lower index
std::pair<int, Eigen::VectorXd> predict(const Network& net, const Array2d& image);
int argmaxLowest(const Eigen::VectorXd& v);

// Exact gradient of the pre-softmax score y_c w.r.t. conv layer
// `layer_index`'s post-activation maps (same shapes as trace.conv[l].post).
std::vector<Array2d> classScoreGradients(const Network& net, const ForwardTrace& trace,
                                         int class_index, int layer_index);

struct LossGrads {
  double loss = 0.0;
  NetworkParams grads;
};

// Mean softmax cross-entropy over a batch, with gradients for every parameter.
LossGrads lossAndGradients(const Network& net, const std::vector<const Array2d*>& images,
                           const std::vector<int>& labels);

double meanLoss(const Network& net, const std::vector<const Array2d*>& images,
                const std::vector<int>& labels);

// Mini-batch SGD on mean cross-entropy. Shuffling draws from the same seed
// stream as initialization, so a (config, dataset) pair fully determines the
// result.
Network train(const NetworkConfig& config, const std::vector<Array2d>& images,
              const std::vector<int>& labels, int epochs, double learning_rate, int batch_size);

// Re-runs the pass from a conv layer's post-activation maps to the logits.
// Verification surface for finite-difference checks.
Eigen::VectorXd logitsFromActivation(const Network& net, int layer_index,
                                     const std::vector<Array2d>& post);

Eigen::VectorXd flattenParams(const NetworkConfig& config, const NetworkParams& params);
NetworkParams unflattenParams(const NetworkConfig& config, const Eigen::VectorXd& flat);

// model.gamv (flat parameter tensor) + model.json (config sidecar) in `dir`.
void saveNetwork(const std::filesystem::path& dir, const Network& net);
Network loadNetwork(const std::filesystem::path& dir);

std::string networkFingerprint(const Network& net);

}  // namespace gamver
