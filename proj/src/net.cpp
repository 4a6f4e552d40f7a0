#include "gamver/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "gamver/errors.hpp"

namespace gamver {

namespace {

using StrideDyn = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
using ConstStridedMap = Eigen::Map<const Eigen::MatrixXd, Eigen::Unaligned, StrideDyn>;
using StridedMap = Eigen::Map<Eigen::MatrixXd, Eigen::Unaligned, StrideDyn>;

// View of `a` starting at (u, v), sampling every `stride`-th row/column,
// sized rows x cols. Relies on Eigen's column-major storage.
ConstStridedMap stridedView(const Array2d& a, int u, int v, Eigen::Index rows, Eigen::Index cols, int stride) {
  return ConstStridedMap(a.data() + static_cast<std::ptrdiff_t>(v) * a.rows() + u, rows, cols,
                         StrideDyn(static_cast<Eigen::Index>(stride) * a.rows(), stride));
}

StridedMap stridedViewMut(Array2d& a, int u, int v, Eigen::Index rows, Eigen::Index cols, int stride) {
  return StridedMap(a.data() + static_cast<std::ptrdiff_t>(v) * a.rows() + u, rows, cols,
                    StrideDyn(static_cast<Eigen::Index>(stride) * a.rows(), stride));
}

// correlate `in` with kernel `w`, accumulating into `acc`
void convAccumulate(const Array2d& in, const Array2d& w, int stride, Array2d& acc) {
  const int k = static_cast<int>(w.rows());
  for (int u = 0; u < k; ++u)
    for (int v = 0; v < k; ++v)
      acc.matrix() += w(u, v) * stridedView(in, u, v, acc.rows(), acc.cols(), stride);
}

Array2d maxPool2(const Array2d& post) {
  const Eigen::Index oh = post.rows() / 2, ow = post.cols() / 2;
  Array2d out(oh, ow);
  for (Eigen::Index y = 0; y < oh; ++y)
    for (Eigen::Index x = 0; x < ow; ++x)
      out(y, x) = post.block(2 * y, 2 * x, 2, 2).maxCoeff();
  return out;
}

// Routes gradients to the first maximum in row-major window order.
Array2d maxPool2Backward(const Array2d& post, const Array2d& dpooled) {
  Array2d dpost = Array2d::Zero(post.rows(), post.cols());
  for (Eigen::Index y = 0; y < dpooled.rows(); ++y) {
    for (Eigen::Index x = 0; x < dpooled.cols(); ++x) {
      Eigen::Index bi = 2 * y, bj = 2 * x;
      double best = post(bi, bj);
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          if (post(2 * y + dy, 2 * x + dx) > best) {
            best = post(2 * y + dy, 2 * x + dx);
            bi = 2 * y + dy;
            bj = 2 * x + dx;
          }
      dpost(bi, bj) += dpooled(y, x);
    }
  }
  return dpost;
}

Eigen::VectorXd flattenChannels(const std::vector<Array2d>& maps) {
  Eigen::Index total = 0;
  for (const auto& m : maps) total += m.size();
  Eigen::VectorXd flat(total);
  Eigen::Index k = 0;
  for (const auto& m : maps)
    for (Eigen::Index y = 0; y < m.rows(); ++y)
      for (Eigen::Index x = 0; x < m.cols(); ++x) flat(k++) = m(y, x);
  return flat;
}

std::vector<Array2d> unflattenChannels(const Eigen::VectorXd& flat, int channels, Eigen::Index h, Eigen::Index w) {
  std::vector<Array2d> maps(static_cast<std::size_t>(channels));
  Eigen::Index k = 0;
  for (auto& m : maps) {
    m.resize(h, w);
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 0; x < w; ++x) m(y, x) = flat(k++);
  }
  return maps;
}

NetworkParams zeroLike(const NetworkConfig& config) {
  const auto shapes = layerShapes(config);
  NetworkParams p;
  p.conv.resize(config.conv_layers.size());
  for (std::size_t l = 0; l < config.conv_layers.size(); ++l) {
    const auto& spec = config.conv_layers[l];
    p.conv[l].weights.assign(static_cast<std::size_t>(spec.filters),
                             std::vector<Array2d>(static_cast<std::size_t>(shapes[l].in_c),
                                                  Array2d::Zero(spec.kernel, spec.kernel)));
    p.conv[l].bias = Eigen::VectorXd::Zero(spec.filters);
  }
  p.hidden.weights = Eigen::MatrixXd::Zero(config.hidden_units, flatSize(config));
  p.hidden.bias = Eigen::VectorXd::Zero(config.hidden_units);
  p.output.weights = Eigen::MatrixXd::Zero(config.num_classes, config.hidden_units);
  p.output.bias = Eigen::VectorXd::Zero(config.num_classes);
  return p;
}

void addScaled(NetworkParams& dst, const NetworkParams& src, double scale) {
  for (std::size_t l = 0; l < dst.conv.size(); ++l) {
    for (std::size_t o = 0; o < dst.conv[l].weights.size(); ++o)
      for (std::size_t i = 0; i < dst.conv[l].weights[o].size(); ++i)
        dst.conv[l].weights[o][i] += scale * src.conv[l].weights[o][i];
    dst.conv[l].bias += scale * src.conv[l].bias;
  }
  dst.hidden.weights += scale * src.hidden.weights;
  dst.hidden.bias += scale * src.hidden.bias;
  dst.output.weights += scale * src.output.weights;
  dst.output.bias += scale * src.output.bias;
}

bool allFinite(const NetworkParams& p) {
  for (const auto& layer : p.conv) {
    for (const auto& out : layer.weights)
      for (const auto& w : out)
        if (!w.isFinite().all()) return false;
    if (!layer.bias.allFinite()) return false;
  }
  return p.hidden.weights.allFinite() && p.hidden.bias.allFinite() &&
         p.output.weights.allFinite() && p.output.bias.allFinite();
}

struct BackwardResult {
  NetworkParams grads;
  std::vector<std::vector<Array2d>> post_grads;  // per conv layer
};

// Single backward engine: feeds both parameter gradients (training) and
// post-activation gradients (Grad-CAM).
BackwardResult backwardFromLogits(const Network& net, const ForwardTrace& trace,
                                  const Eigen::VectorXd& dlogits) {
  const auto& config = net.config;
  const auto& params = net.params;
  const auto shapes = layerShapes(config);
  BackwardResult res;
  res.grads = zeroLike(config);
  res.post_grads.resize(config.conv_layers.size());

  res.grads.output.weights = dlogits * trace.hidden_post.transpose();
  res.grads.output.bias = dlogits;
  Eigen::VectorXd dhidden = params.output.weights.transpose() * dlogits;
  const Eigen::VectorXd dhidden_pre =
      (trace.hidden_pre.array() > 0.0).select(dhidden.array(), 0.0).matrix();
  res.grads.hidden.weights = dhidden_pre * trace.flat.transpose();
  res.grads.hidden.bias = dhidden_pre;
  const Eigen::VectorXd dflat = params.hidden.weights.transpose() * dhidden_pre;

  const int last = static_cast<int>(config.conv_layers.size()) - 1;
  std::vector<Array2d> dpooled =
      unflattenChannels(dflat, config.conv_layers[static_cast<std::size_t>(last)].filters,
                        shapes[static_cast<std::size_t>(last)].out_h,
                        shapes[static_cast<std::size_t>(last)].out_w);

  const std::vector<Array2d> image_channel{trace.input};
  for (int l = last; l >= 0; --l) {
    const auto& spec = config.conv_layers[static_cast<std::size_t>(l)];
    const auto& shape = shapes[static_cast<std::size_t>(l)];
    const auto& tr = trace.conv[static_cast<std::size_t>(l)];
    const std::vector<Array2d>& input =
        (l > 0) ? trace.conv[static_cast<std::size_t>(l - 1)].pooled : image_channel;

    std::vector<Array2d>& dpost = res.post_grads[static_cast<std::size_t>(l)];
    dpost.resize(static_cast<std::size_t>(spec.filters));
    for (int o = 0; o < spec.filters; ++o) {
      dpost[static_cast<std::size_t>(o)] =
          spec.pool_after ? maxPool2Backward(tr.post[static_cast<std::size_t>(o)],
                                             dpooled[static_cast<std::size_t>(o)])
                          : dpooled[static_cast<std::size_t>(o)];
    }

    std::vector<Array2d> dinput(static_cast<std::size_t>(shape.in_c),
                                Array2d::Zero(shape.in_h, shape.in_w));
    auto& glayer = res.grads.conv[static_cast<std::size_t>(l)];
    for (int o = 0; o < spec.filters; ++o) {
      const Array2d dpre =
          (tr.pre[static_cast<std::size_t>(o)] > 0.0)
              .select(dpost[static_cast<std::size_t>(o)], Array2d::Zero(shape.conv_h, shape.conv_w));
      glayer.bias(o) = dpre.sum();
      for (int i = 0; i < shape.in_c; ++i) {
        auto& dw = glayer.weights[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)];
        const Array2d& in = input[static_cast<std::size_t>(i)];
        for (int u = 0; u < spec.kernel; ++u)
          for (int v = 0; v < spec.kernel; ++v)
            dw(u, v) = (dpre * stridedView(in, u, v, shape.conv_h, shape.conv_w, spec.stride).array()).sum();
        if (l > 0) {
          const auto& w = net.params.conv[static_cast<std::size_t>(l)]
                              .weights[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)];
          Array2d& di = dinput[static_cast<std::size_t>(i)];
          for (int u = 0; u < spec.kernel; ++u)
            for (int v = 0; v < spec.kernel; ++v)
              stridedViewMut(di, u, v, shape.conv_h, shape.conv_w, spec.stride) += w(u, v) * dpre.matrix();
        }
      }
    }
    if (l > 0) dpooled = std::move(dinput);
  }
  return res;
}

}  // namespace

void validateConfig(const NetworkConfig& config) {
  if (config.input_size < 1) throw ValidationError("NetworkConfig: input_size must be >= 1");
  if (config.conv_layers.size() < 2)
    throw ValidationError("NetworkConfig: at least 2 conv layers required");
  if (config.num_classes < 2) throw ValidationError("NetworkConfig: num_classes must be >= 2");
  if (config.hidden_units < 1) throw ValidationError("NetworkConfig: hidden_units must be >= 1");
  for (const auto& spec : config.conv_layers) {
    if (spec.filters < 1) throw ValidationError("NetworkConfig: filters must be >= 1");
    if (spec.kernel < 1 || spec.kernel % 2 == 0)
      throw ValidationError("NetworkConfig: kernel must be odd and >= 1");
    if (spec.stride < 1) throw ValidationError("NetworkConfig: stride must be >= 1");
  }
  layerShapes(config);  // throws when a spatial dim collapses below 1
}

std::vector<LayerShape> layerShapes(const NetworkConfig& config) {
  std::vector<LayerShape> shapes;
  int c = 1, h = config.input_size, w = config.input_size;
  for (const auto& spec : config.conv_layers) {
    LayerShape s;
    s.in_c = c;
    s.in_h = h;
    s.in_w = w;
    if (h < spec.kernel || w < spec.kernel)
      throw ValidationError("NetworkConfig: kernel larger than layer input");
    s.conv_h = (h - spec.kernel) / spec.stride + 1;
    s.conv_w = (w - spec.kernel) / spec.stride + 1;
    s.out_h = spec.pool_after ? s.conv_h / 2 : s.conv_h;
    s.out_w = spec.pool_after ? s.conv_w / 2 : s.conv_w;
    if (s.out_h < 1 || s.out_w < 1)
      throw ValidationError("NetworkConfig: pooling reduces a spatial dim below 1");
    shapes.push_back(s);
    c = spec.filters;
    h = s.out_h;
    w = s.out_w;
  }
  return shapes;
}

int flatSize(const NetworkConfig& config) {
  const auto shapes = layerShapes(config);
  const auto& back = shapes.back();
  return config.conv_layers.back().filters * back.out_h * back.out_w;
}

NetworkParams initWithRng(const NetworkConfig& config, Rng& rng) {
  validateConfig(config);
  const auto shapes = layerShapes(config);
  NetworkParams p = zeroLike(config);
  for (std::size_t l = 0; l < config.conv_layers.size(); ++l) {
    const auto& spec = config.conv_layers[l];
    const double fan_in = static_cast<double>(shapes[l].in_c) * spec.kernel * spec.kernel;
    const double a = std::sqrt(3.0 / fan_in);
    for (auto& out : p.conv[l].weights)
      for (auto& w : out)
        for (int u = 0; u < spec.kernel; ++u)
          for (int v = 0; v < spec.kernel; ++v) w(u, v) = uniformReal(rng, -a, a);
  }
  {
    const double a = std::sqrt(3.0 / static_cast<double>(flatSize(config)));
    for (Eigen::Index r = 0; r < p.hidden.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < p.hidden.weights.cols(); ++c)
        p.hidden.weights(r, c) = uniformReal(rng, -a, a);
  }
  {
    const double a = std::sqrt(3.0 / static_cast<double>(config.hidden_units));
    for (Eigen::Index r = 0; r < p.output.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < p.output.weights.cols(); ++c)
        p.output.weights(r, c) = uniformReal(rng, -a, a);
  }
  return p;
}

NetworkParams init(const NetworkConfig& config) {
  Rng rng(config.seed);
  return initWithRng(config, rng);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

ForwardTrace forward(const Network& net, const Array2d& image) {
  const auto& config = net.config;
  if (image.rows() != config.input_size || image.cols() != config.input_size)
    throw ValidationError("forward: image does not match config input_size");
  const auto shapes = layerShapes(config);
  ForwardTrace trace;
  trace.input = image;
  trace.conv.resize(config.conv_layers.size());
  const std::vector<Array2d>* input = nullptr;
  std::vector<Array2d> first{image};
  for (std::size_t l = 0; l < config.conv_layers.size(); ++l) {
    const auto& spec = config.conv_layers[l];
    const auto& shape = shapes[l];
    input = (l == 0) ? &first : &trace.conv[l - 1].pooled;
    auto& tr = trace.conv[l];
    tr.pre.resize(static_cast<std::size_t>(spec.filters));
    tr.post.resize(static_cast<std::size_t>(spec.filters));
    tr.pooled.resize(static_cast<std::size_t>(spec.filters));
    for (int o = 0; o < spec.filters; ++o) {
      Array2d acc = Array2d::Constant(shape.conv_h, shape.conv_w, net.params.conv[l].bias(o));
      for (int i = 0; i < shape.in_c; ++i)
        convAccumulate((*input)[static_cast<std::size_t>(i)],
                       net.params.conv[l].weights[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)],
                       spec.stride, acc);
      tr.pre[static_cast<std::size_t>(o)] = acc;
      tr.post[static_cast<std::size_t>(o)] = acc.max(0.0);
      tr.pooled[static_cast<std::size_t>(o)] =
          spec.pool_after ? maxPool2(tr.post[static_cast<std::size_t>(o)]) : tr.post[static_cast<std::size_t>(o)];
    }
  }
  trace.flat = flattenChannels(trace.conv.back().pooled);
  trace.hidden_pre = net.params.hidden.weights * trace.flat + net.params.hidden.bias;
  trace.hidden_post = trace.hidden_pre.array().max(0.0).matrix();
  trace.logits = net.params.output.weights * trace.hidden_post + net.params.output.bias;
  trace.probabilities = softmax(trace.logits);
  return trace;
}

int argmaxLowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

std::pair<int, Eigen::VectorXd> predict(const Network& net, const Array2d& image) {
  const ForwardTrace trace = forward(net, image);
  return {argmaxLowest(trace.probabilities), trace.probabilities};
}

std::vector<Array2d> classScoreGradients(const Network& net, const ForwardTrace& trace,
                                         int class_index, int layer_index) {
  if (class_index < 0 || class_index >= net.config.num_classes)
    throw ValidationError("classScoreGradients: class index out of range");
  if (layer_index < 0 || layer_index >= static_cast<int>(net.config.conv_layers.size()))
    throw ValidationError("classScoreGradients: layer index out of range");
  Eigen::VectorXd dlogits = Eigen::VectorXd::Zero(net.config.num_classes);
  dlogits(class_index) = 1.0;
  BackwardResult res = backwardFromLogits(net, trace, dlogits);
  return std::move(res.post_grads[static_cast<std::size_t>(layer_index)]);
}

LossGrads lossAndGradients(const Network& net, const std::vector<const Array2d*>& images,
                           const std::vector<int>& labels) {
  if (images.empty() || images.size() != labels.size())
    throw ValidationError("lossAndGradients: empty or mismatched batch");
  LossGrads out;
  out.grads = zeroLike(net.config);
  const double inv = 1.0 / static_cast<double>(images.size());
  for (std::size_t s = 0; s < images.size(); ++s) {
    if (labels[s] < 0 || labels[s] >= net.config.num_classes)
      throw ValidationError("lossAndGradients: label out of range");
    const ForwardTrace trace = forward(net, *images[s]);
    const double m = trace.logits.maxCoeff();
    const double lse = m + std::log((trace.logits.array() - m).exp().sum());
    out.loss += (lse - trace.logits(labels[s])) * inv;
    Eigen::VectorXd dlogits = trace.probabilities;
    dlogits(labels[s]) -= 1.0;
    const BackwardResult res = backwardFromLogits(net, trace, dlogits);
    addScaled(out.grads, res.grads, inv);
  }
  return out;
}

double meanLoss(const Network& net, const std::vector<const Array2d*>& images,
                const std::vector<int>& labels) {
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(images.size());
  for (std::size_t s = 0; s < images.size(); ++s) {
    const ForwardTrace trace = forward(net, *images[s]);
    const double m = trace.logits.maxCoeff();
    const double lse = m + std::log((trace.logits.array() - m).exp().sum());
    loss += (lse - trace.logits(labels[s])) * inv;
  }
  return loss;
}

Network train(const NetworkConfig& config, const std::vector<Array2d>& images,
              const std::vector<int>& labels, int epochs, double learning_rate, int batch_size) {
  validateConfig(config);
  if (images.empty()) throw ValidationError("train: empty dataset");
  if (images.size() != labels.size()) throw ValidationError("train: images/labels size mismatch");
  for (int y : labels)
    if (y < 0 || y >= config.num_classes) throw ValidationError("train: label out of range");
  if (epochs < 0 || batch_size < 1 || !(learning_rate > 0.0))
    throw ValidationError("train: bad epochs/learning rate/batch size");

  Rng rng(config.seed);
  Network net{config, initWithRng(config, rng)};
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffleInPlace(order, rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      std::vector<const Array2d*> batch;
      std::vector<int> batch_labels;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&images[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      const LossGrads lg = lossAndGradients(net, batch, batch_labels);
      addScaled(net.params, lg.grads, -learning_rate);
      if (!allFinite(net.params)) throw DegenerateDataError("train: parameters diverged to non-finite values");
    }
  }
  return net;
}

Eigen::VectorXd logitsFromActivation(const Network& net, int layer_index,
                                     const std::vector<Array2d>& post) {
  const auto& config = net.config;
  const auto shapes = layerShapes(config);
  if (layer_index < 0 || layer_index >= static_cast<int>(config.conv_layers.size()))
    throw ValidationError("logitsFromActivation: layer index out of range");
  std::vector<Array2d> current(post.size());
  const auto& spec0 = config.conv_layers[static_cast<std::size_t>(layer_index)];
  for (std::size_t o = 0; o < post.size(); ++o)
    current[o] = spec0.pool_after ? maxPool2(post[o]) : post[o];
  for (std::size_t l = static_cast<std::size_t>(layer_index) + 1; l < config.conv_layers.size(); ++l) {
    const auto& spec = config.conv_layers[l];
    const auto& shape = shapes[l];
    std::vector<Array2d> next(static_cast<std::size_t>(spec.filters));
    for (int o = 0; o < spec.filters; ++o) {
      Array2d acc = Array2d::Constant(shape.conv_h, shape.conv_w, net.params.conv[l].bias(o));
      for (int i = 0; i < shape.in_c; ++i)
        convAccumulate(current[static_cast<std::size_t>(i)],
                       net.params.conv[l].weights[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)],
                       spec.stride, acc);
      Array2d act = acc.max(0.0);
      next[static_cast<std::size_t>(o)] = spec.pool_after ? maxPool2(act) : act;
    }
    current = std::move(next);
  }
  const Eigen::VectorXd flat = flattenChannels(current);
  const Eigen::VectorXd hidden = (net.params.hidden.weights * flat + net.params.hidden.bias).array().max(0.0).matrix();
  return net.params.output.weights * hidden + net.params.output.bias;
}

Eigen::VectorXd flattenParams(const NetworkConfig& config, const NetworkParams& params) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < config.conv_layers.size(); ++l) {
    for (const auto& out : params.conv[l].weights)
      for (const auto& w : out)
        for (Eigen::Index u = 0; u < w.rows(); ++u)
          for (Eigen::Index v = 0; v < w.cols(); ++v) flat.push_back(w(u, v));
    for (Eigen::Index i = 0; i < params.conv[l].bias.size(); ++i) flat.push_back(params.conv[l].bias(i));
  }
  for (Eigen::Index r = 0; r < params.hidden.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < params.hidden.weights.cols(); ++c) flat.push_back(params.hidden.weights(r, c));
  for (Eigen::Index i = 0; i < params.hidden.bias.size(); ++i) flat.push_back(params.hidden.bias(i));
  for (Eigen::Index r = 0; r < params.output.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < params.output.weights.cols(); ++c) flat.push_back(params.output.weights(r, c));
  for (Eigen::Index i = 0; i < params.output.bias.size(); ++i) flat.push_back(params.output.bias(i));
  return Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

NetworkParams unflattenParams(const NetworkConfig& config, const Eigen::VectorXd& flat) {
  NetworkParams p = zeroLike(config);
  Eigen::Index k = 0;
  auto take = [&flat, &k]() {
    if (k >= flat.size()) throw ValidationError("unflattenParams: parameter vector too short");
    return flat(k++);
  };
  for (std::size_t l = 0; l < config.conv_layers.size(); ++l) {
    for (auto& out : p.conv[l].weights)
      for (auto& w : out)
        for (Eigen::Index u = 0; u < w.rows(); ++u)
          for (Eigen::Index v = 0; v < w.cols(); ++v) w(u, v) = take();
    for (Eigen::Index i = 0; i < p.conv[l].bias.size(); ++i) p.conv[l].bias(i) = take();
  }
  for (Eigen::Index r = 0; r < p.hidden.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < p.hidden.weights.cols(); ++c) p.hidden.weights(r, c) = take();
  for (Eigen::Index i = 0; i < p.hidden.bias.size(); ++i) p.hidden.bias(i) = take();
  for (Eigen::Index r = 0; r < p.output.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < p.output.weights.cols(); ++c) p.output.weights(r, c) = take();
  for (Eigen::Index i = 0; i < p.output.bias.size(); ++i) p.output.bias(i) = take();
  if (k != flat.size()) throw ValidationError("unflattenParams: parameter vector too long");
  return p;
}

namespace {

nlohmann::json configToJson(const NetworkConfig& config) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& spec : config.conv_layers) {
    layers.push_back({{"filters", spec.filters},
                      {"kernel", spec.kernel},
                      {"stride", spec.stride},
                      {"poolAfter", spec.pool_after}});
  }
  return {{"inputSize", config.input_size},
          {"convLayers", layers},
          {"hiddenUnits", config.hidden_units},
          {"numClasses", config.num_classes},
          {"seed", config.seed}};
}

NetworkConfig configFromJson(const nlohmann::json& j) {
  NetworkConfig config;
  config.input_size = j.at("inputSize").get<int>();
  config.hidden_units = j.at("hiddenUnits").get<int>();
  config.num_classes = j.at("numClasses").get<int>();
  config.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& layer : j.at("convLayers")) {
    ConvLayerSpec spec;
    spec.filters = layer.at("filters").get<int>();
    spec.kernel = layer.at("kernel").get<int>();
    spec.stride = layer.at("stride").get<int>();
    spec.pool_after = layer.at("poolAfter").get<bool>();
    config.conv_layers.push_back(spec);
  }
  return config;
}

}  // namespace

void saveNetwork(const std::filesystem::path& dir, const Network& net) {
  std::filesystem::create_directories(dir);
  writeGamv(dir / "model.gamv", toTensor(flattenParams(net.config, net.params)));
  std::ofstream f(dir / "model.json", std::ios::trunc);
  if (!f) throw ValidationError("saveNetwork: cannot open " + (dir / "model.json").string());
  f << configToJson(net.config).dump(2) << "\n";
}

Network loadNetwork(const std::filesystem::path& dir) {
  std::ifstream f(dir / "model.json");
  if (!f) throw ValidationError("loadNetwork: cannot open " + (dir / "model.json").string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("loadNetwork: bad model.json: " + std::string(e.what()));
  }
  Network net;
  net.config = configFromJson(j);
  validateConfig(net.config);
  net.params = unflattenParams(net.config, toVector(readGamv(dir / "model.gamv")));
  return net;
}

std::string networkFingerprint(const Network& net) {
  return toHex(fnv1a(toTensor(flattenParams(net.config, net.params))));
}

}  // namespace gamver
