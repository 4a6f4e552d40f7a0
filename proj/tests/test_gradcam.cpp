#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gamver/errors.hpp"
#include "gamver/gradcam.hpp"
#include "gamver/ops.hpp"
#include "oracles.hpp"

using namespace gamver;
namespace fs = std::filesystem;

namespace {

// Two 1x1 conv layers that pass the image through, one hidden unit path with
// equal spatial weights so the class-score gradient is constant over space.
Network flatHeadNet(double head0, double head1) {
  NetworkConfig config;
  config.input_size = 2;
  config.conv_layers = {{1, 1, 1, false}, {1, 1, 1, false}};
  config.hidden_units = 1;
  config.num_classes = 2;
  Network net{config, init(config)};
  net.params.conv[0].weights[0][0](0, 0) = 1.0;
  net.params.conv[1].weights[0][0](0, 0) = 1.0;
  net.params.hidden.weights.setConstant(0.5);
  net.params.output.weights(0, 0) = head0;
  net.params.output.weights(1, 0) = head1;
  return net;
}

Array2d positiveImage() {
  Array2d image(2, 2);
  image << 0.2, 0.6, 0.4, 1.0;
  return image;
}

std::vector<unsigned char> readAll(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("gradcam on the identity chain is the normalized image") {
  const Network net = flatHeadNet(1.0, -1.0);
  const Array2d image = positiveImage();
  const AttentionMap att = computeGradcam(net, image, 0, kLastConvLayer, 2);
  REQUIRE(att.normalized);
  const Array2d expected = minMaxNormalize(image);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 2; ++j)
      CHECK(att.map(i, j) == doctest::Approx(expected(i, j)).epsilon(1e-12));
}

TEST_CASE("non-positive channel gradients produce the all-zero map") {
  const Network net = flatHeadNet(-1.0, 1.0);  // class-0 gradient is negative
  const AttentionMap att = computeGradcam(net, positiveImage(), 0, kLastConvLayer, 2);
  CHECK(att.normalized);
  CHECK((att.map == 0.0).all());
}

TEST_CASE("gradcam map is normalized to [0,1] with min 0 and max 1") {
  NetworkConfig config;
  config.input_size = 12;
  config.conv_layers = {{3, 3, 1, true}, {4, 3, 1, false}};
  config.hidden_units = 6;
  config.num_classes = 3;
  config.seed = 9;
  const Network net{config, init(config)};
  Rng rng(10);
  for (int rep = 0; rep < 5; ++rep) {
    const Array2d image = oracle::randomArray(rng, 12, 12);
    const AttentionMap att = computeGradcam(net, image, kAutoClass, kLastConvLayer, 24);
    REQUIRE(att.normalized);
    if ((att.map != 0.0).any()) {
      CHECK(att.map.minCoeff() == 0.0);
      CHECK(att.map.maxCoeff() == 1.0);
    }
  }
}

TEST_CASE("normalized gradcam is invariant to positive rescaling of the head") {
  NetworkConfig config;
  config.input_size = 10;
  config.conv_layers = {{2, 3, 1, false}, {3, 3, 1, false}};
  config.hidden_units = 4;
  config.num_classes = 2;
  config.seed = 21;
  Network net{config, init(config)};
  Rng rng(22);
  const Array2d image = oracle::randomArray(rng, 10, 10);
  const AttentionMap base = computeGradcam(net, image, kAutoClass, kLastConvLayer, 10);

  Network scaled = net;
  scaled.params.output.weights *= 3.7;
  scaled.params.output.bias *= 3.7;
  const AttentionMap alt = computeGradcam(scaled, image, kAutoClass, kLastConvLayer, 10);
  CHECK(base.target_class == alt.target_class);
  for (Eigen::Index i = 0; i < base.map.rows(); ++i)
    for (Eigen::Index j = 0; j < base.map.cols(); ++j)
      CHECK(base.map(i, j) == doctest::Approx(alt.map(i, j)).epsilon(1e-12));
}

TEST_CASE("binarize median: enumeration oracle on 1..9") {
  AttentionMap att;
  att.map.resize(3, 3);
  att.map << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  att.map /= 9.0;
  att.normalized = true;
  const BinaryMask mask = binarizeMedian(att);
  CHECK((mask.mask == oracle::binarize(att.map)).all());
  CHECK(mask.mask.sum() == 4.0);  // exactly the 4 largest
  CHECK(mask.mask(1, 2) == 1.0);
  CHECK(mask.mask(1, 1) == 0.0);  // the median itself is not strictly greater
}

TEST_CASE("binarize median: constant map yields all zeros") {
  AttentionMap att;
  att.map = Array2d::Constant(4, 4, 0.0);
  att.normalized = true;
  CHECK((binarizeMedian(att).mask == 0.0).all());
}

TEST_CASE("binarize median: even-count median is the middle mean") {
  AttentionMap att;
  att.map.resize(2, 2);
  att.map << 0, 0, 1, 1;
  att.normalized = true;
  const BinaryMask mask = binarizeMedian(att);
  CHECK(mask.threshold == 0.5);
  CHECK(mask.mask(0, 0) == 0.0);
  CHECK(mask.mask(0, 1) == 0.0);
  CHECK(mask.mask(1, 0) == 1.0);
  CHECK(mask.mask(1, 1) == 1.0);
}

TEST_CASE("binarize median: all-distinct maps have exactly floor(n/2) ones") {
  Rng rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    const auto h = static_cast<Eigen::Index>(2 + uniformInt(rng, 6));
    const auto w = static_cast<Eigen::Index>(2 + uniformInt(rng, 6));
    AttentionMap att;
    att.map = oracle::randomArray(rng, h, w);  // distinct with probability 1
    att.normalized = true;
    const BinaryMask mask = binarizeMedian(att);
    CHECK(static_cast<long long>(mask.mask.sum() + 0.5) == (h * w) / 2);
    CHECK((mask.mask == oracle::binarize(att.map)).all());
  }
}

TEST_CASE("feature response: single filter equals its activation map") {
  NetworkConfig config;
  config.input_size = 6;
  config.conv_layers = {{1, 3, 1, false}, {2, 3, 1, false}};
  config.hidden_units = 3;
  config.num_classes = 2;
  config.seed = 41;
  const Network net{config, init(config)};
  Rng rng(42);
  const Array2d image = oracle::randomArray(rng, 6, 6);
  const ForwardTrace trace = forward(net, image);
  const FeatureResponseMap s = featureResponse(net, image, 0);
  CHECK((s.map == trace.conv[0].post[0]).all());
}

TEST_CASE("feature response sums filters elementwise; spec matrices check out") {
  // arithmetic of the stated example, via an independent elementwise sum
  Array2d fa(2, 2), fb(2, 2);
  fa << 1, 0, 0, 1;
  fb << 0, 2, 0, 0;
  const Array2d s = fa.abs() + fb.abs();
  Array2d expected(2, 2);
  expected << 1, 2, 0, 1;
  CHECK((s == expected).all());
  const Array2d dist = toDistribution(s);
  Array2d expected_dist(2, 2);
  expected_dist << 0.25, 0.5, 0, 0.25;
  CHECK((dist == expected_dist).all());

  // the operation against the trace-sum oracle on a real net
  NetworkConfig config;
  config.input_size = 6;
  config.conv_layers = {{3, 3, 1, false}, {4, 3, 1, false}};
  config.hidden_units = 3;
  config.num_classes = 2;
  config.seed = 43;
  const Network net{config, init(config)};
  Rng rng(44);
  const Array2d image = oracle::randomArray(rng, 6, 6);
  const ForwardTrace trace = forward(net, image);
  for (int layer = 0; layer < 2; ++layer) {
    Array2d sum = Array2d::Zero(trace.conv[static_cast<std::size_t>(layer)].post[0].rows(),
                                trace.conv[static_cast<std::size_t>(layer)].post[0].cols());
    for (const auto& f : trace.conv[static_cast<std::size_t>(layer)].post) sum += f.abs();
    const FeatureResponseMap s_op = featureResponse(net, image, layer);
    CHECK((s_op.map == sum).all());
  }
}

TEST_CASE("feature response is invariant to filter order") {
  NetworkConfig config;
  config.input_size = 6;
  config.conv_layers = {{3, 3, 1, false}, {2, 3, 1, false}};
  config.hidden_units = 3;
  config.num_classes = 2;
  config.seed = 51;
  Network net{config, init(config)};
  Rng rng(52);
  const Array2d image = oracle::randomArray(rng, 6, 6);
  const FeatureResponseMap before = featureResponse(net, image, 0);
  std::swap(net.params.conv[0].weights[0], net.params.conv[0].weights[2]);
  std::swap(net.params.conv[0].bias(0), net.params.conv[0].bias(2));
  const FeatureResponseMap after = featureResponse(net, image, 0);
  CHECK((before.map == after.map).all());
}

TEST_CASE("feature response distribution form propagates the all-zero error") {
  // zero first-layer weights and biases give an all-zero response
  NetworkConfig config;
  config.input_size = 6;
  config.conv_layers = {{2, 3, 1, false}, {2, 3, 1, false}};
  config.hidden_units = 3;
  config.num_classes = 2;
  Network net{config, init(config)};
  for (auto& out : net.params.conv[0].weights)
    for (auto& w : out) w.setZero();
  Rng rng(53);
  const Array2d image = oracle::randomArray(rng, 6, 6);
  CHECK_THROWS_AS(featureResponse(net, image, 0, /*as_distribution=*/true), DegenerateDataError);
}

TEST_CASE("average attention: identity, cancellation, and errors") {
  AttentionMap a;
  a.map.resize(1, 2);
  a.map << 0, 1;
  a.normalized = true;
  SUBCASE("copies average to themselves") {
    const AttentionMap avg = averageAttention({a, a, a});
    CHECK((avg.map == a.map).all());
  }
  SUBCASE("opposite maps cancel to the degenerate all-zero map") {
    AttentionMap b = a;
    b.map << 1, 0;
    const AttentionMap avg = averageAttention({a, b});
    CHECK((avg.map == 0.0).all());
  }
  SUBCASE("empty list and shape mismatch are rejected") {
    CHECK_THROWS_AS(averageAttention({}), ValidationError);
    AttentionMap c;
    c.map = Array2d::Zero(2, 2);
    c.normalized = true;
    CHECK_THROWS_AS(averageAttention({a, c}), ValidationError);
  }
}

TEST_CASE("overlay export: valid PNG, right dimensions, deterministic bytes") {
  const fs::path dir = fs::temp_directory_path() / "gamver_gradcam_test";
  fs::create_directories(dir);
  Image image;
  image.pixels = Array2d::Constant(8, 10, 0.5);
  AttentionMap att;
  att.map = Array2d::Zero(8, 10);
  att.normalized = true;

  exportOverlay(image, att, dir / "overlay_a.png");
  exportOverlay(image, att, dir / "overlay_b.png");
  const auto bytes_a = readAll(dir / "overlay_a.png");
  const auto bytes_b = readAll(dir / "overlay_b.png");
  REQUIRE(!bytes_a.empty());
  CHECK(bytes_a == bytes_b);

  // IHDR width (offset 16) and height (offset 20), big-endian
  REQUIRE(bytes_a.size() > 24);
  const auto be32 = [&](std::size_t off) {
    return (static_cast<unsigned>(bytes_a[off]) << 24) | (static_cast<unsigned>(bytes_a[off + 1]) << 16) |
           (static_cast<unsigned>(bytes_a[off + 2]) << 8) | static_cast<unsigned>(bytes_a[off + 3]);
  };
  CHECK(be32(16) == 10);
  CHECK(be32(20) == 8);
}
