#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lam/dataset.hpp"
#include "lam/network.hpp"
#include "lam/rng.hpp"
#include "lam/train.hpp"

using namespace lam;

namespace {

Tensor random_image(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({c, h, w});
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform());
  return t;
}

ErrorKind load_error_kind(const std::vector<std::uint8_t>& bytes, std::string* message = nullptr) {
  try {
    deserialize_weights(bytes);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  FAIL("expected a load error");
  return ErrorKind::contract;
}

}  // namespace

TEST_CASE("plain CNN") {
  const SRNetwork net = build_plain_cnn(4, 16, 4, 42);
  CHECK(receptive_field(net) == 9);
  CHECK(net.infer(random_image(3, 16, 16, 1)).shape() == Shape{3, 64, 64});
  const SRNetwork again = build_plain_cnn(4, 16, 4, 42);
  CHECK(serialize_weights(net) == serialize_weights(again));
  CHECK(serialize_weights(net) != serialize_weights(build_plain_cnn(4, 16, 4, 43)));
  CHECK_THROWS_AS(build_plain_cnn(4, 16, 5, 1), Error);
  CHECK_THROWS_AS(build_plain_cnn(1, 16, 2, 1), Error);
  CHECK_THROWS_AS(build_plain_cnn(3, 2, 2, 1), Error);
}

TEST_CASE("residual net") {
  const SRNetwork net = build_residual_net(2, 16, 2, 7);
  CHECK(receptive_field(net) == 13);
  CHECK(net.infer(random_image(3, 10, 12, 2)).shape() == Shape{3, 20, 24});

  SUBCASE("zeroed residual branches leave the head/tail path") {
    SRNetwork zeroed = net;
    // Block convolutions are layers 3 and 5 of each block; zero every conv that
    // sits between the first and last layer.
    auto& w = zeroed.weights();
    for (std::size_t i = 2; i + 2 < w.size(); ++i) w[i].tensor.data().setZero();
    const Tensor x = random_image(3, 8, 8, 3);
    // With identity blocks the global skip doubles the head features.
    Graph<float> g;
    auto head = conv2d(g.constant(x), g.constant(w[0].tensor), g.constant(w[1].tensor), 1);
    auto tail = conv2d(scale(head, 2.0), g.constant(w[w.size() - 2].tensor), g.constant(w.back().tensor), 1);
    const Tensor expected = pixel_shuffle(tail, 2).value();
    CHECK((zeroed.infer(x).data() - expected.data()).abs().maxCoeff() < 1e-6f);
  }
  CHECK_THROWS_AS(build_residual_net(0, 16, 2, 1), Error);
}

TEST_CASE("linear upsampler") {
  for (int s : {2, 3, 4}) {
    const SRNetwork net = build_linear_upsampler(s);
    CAPTURE(s);
    SUBCASE("partition of unity away from the zero-padded border") {
      const Tensor y = net.infer(Tensor({3, 10, 10}, 0.4f));
      for (int c = 0; c < 3; ++c)
        for (int r = 2 * s; r < 8 * s; ++r)
          for (int q = 2 * s; q < 8 * s; ++q) CHECK(y(c, r, q) == doctest::Approx(0.4).epsilon(1e-6));
    }
    SUBCASE("homogeneity and additivity") {
      const Tensor a = random_image(3, 9, 7, 10), b = random_image(3, 9, 7, 11);
      Tensor twice = a;
      twice.data() *= 2.0f;
      CHECK((net.infer(twice).data() - 2.0f * net.infer(a).data()).abs().maxCoeff() < 1e-6f);
      Rng rng(12);
      for (int trial = 0; trial < 10; ++trial) {
        const double p = rng.uniform(-2, 2), q = rng.uniform(-2, 2);
        Tensor mix(a.shape(), (p * a.data().cast<double>() + q * b.data().cast<double>()).cast<float>().eval());
        const Eigen::ArrayXd lhs = net.infer(mix).data().cast<double>();
        const Eigen::ArrayXd rhs = p * net.infer(a).data().cast<double>() + q * net.infer(b).data().cast<double>();
        CHECK((lhs - rhs).matrix().norm() <= 1e-5 * rhs.matrix().norm());
      }
    }
    SUBCASE("impulse response equals the bicubic kernel") {
      Tensor x({3, 9, 9});
      x(1, 4, 4) = 1.0f;
      const Tensor y = net.infer(x);
      for (int r = 0; r < 9 * s; ++r)
        for (int q = 0; q < 9 * s; ++q) {
          // HR pixel r samples LR coordinate (r + 0.5)/s - 0.5.
          auto w = [&](int hr) {
            const double u = (hr + 0.5) / s - 0.5, t = std::abs(u - 4.0);
            if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
            if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
            return 0.0;
          };
          CHECK(y(1, r, q) == doctest::Approx(w(r) * w(q)).epsilon(1e-6));
          CHECK(y(0, r, q) == 0.0f);
        }
    }
  }
  CHECK_THROWS_AS(build_linear_upsampler(1), Error);
}

TEST_CASE("receptive field analysis") {
  SUBCASE("single 3x3 conv") {
    SRNetwork one(NetworkKind::plain_cnn, 1, {{LayerOp::conv, {1, 1, 3, 1}}},
                  {{"layer0.kernel", Tensor({1, 1, 3, 3}, 1.0f)}, {"layer0.bias", Tensor({1})}});
    CHECK(receptive_field(one) == 3);
    CHECK(probe_receptive_field(one) == 3);
  }
  SUBCASE("stacks of k 3x3 convs agree with the impulse probe") {
    for (int depth : {2, 3, 4, 6}) {
      const SRNetwork net = build_plain_cnn(depth, 4, 2, 5, 1);
      CHECK(receptive_field(net) == 2 * depth + 1);
      CHECK(probe_receptive_field(net) == 2 * depth + 1);
    }
  }
  SUBCASE("eight-layer fully convolutional reference") {
    CHECK(receptive_field(build_plain_cnn(8, 16, 4, 0)) == 17);
  }
  SUBCASE("residual and linear models") {
    const SRNetwork res = build_residual_net(3, 4, 2, 9, 1);
    CHECK(receptive_field(res) == 17);
    CHECK(probe_receptive_field(res) == 17);
    for (int s : {2, 3, 4}) CHECK(probe_receptive_field(build_linear_upsampler(s, 1)) == receptive_field(build_linear_upsampler(s, 1)));
  }
  SUBCASE("conv after pixel shuffle is rejected") {
    SRNetwork bad(NetworkKind::plain_cnn, 2,
                  {{LayerOp::conv, {1, 4, 3, 1}}, {LayerOp::pixel_shuffle, {2, 0, 0, 0}}, {LayerOp::conv, {1, 1, 3, 1}}},
                  {{"layer0.kernel", Tensor({4, 1, 3, 3})},
                   {"layer0.bias", Tensor({4})},
                   {"layer2.kernel", Tensor({1, 1, 3, 3})},
                   {"layer2.bias", Tensor({1})}});
    try {
      receptive_field(bad);
      FAIL("expected analysis error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::analysis);
    }
  }
}

TEST_CASE("weight files") {
  const SRNetwork net = build_residual_net(1, 8, 2, 3);
  const auto bytes = serialize_weights(net);

  SUBCASE("header layout") {
    REQUIRE(bytes.size() > 10);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LAMW");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == static_cast<std::uint8_t>(NetworkKind::residual_net));
    CHECK(bytes[7] == 2);
    CHECK(bytes[8] == net.layers().size());
    CHECK(bytes[9] == 0);
    // header + 9 bytes per layer + per tensor (4 + 4*rank + 4*size)
    std::size_t expected = 10 + 9 * net.layers().size();
    for (const auto& w : net.weights()) expected += 4 + 4 * w.tensor.rank() + 4 * w.tensor.size();
    CHECK(bytes.size() == expected);
  }
  SUBCASE("round trip is bit exact") {
    const auto path = std::filesystem::temp_directory_path() / "lam_test_roundtrip.lamw";
    save_weights(net, path);
    const SRNetwork loaded = load_weights(path);
    const Tensor x = random_image(3, 12, 12, 4);
    CHECK(loaded.infer(x) == net.infer(x));
    CHECK(serialize_weights(loaded) == bytes);
    std::filesystem::remove(path);
  }
  SUBCASE("bad magic") {
    auto broken = bytes;
    broken[0] = 'X';
    CHECK(load_error_kind(broken) == ErrorKind::magic);
  }
  SUBCASE("version mismatch") {
    auto broken = bytes;
    broken[4] = 2;
    CHECK(load_error_kind(broken) == ErrorKind::version);
  }
  SUBCASE("truncated inside a tensor names it") {
    auto broken = bytes;
    broken.resize(bytes.size() - 10);
    std::string message;
    CHECK(load_error_kind(broken, &message) == ErrorKind::truncated);
    CHECK(message.find("layer") != std::string::npos);
    CHECK(message.find("bias") != std::string::npos);
  }
  SUBCASE("shape mismatch") {
    auto broken = bytes;
    // First tensor's first dim (c_out of the head conv) sits right after the layer table.
    const std::size_t dim0 = 10 + 9 * net.layers().size() + 4;
    broken[dim0] = static_cast<std::uint8_t>(broken[dim0] + 1);
    CHECK(load_error_kind(broken) == ErrorKind::shape);
  }
  SUBCASE("NaN weights") {
    SRNetwork copy = net;
    copy.weights()[2].tensor[0] = std::nanf("");
    std::string message;
    try {
      copy.validate();
    } catch (const Error& e) {
      message = e.what();
      CHECK(e.kind() == ErrorKind::numeric);
    }
    CHECK(message.find(copy.weights()[2].name) != std::string::npos);
    CHECK(load_error_kind(serialize_weights(copy)) == ErrorKind::numeric);
  }
}

TEST_CASE("Adam update matches hand arithmetic") {
  Tensor p({1}, {1.0f});
  Tensor* params[] = {&p};
  AdamOptimizer adam(0.9, 0.999, 1e-8);
  Eigen::ArrayXd g1(1), g2(1);
  g1 << 0.5;
  g2 << -0.2;
  adam.step(params, std::span<const Eigen::ArrayXd>(&g1, 1), 0.1);
  // m = 0.05, v = 0.00025, m_hat = 0.5, v_hat = 0.25 -> step 0.1 * 0.5 / (0.5 + 1e-8)
  const double p1 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
  CHECK(p[0] == doctest::Approx(p1).epsilon(1e-7));
  adam.step(params, std::span<const Eigen::ArrayXd>(&g2, 1), 0.1);
  const double m2 = 0.9 * 0.05 + 0.1 * -0.2, v2 = 0.999 * 0.00025 + 0.001 * 0.04;
  const double p2 = p1 - 0.1 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.998001)) + 1e-8);
  CHECK(p[0] == doctest::Approx(p2).epsilon(1e-6));
  CHECK(adam.steps() == 2);
}

TEST_CASE("tiny trainer") {
  std::vector<Tensor> images;
  for (int i = 0; i < 8; ++i) images.push_back(synthesize_image(i, 48, 48, 100 + i));
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.patch_size = 8;
  cfg.minibatch = 2;
  cfg.seed = 5;

  SUBCASE("zero iterations keep weights") {
    cfg.iterations = 0;
    const SRNetwork net = build_plain_cnn(2, 4, 2, 1);
    CHECK(serialize_weights(train_tiny(net, images, cfg)) == serialize_weights(net));
  }
  SUBCASE("loss decreases and training is deterministic") {
    cfg.iterations = 2000;
    const SRNetwork net = build_plain_cnn(2, 4, 2, 1);
    const double before = evaluate_l1(net, images);
    const SRNetwork trained = train_tiny(net, images, cfg);
    CHECK(evaluate_l1(trained, images) < before);
    cfg.iterations = 50;
    CHECK(serialize_weights(train_tiny(net, images, cfg)) == serialize_weights(train_tiny(net, images, cfg)));
  }
  SUBCASE("errors") {
    cfg.patch_size = 32;
    CHECK_THROWS_AS(train_tiny(build_plain_cnn(2, 4, 2, 1), images, cfg), Error);  // 64px crop > 48px image
    cfg.patch_size = 8;
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(train_tiny(build_plain_cnn(2, 4, 2, 1), images, cfg), Error);
    cfg.beta1 = 0.9;
    CHECK_THROWS_AS(train_tiny(build_linear_upsampler(2), images, cfg), Error);
  }
}
