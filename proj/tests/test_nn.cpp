#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "occpose/errors.hpp"
#include "occpose/gradcheck.hpp"
#include "occpose/ops.hpp"
#include "occpose/params.hpp"
#include "occpose/tcn.hpp"

using namespace occpose;
using namespace occpose::nn;

namespace {

Tensor random_input(std::vector<std::size_t> shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t(std::move(shape));
  for (double& v : t.values) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("conv: hand-computed sliding sum") {
  Tensor x({1, 4}, {1, 2, 3, 4});
  Tensor k({1, 1, 3}, {1, 1, 1});
  Tensor b({1}, {0});
  const Tensor y = conv1d_temporal(x, k, &b);
  REQUIRE(y.shape == std::vector<std::size_t>{1, 2});
  CHECK(y[0] == 6);
  CHECK(y[1] == 9);
  const Tensor y2 = conv1d_temporal(Tensor({1, 5}, {1, 2, 3, 4, 5}), k, nullptr, 2);
  REQUIRE(y2.shape == std::vector<std::size_t>{1, 2});
  CHECK(y2[0] == 6);
  CHECK(y2[1] == 12);
}

TEST_CASE("conv: identity kernel") {
  const Tensor x = random_input({2, 3, 5}, 1);
  Tensor k({3, 3, 1});
  for (int c = 0; c < 3; ++c) k.values[c * 3 + c] = 1.0;
  const Tensor y = conv1d_temporal(x, k, nullptr);
  CHECK(y.values == x.values);
}

TEST_CASE("conv: shape errors") {
  Tensor x({1, 2});
  Tensor k({1, 1, 3});
  CHECK_THROWS_AS(conv1d_temporal(x, k, nullptr), ShapeMismatch);
  Tensor k2({1, 2, 1});
  CHECK_THROWS_AS(conv1d_temporal(Tensor({1, 5}), k2, nullptr), ShapeMismatch);
}

TEST_CASE("relu and sigmoid") {
  const Tensor r = relu(Tensor({1, 2}, {-1, 2}));
  CHECK(r[0] == 0);
  CHECK(r[1] == 2);
  CHECK(sigmoid(Tensor({1, 1}, {0}))[0] == 0.5);
}

TEST_CASE("batchnorm: zero-variance batch outputs the shift") {
  Tensor x({3, 2, 4});
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t t = 0; t < 4; ++t) {
      x.at(b, 0, t) = 2.5;
      x.at(b, 1, t) = -1.0;
    }
  Tensor scale({2}, {1.7, 0.3}), shift({2}, {0.25, -4.0});
  Tensor rm({2}), rv({2}, 1.0);
  const Tensor y = batchnorm_1d(x, scale, shift, rm, rv, Mode::Train);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(y.at(b, 0, t) == 0.25);
      CHECK(y.at(b, 1, t) == -4.0);
    }
  // running stats moved towards the batch mean
  CHECK(rm[0] == doctest::Approx(0.25));
  CHECK(rv[0] == doctest::Approx(0.9));
}

TEST_CASE("batchnorm: eval mode reads the running stats only") {
  const Tensor x = random_input({2, 2, 3}, 4);
  Tensor scale({2}, {2, 1}), shift({2}, {0, 1});
  Tensor rm({2}, {0.5, -0.5}), rv({2}, {4, 1});
  const Tensor before_m = rm, before_v = rv;
  const Tensor y = batchnorm_1d(x, scale, shift, rm, rv, Mode::Eval);
  CHECK(rm.values == before_m.values);
  CHECK(rv.values == before_v.values);
  CHECK(y.at(1, 0, 2) == doctest::Approx(2 * (x.at(1, 0, 2) - 0.5) / std::sqrt(4 + 1e-5)));
}

TEST_CASE("dropout") {
  const Tensor x = random_input({4, 8, 16}, 2);
  std::mt19937_64 rng(1);
  CHECK(dropout(x, 0.5, rng, Mode::Eval).values == x.values);
  std::vector<std::uint8_t> mask;
  const Tensor y = dropout(x, 0.25, rng, Mode::Train, &mask);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i]) {
      ++kept;
      CHECK(y[i] == doctest::Approx(x[i] / 0.75));
    } else {
      CHECK(y[i] == 0.0);
    }
  }
  CHECK(kept > x.size() / 2);
  CHECK(kept < x.size());
}

TEST_CASE("occlusion gate") {
  const Tensor kp = random_input({2, 6, 5}, 9);
  SUBCASE("saturated negative logits pass everything") {
    const GateResult g = occlusion_gate(kp, Tensor({2, 3, 5}, -100.0), 0.5);
    CHECK(g.gated.values == kp.values);
  }
  SUBCASE("saturated positive logits zero everything") {
    const GateResult g = occlusion_gate(kp, Tensor({2, 3, 5}, 100.0), 0.5);
    for (double v : g.gated.values) CHECK(v == 0.0);
  }
  SUBCASE("mask follows the sign of the logit at tau 0.5") {
    const Tensor logits = random_input({2, 3, 5}, 10);
    const GateResult g = occlusion_gate(kp, logits, 0.5);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t t = 0; t < 5; ++t) {
          const bool hidden = logits.at(b, j, t) > 0;
          for (std::size_t c : {2 * j, 2 * j + 1})
            CHECK(g.gated.at(b, c, t) == (hidden ? 0.0 : kp.at(b, c, t)));
        }
  }
  SUBCASE("a single occlusion vector is broadcast over the window") {
    Tensor logits({2, 3, 1}, -5.0);
    logits.at(0, 1, 0) = 5.0;
    const GateResult g = occlusion_gate(kp, logits, 0.5);
    for (std::size_t t = 0; t < 5; ++t) {
      CHECK(g.gated.at(0, 2, t) == 0.0);
      CHECK(g.gated.at(0, 3, t) == 0.0);
      CHECK(g.gated.at(1, 2, t) == kp.at(1, 2, t));
    }
  }
}

TEST_CASE("primitive gradients match finite differences") {
  for (const auto& c : check_primitives(5)) {
    INFO(c.name);
    CHECK(c.max_rel_error < 1e-4);
  }
}

TEST_CASE("tiny network gradients match finite differences") {
  TcnConfig cfg;
  cfg.joints = 3;
  cfg.channels = 8;
  cfg.blocks = 1;
  for (Variant v : {Variant::OneVector, Variant::ManyVectors}) {
    cfg.variant = v;
    const GradCheck g = check_network(cfg, 3);
    INFO(g.name);
    CHECK(g.max_rel_error < 1e-3);
    CHECK(g.coords > 0u);
  }
}

TEST_CASE("tcn: shape contract") {
  TcnConfig cfg;
  cfg.joints = 15;
  cfg.kernel_w = 3;
  cfg.blocks = 2;
  CHECK(cfg.receptive_field() == 7);
  for (Variant v : {Variant::OneVector, Variant::ManyVectors}) {
    cfg.variant = v;
    const ParameterStore params = init_tcn_params(cfg, 1);
    const Tensor kp = random_input({1, 30, 7}, 2);
    const TcnOutput out = tcn_forward(kp, Tensor({1, 15, 7}), cfg, params);
    CHECK(out.pose3d.size() == 45u);
    CHECK(out.occ_prob.shape == std::vector<std::size_t>{1, 15, v == Variant::OneVector ? 1u : 7u});
  }
  const ParameterStore params = init_tcn_params(cfg, 1);
  CHECK_THROWS_AS(tcn_forward(random_input({1, 30, 9}, 2), Tensor({1, 15, 9}), cfg, params), ConfigError);
}

TEST_CASE("tcn: receptive field formula") {
  TcnConfig cfg;
  for (int w : {1, 3, 5})
    for (int b : {0, 1, 2, 4}) {
      cfg.kernel_w = w;
      cfg.blocks = b;
      CHECK(cfg.receptive_field() == (w - 1) * (1 + b) + 1);
    }
  cfg.kernel_w = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("tcn: full-scale channel count runs forward") {
  TcnConfig cfg;
  cfg.channels = 1024;
  const ParameterStore params = init_tcn_params(cfg, 1);
  const int rf = cfg.receptive_field();
  const TcnOutput out = tcn_forward(random_input({1, 34, static_cast<std::size_t>(rf)}, 3),
                                    Tensor({1, 17, static_cast<std::size_t>(rf)}), cfg, params);
  CHECK(out.pose3d.size() == 51u);
  for (double v : out.pose3d.values) CHECK(std::isfinite(v));
}

TEST_CASE("tcn: eval forward is pure") {
  TcnConfig cfg;
  cfg.joints = 5;
  cfg.channels = 16;
  ParameterStore params = init_tcn_params(cfg, 4);
  const ParameterStore copy = params;
  const Tensor kp = random_input({3, 10, 7}, 5);
  const Tensor occ({3, 5, 7});
  const TcnOutput a = tcn_forward(kp, occ, cfg, params);
  const TcnOutput b = tcn_forward(kp, occ, cfg, params);
  CHECK(a.pose3d.values == b.pose3d.values);
  CHECK(params.same_values(copy));
}

TEST_CASE("tcn: seeded init is deterministic") {
  TcnConfig cfg;
  CHECK(init_tcn_params(cfg, 9).same_values(init_tcn_params(cfg, 9)));
  CHECK_FALSE(init_tcn_params(cfg, 9).same_values(init_tcn_params(cfg, 10)));
}

TEST_CASE("tcn config text round trip") {
  TcnConfig cfg;
  cfg.channels = 32;
  cfg.dropout = 0.1;
  cfg.variant = Variant::OneVector;
  const TcnConfig back = TcnConfig::from_text(cfg.to_text());
  CHECK(back.channels == 32);
  CHECK(back.dropout == 0.1);
  CHECK(back.variant == Variant::OneVector);
  CHECK_THROWS_AS(TcnConfig::from_text("bogus=1\n"), ConfigError);
}

TEST_CASE("sgd") {
  SUBCASE("zero learning rate leaves parameters alone") {
    ParameterStore p;
    Tensor& t = p.add("w", {3}, true, 1.5);
    t.ensure_grad();
    t.grad = {4, -2, 7};
    SgdState s;
    sgd_step(p, s, 0.0, 0.9);
    CHECK(t.values == std::vector<double>{1.5, 1.5, 1.5});
  }
  SUBCASE("single plain step") {
    ParameterStore p;
    Tensor& t = p.add("w", {1}, true, 1.0);
    t.ensure_grad();
    t.grad[0] = 2.0;
    SgdState s;
    sgd_step(p, s, 0.1, 0.0);
    CHECK(t[0] == doctest::Approx(0.8));
  }
  SUBCASE("momentum on a quadratic bowl converges") {
    // Heavy ball on p^2 with lr 0.1, mu 0.9 contracts by sqrt(0.9) per step,
    // so |p| only drops below 1e-3 somewhere past step 100.
    ParameterStore p;
    Tensor& t = p.add("w", {1}, true, 1.0);
    t.ensure_grad();
    SgdState s;
    double ref_p = 1.0, ref_v = 0.0;
    for (int i = 1; i <= 200; ++i) {
      t.grad[0] = 2.0 * t[0];
      sgd_step(p, s, 0.1, 0.9);
      ref_v = 0.9 * ref_v + 2.0 * ref_p;
      ref_p -= 0.1 * ref_v;
      REQUIRE(t[0] == doctest::Approx(ref_p).epsilon(1e-12));
      if (i == 100) CHECK(std::abs(t[0]) < 5e-3);
    }
    CHECK(std::abs(t[0]) < 1e-3);
  }
  SUBCASE("non-finite gradients are rejected before any update") {
    ParameterStore p;
    p.add("a", {1}, true, 1.0);
    p.add("b", {1}, true, 1.0);
    Tensor& a = p.get("a");
    Tensor& b = p.get("b");
    a.ensure_grad();
    b.ensure_grad();
    a.grad[0] = 1.0;
    b.grad[0] = NAN;
    SgdState s;
    try {
      sgd_step(p, s, 0.1, 0.0);
      FAIL("expected NonFiniteGradient");
    } catch (const NonFiniteGradient& e) {
      CHECK(std::string(e.what()).find('b') != std::string::npos);
      CHECK(e.kind() == ErrorKind::Numerical);
    }
    CHECK(a[0] == 1.0);
  }
  SUBCASE("running statistics are not trained") {
    ParameterStore p;
    Tensor& r = p.add("bn.running_mean", {1}, false, 3.0);
    r.ensure_grad();
    r.grad[0] = 10.0;
    SgdState s;
    sgd_step(p, s, 0.1, 0.0);
    CHECK(r[0] == 3.0);
  }
}

TEST_CASE("TCN1 checkpoint round trip is bit-exact") {
  TcnConfig cfg;
  cfg.channels = 16;
  const ParameterStore p = init_tcn_params(cfg, 12);
  const std::string path = "ckpt_test.tcn";
  save_checkpoint(path, p);
  const ParameterStore back = load_checkpoint(path);
  CHECK(back.same_values(p));
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(back.entries()[i].name == p.entries()[i].name);
    CHECK(back.entries()[i].trainable == p.entries()[i].trainable);
  }
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "TCN1");
}

TEST_CASE("TCN1 rejects truncated files") {
  TcnConfig cfg;
  cfg.channels = 4;
  const std::string path = "ckpt_trunc.tcn";
  save_checkpoint(path, init_tcn_params(cfg, 1));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  CHECK_THROWS_AS(load_checkpoint("does_not_exist.tcn"), Error);
}
