#include <cmath>

#include "doctest.h"
#include "pidaudit/error.hpp"
#include "pidaudit/log.hpp"
#include "pidaudit/selftest.hpp"
#include "pidaudit/transformer.hpp"

using namespace pidaudit;

namespace {

ModelConfig small_config(int input_dim = 3, int bins = 64) {
  ModelConfig mc;
  mc.embed_dim = 16;
  mc.heads = 2;
  mc.layers = 2;
  mc.context = 8;
  mc.input_dim = input_dim;
  mc.out_bins = bins;
  return mc;
}

AlignedPanel random_panel(std::size_t rows, std::size_t cols, std::uint64_t seed, double sigma = 0.01) {
  AlignedPanel p;
  const auto t0 = parse_timestamp("2025-01-02T14:00:00Z");
  CounterRng rng(seed);
  for (std::size_t t = 0; t < rows; ++t) p.timestamps.push_back(t0 + std::chrono::hours(t));
  for (std::size_t c = 0; c < cols; ++c) p.symbols.push_back("S" + std::to_string(c));
  for (std::size_t i = 0; i < rows * cols; ++i) p.returns.push_back(sigma * rng.normal());
  return p;
}

Tensor random_window(std::size_t n, std::size_t d, std::uint64_t seed) {
  Tensor w({n, d});
  CounterRng rng(seed);
  for (double& v : w.values()) v = 0.01 * rng.normal();
  return w;
}

struct Quiet {
  Quiet() { log::set_quiet(true); }
} quiet;

}  // namespace

TEST_CASE("config validation") {
  ModelConfig mc;
  CHECK_NOTHROW(mc.validate());
  CHECK(mc.head_dim() == 32);
  mc.heads = 7;
  CHECK_THROWS_AS(mc.validate(), ConfigError);
  mc = ModelConfig{};
  mc.context = 0;
  CHECK_THROWS_AS(mc.validate(), ConfigError);
}

TEST_CASE("initialisation") {
  const Model a(ModelConfig{}, 1), b(ModelConfig{}, 1), c(ModelConfig{}, 2);
  CHECK(a.param("blocks.0.wq").value == b.param("blocks.0.wq").value);
  CHECK(!(a.param("blocks.0.wq").value == c.param("blocks.0.wq").value));
  const auto& w = a.param("blocks.0.w1").value.values();
  REQUIRE(w.size() >= 100000);
  double sq = 0.0;
  for (double v : w) sq += v * v;
  CHECK(std::abs(std::sqrt(sq / static_cast<double>(w.size())) - 0.02) < 0.001);
  for (double v : a.param("blocks.1.bq").value.values()) CHECK(v == 0.0);
  for (double v : a.param("blocks.1.ln1.gain").value.values()) CHECK(v == 1.0);
}

TEST_CASE("rope") {
  const ad::RopeCache cache(16, 8, 10000.0);
  Tensor x({16, 8});
  CounterRng rng(3);
  const std::vector<double> v{0.3, -1.2, 0.7, 2.0, -0.4, 0.1, 1.5, -0.9};
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 8; ++c) x.at(r, c) = v[c];
  Tape t(false);
  const auto y = ad::rope(t.constant(x), 1, 16, cache).value();
  double n0 = 0.0;
  for (double e : v) n0 += e * e;
  for (std::size_t r = 0; r < 16; ++r) {
    double n = 0.0;
    for (std::size_t c = 0; c < 8; ++c) n += y.at(r, c) * y.at(r, c);
    CHECK(std::abs(n - n0) <= 1e-12);
  }
  for (std::size_t c = 0; c < 8; ++c) CHECK(y.at(0, c) == v[c]);
  // Pair j at position m turns by m * base^(-2j/D).
  const double angle = 3.0 * std::pow(10000.0, -2.0 / 8.0);
  CHECK(y.at(3, 2) == doctest::Approx(v[2] * std::cos(angle) - v[3] * std::sin(angle)));
  CHECK(y.at(3, 3) == doctest::Approx(v[2] * std::sin(angle) + v[3] * std::cos(angle)));
  CHECK(selftest::rope_shift_error(200) <= 1e-9);
}

TEST_CASE("attention special cases") {
  Tape t(false);
  CounterRng rng(4);
  auto rnd = [&](std::size_t r, std::size_t c) {
    Tensor x({r, c});
    for (double& v : x.values()) v = rng.normal();
    return x;
  };
  SUBCASE("single token returns its value vector") {
    const auto v = rnd(1, 4);
    const ad::AttentionOptions opt{.heads = 2, .seq_len = 1};
    const auto out = ad::causal_attention(t.constant(rnd(1, 4)), t.constant(rnd(1, 4)), t.constant(v), opt).value();
    for (std::size_t c = 0; c < 4; ++c) CHECK(out.at(0, c) == doctest::Approx(v.at(0, c)).epsilon(1e-14));
  }
  SUBCASE("equal keys average the visible values") {
    const std::size_t N = 5;
    Tensor k({N, 4});
    const auto row = rnd(1, 4);
    for (std::size_t r = 0; r < N; ++r)
      for (std::size_t c = 0; c < 4; ++c) k.at(r, c) = row.at(0, c);
    const auto v = rnd(N, 4);
    const ad::AttentionOptions opt{.heads = 2, .seq_len = N};
    const auto out = ad::causal_attention(t.constant(rnd(N, 4)), t.constant(k), t.constant(v), opt).value();
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0.0;
        for (std::size_t j = 0; j <= i; ++j) mean += v.at(j, c);
        CHECK(out.at(i, c) == doctest::Approx(mean / static_cast<double>(i + 1)).epsilon(1e-12));
      }
  }
  SUBCASE("model attention with one position is the value projection") {
    const Model m(small_config(), 5);
    Tape tape(false);
    const auto vars = m.bind(tape);
    const auto x = tape.constant(rnd(1, 16));
    const auto heads = attention_heads(x, vars.blocks[0], m.config(), 1, m.rope_cache(), {});
    const auto v = ad::linear(x, vars.blocks[0].wv, vars.blocks[0].bv);
    for (std::size_t c = 0; c < 16; ++c)
      CHECK(heads.value().at(0, c) == doctest::Approx(v.value().at(0, c)).epsilon(1e-12));
  }
}

TEST_CASE("forward contract") {
  const Model m(small_config(), 6);
  const auto w = random_window(8, 3, 7);
  const auto logits = forward_logits(m, w);
  CHECK(logits.shape() == std::vector<std::size_t>{8, 64});
  CHECK(forward_logits(m, w) == logits);
  const auto p = predict_dist(m, w);
  REQUIRE(p.size() == 64);
  double s = 0.0;
  for (double v : p) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(std::abs(s - 1.0) <= 1e-6);
}

TEST_CASE("causal masking") {
  ModelConfig mc = small_config();
  Model m(mc, 8);
  CounterRng rng(9);
  for (auto& p : m.params())
    for (double& v : p.value.values()) v += 0.1 * rng.normal();
  const auto w = random_window(8, 3, 10);
  const auto base = forward_logits(m, w);
  for (std::size_t t = 0; t < 8; ++t) {
    auto changed = w;
    for (std::size_t c = 0; c < 3; ++c) changed.at(t, c) += 0.5;
    const auto out = forward_logits(m, changed);
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t c = 0; c < 64; ++c) CHECK(out.at(r, c) == base.at(r, c));
    bool moved = false;
    for (std::size_t c = 0; c < 64; ++c) moved = moved || out.at(t, c) != base.at(t, c);
    CHECK(moved);
  }
}

TEST_CASE("tiny model gradient check") {
  const auto r = selftest::tiny_model_gradcheck();
  INFO("worst parameter: " << r.worst_param);
  CHECK(r.max_rel_error <= 1e-4);
  CHECK(r.coordinates > 1000);
}

TEST_CASE("training") {
  const QuantizerSpec q;
  SUBCASE("first batch is near uniform") {
    Model m(small_config(), 11);
    TrainConfig tc;
    tc.epochs = 1;
    tc.max_steps = 1;
    const auto r = train(m, random_panel(200, 3, 12), tc, q);
    REQUIRE(r.step_losses.size() == 1);
    CHECK(std::abs(r.step_losses[0] - std::log(64.0)) < 0.5);
  }
  SUBCASE("constant returns are learned within 200 steps") {
    AlignedPanel p = random_panel(120, 3, 13);
    for (std::size_t t = 0; t < p.rows(); ++t) {
      p.returns[t * 3 + 0] = 0.01;
      p.returns[t * 3 + 1] = -0.004;
      p.returns[t * 3 + 2] = 0.002;
    }
    Model m(small_config(), 14);
    TrainConfig tc;
    tc.adam.lr = 3e-3;
    tc.epochs = 1000;
    tc.max_steps = 200;
    tc.batch = 8;
    const auto r = train(m, p, tc, q);
    CHECK(r.step_losses.size() == 200);
    CHECK(r.step_losses.back() < 0.1);
  }
  SUBCASE("same seed gives the same history") {
    auto run = [&] {
      Model m(small_config(), 15);
      TrainConfig tc;
      tc.epochs = 2;
      tc.batch = 16;
      return train(m, random_panel(150, 3, 16), tc, q);
    };
    const auto a = run(), b = run();
    CHECK(a.step_losses == b.step_losses);
    REQUIRE(a.history.size() == 2);
    CHECK(a.history[1].val_loss == b.history[1].val_loss);
  }
  SUBCASE("panel too short") {
    Model m(small_config(), 17);
    CHECK_THROWS_AS(train(m, random_panel(8, 3, 18), TrainConfig{}, q), DataError);
  }
}
