#include <doctest.h>

#include <cmath>
#include <numeric>

#include "textar/nn.hpp"
#include "textar/params.hpp"
#include "textar/rng.hpp"
#include "textar/tensor.hpp"

using namespace textar;

namespace {

// projection loss L = sum(c .* y): linear in y, so dL/dy = c and the check
// exercises exactly the op's Jacobian
double proj_loss(const Tensor& y, const Tensor& c, Tensor* dy) {
  REQUIRE(y.shape == c.shape);
  if (dy) *dy = c;
  double L = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) L += y.v[i] * c.v[i];
  return L;
}

Tensor away_from_zero(Tensor t, double margin) {
  for (double& x : t.v) x += (x >= 0.0 ? margin : -margin);
  return t;
}

}  // namespace

TEST_CASE("linear: identity, hand example, zero input") {
  Tensor I({2, 2}, {1, 0, 0, 1});
  Tensor b0({2}, {0, 0});
  Tensor x({1, 2}, {3.0, -4.0});
  const Tensor y = nn::linear(x, I, b0);
  CHECK(y.v == x.v);

  Tensor b({2}, {3, 4});
  Tensor x2({1, 2}, {1, 2});
  const Tensor y2 = nn::linear(x2, I, b);
  CHECK(y2.v[0] == doctest::Approx(4.0));
  CHECK(y2.v[1] == doctest::Approx(6.0));

  Tensor z({1, 2}, {0, 0});
  const Tensor y3 = nn::linear(z, I, b);
  CHECK(y3.v[0] == doctest::Approx(3.0));
  CHECK(y3.v[1] == doctest::Approx(4.0));

  Tensor wrong({3, 2});
  CHECK_THROWS(nn::linear(x, wrong, b));
}

TEST_CASE("softmax with temperature: closed forms and properties") {
  Tensor u({1, 4}, {2.5, 2.5, 2.5, 2.5});
  for (double tau : {0.25, 1.0, 3.0}) {
    const Tensor y = nn::softmax_temperature(u, tau, -1);
    for (double p : y.v) CHECK(p == doctest::Approx(0.25));
  }

  Tensor x({1, 2}, {0.0, std::log(3.0)});
  const Tensor y = nn::softmax_temperature(x, 1.0, 1);
  CHECK(y.v[0] == doctest::Approx(0.25));
  CHECK(y.v[1] == doctest::Approx(0.75));

  // lower temperature concentrates mass
  Tensor x2({1, 2}, {0.0, 1.0});
  const Tensor warm = nn::softmax_temperature(x2, 1.0, 1);
  const Tensor cold = nn::softmax_temperature(x2, 0.25, 1);
  CHECK(cold.v[1] > warm.v[1]);

  // rows sum to one, shift invariance
  Rng rng(2);
  Tensor r = nn::init_uniform({5, 7}, 4.0, rng);
  Tensor shifted = r;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 7; ++j) shifted.at(i, j) += 11.5;
  const Tensor a = nn::softmax_temperature(r, 0.7, 1);
  const Tensor b = nn::softmax_temperature(shifted, 0.7, 1);
  for (int i = 0; i < 5; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 7; ++j) {
      sum += a.at(i, j);
      CHECK(a.at(i, j) == doctest::Approx(b.at(i, j)).epsilon(1e-9));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }

  CHECK_THROWS(nn::softmax_temperature(x, 0.0, 1));
  CHECK_THROWS(nn::softmax_temperature(x, -1.0, 1));
}

TEST_CASE("layer_norm normalizes each row pre-affine") {
  Rng rng(3);
  Tensor x = nn::init_uniform({6, 16}, 3.0, rng);
  Tensor gamma = Tensor::full({16}, 1.0);
  Tensor beta = Tensor::zeros({16});
  nn::LayerNormCache cache;
  const Tensor y = nn::layer_norm(x, gamma, beta, &cache);
  for (int r = 0; r < 6; ++r) {
    double mean = 0.0, var = 0.0;
    for (int i = 0; i < 16; ++i) mean += y.at(r, i);
    mean /= 16;
    for (int i = 0; i < 16; ++i) var += (y.at(r, i) - mean) * (y.at(r, i) - mean);
    var /= 16;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("conv2d: identity kernel and shape math") {
  // 1x1 identity kernel reproduces the input
  Rng rng(4);
  Tensor x = nn::init_uniform({2, 3, 5, 4}, 1.0, rng);
  Tensor k = Tensor::zeros({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) k.at(c, c, 0, 0) = 1.0;
  Tensor b = Tensor::zeros({3});
  const Tensor y = nn::conv2d(x, k, b, 1, 0);
  CHECK(y.shape == x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.v[i] == doctest::Approx(x.v[i]));

  // stride-2 3x3 same-pad halves spatial dims (ceil)
  Tensor k2 = Tensor::zeros({4, 3, 3, 3});
  Tensor b2 = Tensor::zeros({4});
  const Tensor y2 = nn::conv2d(x, k2, b2, 2, 1);
  CHECK(y2.shape == std::vector<int>({2, 4, 3, 2}));
}

TEST_CASE("max_pool2d hand example") {
  Tensor x({1, 1, 2, 4}, {1, 5, 2, 0, 3, 2, 8, 1});
  std::vector<std::size_t> argmax;
  const Tensor y = nn::max_pool2d(x, 2, 2, &argmax);
  CHECK(y.shape == std::vector<int>({1, 1, 1, 2}));
  CHECK(y.v[0] == 5.0);
  CHECK(y.v[1] == 8.0);
  Tensor dy({1, 1, 1, 2}, {1.0, 2.0});
  const Tensor dx = nn::max_pool2d_backward(x, dy, argmax);
  CHECK(dx.v[1] == 1.0);  // the 5
  CHECK(dx.v[6] == 2.0);  // the 8
  CHECK(std::accumulate(dx.v.begin(), dx.v.end(), 0.0) == doctest::Approx(3.0));
}

TEST_CASE("relu and gelu pointwise values") {
  Tensor x({1, 4}, {-2.0, -0.5, 0.5, 2.0});
  const Tensor r = nn::relu(x);
  CHECK(r.v == std::vector<double>({0.0, 0.0, 0.5, 2.0}));
  const Tensor g = nn::gelu(x);
  CHECK(g.v[3] == doctest::Approx(2.0 * 0.5 * (1.0 + std::erf(2.0 / std::sqrt(2.0)))));
  CHECK(g.v[0] < 0.0);       // gelu keeps a small negative tail
  CHECK(g.v[2] > 0.0);
  CHECK(g.v[2] < 0.5);       // below identity for small positive x
}

TEST_CASE("dropout: eval identity, train scaling, mask backward") {
  Rng rng(5);
  Tensor x = Tensor::full({4, 8}, 2.0);
  Tensor mask;
  const Tensor eval_out = nn::dropout(x, 0.5, false, rng, &mask);
  CHECK(eval_out.v == x.v);

  const Tensor train_out = nn::dropout(x, 0.5, true, rng, &mask);
  int kept = 0;
  for (std::size_t i = 0; i < train_out.size(); ++i) {
    if (mask.v[i] != 0.0) {
      CHECK(train_out.v[i] == doctest::Approx(4.0));  // 2.0 / (1 - 0.5)
      ++kept;
    } else {
      CHECK(train_out.v[i] == 0.0);
    }
  }
  CHECK(kept > 0);
  CHECK(kept < 32);

  Tensor dy = Tensor::full({4, 8}, 1.0);
  const Tensor dx = nn::dropout_backward(dy, mask);
  for (std::size_t i = 0; i < dx.size(); ++i) CHECK(dx.v[i] == mask.v[i]);

  CHECK_THROWS(nn::dropout(x, 1.0, true, rng, nullptr));
  CHECK_THROWS(nn::dropout(x, -0.1, true, rng, nullptr));
}

TEST_CASE("cross entropy closed forms") {
  // uniform logits -> ln C
  Tensor logits = Tensor::full({3, 4}, 0.7);
  std::vector<int> labels = {0, 1, 3};
  std::vector<bool> mask = {true, true, true};
  Tensor d;
  const double L = nn::cross_entropy_from_logits(logits, labels, mask, {}, 1.0, &d);
  CHECK(L == doctest::Approx(std::log(4.0)).epsilon(1e-9));

  // hand softmax: logits [ln1, ln3, ln1, ln1], label 1 -> p = 3/6 -> ln 2
  Tensor l2({1, 4}, {std::log(1.0), std::log(3.0), std::log(1.0), std::log(1.0)});
  const double L2 = nn::cross_entropy_from_logits(l2, {1}, {true}, {}, 1.0, nullptr);
  CHECK(L2 == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  // all-masked is defined as zero loss with zero gradients
  const double L3 = nn::cross_entropy_from_logits(logits, labels, {false, false, false}, {}, 1.0, &d);
  CHECK(L3 == 0.0);
  for (double g : d.v) CHECK(g == 0.0);

  // masked rows contribute nothing
  Tensor l4({2, 4}, {0, 0, 0, 0, 100, -50, 3, 9});
  const double L4 = nn::cross_entropy_from_logits(l4, {2, 0}, {true, false}, {}, 1.0, nullptr);
  CHECK(L4 == doctest::Approx(std::log(4.0)).epsilon(1e-9));

  CHECK_THROWS(nn::cross_entropy_from_logits(logits, labels, mask, {}, 0.0, nullptr));
  CHECK_THROWS(nn::cross_entropy_from_logits(logits, {9, 1, 3}, mask, {}, 1.0, nullptr));
}

TEST_CASE("attention: S=1 degenerates to projections") {
  const int d = 4;
  ParamStore ps;
  Rng rng(6);
  nn::AttentionParams p;
  p.wq = &ps.create("wq", nn::init_uniform({d, d}, 0.5, rng));
  p.wk = &ps.create("wk", nn::init_uniform({d, d}, 0.5, rng));
  p.wv = &ps.create("wv", nn::init_uniform({d, d}, 0.5, rng));
  p.wo = &ps.create("wo", nn::init_uniform({d, d}, 0.5, rng));
  p.bq = &ps.create("bq", Tensor::zeros({d}));
  p.bk = &ps.create("bk", Tensor::zeros({d}));
  p.bv = &ps.create("bv", Tensor::zeros({d}));
  p.bo = &ps.create("bo", Tensor::zeros({d}));

  Tensor x = nn::init_uniform({1, d}, 1.0, rng);
  const Tensor y = nn::multi_head_attention(x, 2, {true}, p, {}, nullptr);
  const Tensor expect = nn::linear(nn::linear(x, p.wv->value, p.bv->value), p.wo->value,
                                   p.bo->value);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(y.v[i] == doctest::Approx(expect.v[i]).epsilon(1e-9));
}

TEST_CASE("attention: zero q/k projections mean-pool the values") {
  const int d = 4, S = 5;
  ParamStore ps;
  Rng rng(7);
  Tensor I({d, d});
  for (int i = 0; i < d; ++i) I.at(i, i) = 1.0;
  nn::AttentionParams p;
  p.wq = &ps.create("wq", Tensor::zeros({d, d}));
  p.wk = &ps.create("wk", Tensor::zeros({d, d}));
  p.wv = &ps.create("wv", I);
  p.wo = &ps.create("wo", I);
  p.bq = &ps.create("bq", Tensor::zeros({d}));
  p.bk = &ps.create("bk", Tensor::zeros({d}));
  p.bv = &ps.create("bv", Tensor::zeros({d}));
  p.bo = &ps.create("bo", Tensor::zeros({d}));

  Tensor x = nn::init_uniform({S, d}, 1.0, rng);
  const Tensor y = nn::multi_head_attention(x, 2, std::vector<bool>(S, true), p, {}, nullptr);
  for (int c = 0; c < d; ++c) {
    double mean = 0.0;
    for (int s = 0; s < S; ++s) mean += x.at(s, c);
    mean /= S;
    for (int s = 0; s < S; ++s) CHECK(y.at(s, c) == doctest::Approx(mean).epsilon(1e-9));
  }

  // fully masked window -> all outputs zero
  const Tensor z = nn::multi_head_attention(x, 2, std::vector<bool>(S, false), p, {}, nullptr);
  for (double v : z.v) CHECK(v == 0.0);
}

TEST_CASE("rope rotation: identity at origin, isometry, hand example") {
  Rng rng(8);
  const int S = 6, heads = 2, hd = 8;
  Tensor x = nn::init_uniform({S, heads, hd}, 1.0, rng);
  Tensor fx = nn::init_uniform({heads, hd / 2}, 10.0, rng);
  Tensor fy = nn::init_uniform({heads, hd / 2}, 10.0, rng);

  const Tensor y0 = nn::rope_mixed_rotate(x, std::vector<NormalizedPosition>(S, {0.0, 0.0}), fx, fy);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y0.v[i] == doctest::Approx(x.v[i]));

  std::vector<NormalizedPosition> pos(S);
  for (int i = 0; i < S; ++i) pos[i] = {rng.uniform(), rng.uniform()};
  const Tensor y = nn::rope_mixed_rotate(x, pos, fx, fy);
  for (int i = 0; i < S; ++i)
    for (int h = 0; h < heads; ++h)
      for (int p = 0; p < hd / 2; ++p) {
        const double n0 = x.at(i, h, 2 * p) * x.at(i, h, 2 * p) +
                          x.at(i, h, 2 * p + 1) * x.at(i, h, 2 * p + 1);
        const double n1 = y.at(i, h, 2 * p) * y.at(i, h, 2 * p) +
                          y.at(i, h, 2 * p + 1) * y.at(i, h, 2 * p + 1);
        CHECK(n1 == doctest::Approx(n0).epsilon(1e-12));
      }

  // head_dim=2, f_x=pi/2, f_y=0, p=(1,0), pair (1,0) -> (0,1)
  Tensor x1({1, 1, 2}, {1.0, 0.0});
  Tensor fx1({1, 1}, {M_PI / 2.0});
  Tensor fy1({1, 1}, {0.0});
  const Tensor r = nn::rope_mixed_rotate(x1, {{1.0, 0.0}}, fx1, fy1);
  CHECK(r.v[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.v[1] == doctest::Approx(1.0));

  Tensor odd({1, 1, 3});
  CHECK_THROWS(nn::rope_mixed_rotate(odd, {{0.0, 0.0}}, fx1, fy1));
}

TEST_CASE("rope translation invariance of dot products") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int hd = 2 * (1 + static_cast<int>(rng.uniform_int(4)));
    Tensor q = nn::init_uniform({1, 1, hd}, 1.0, rng);
    Tensor k = nn::init_uniform({1, 1, hd}, 1.0, rng);
    Tensor fx = nn::init_uniform({1, hd / 2}, 40.0, rng);
    Tensor fy = nn::init_uniform({1, hd / 2}, 40.0, rng);
    const NormalizedPosition pq{rng.uniform(), rng.uniform()};
    const NormalizedPosition pk{rng.uniform(), rng.uniform()};
    const NormalizedPosition delta{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};

    auto dot_at = [&](NormalizedPosition a, NormalizedPosition b) {
      const Tensor rq = nn::rope_mixed_rotate(q, {a}, fx, fy);
      const Tensor rk = nn::rope_mixed_rotate(k, {b}, fx, fy);
      double dot = 0.0;
      for (int c = 0; c < hd; ++c) dot += rq.v[c] * rk.v[c];
      return dot;
    };
    const double base = dot_at(pq, pk);
    const double moved = dot_at({pq.x + delta.x, pq.y + delta.y}, {pk.x + delta.x, pk.y + delta.y});
    CHECK(std::abs(base - moved) < 1e-6);
  }
}

TEST_CASE("rope axial init: half x-only, half y-only, geometric band") {
  const auto f = nn::rope_axial_init(2, 8);
  const double lo = 2.0 * M_PI, hi = 2.0 * M_PI * 20.0;
  for (int h = 0; h < 2; ++h)
    for (int p = 0; p < 4; ++p) {
      const double vx = f.fx.at(h, p), vy = f.fy.at(h, p);
      CHECK((vx == 0.0) != (vy == 0.0));  // exactly one axis active
      const double v = vx != 0.0 ? vx : vy;
      CHECK(v >= lo - 1e-9);
      CHECK(v <= hi + 1e-9);
    }
}

TEST_CASE("ape sinusoidal basics") {
  const int d = 16;
  const Tensor e = nn::ape_sinusoidal({{0.0, 0.0}, {0.4, 0.7}, {0.4, 0.7}}, d);
  for (int j = 0; j < d / 4; ++j) {
    CHECK(e.at(0, 2 * j) == 0.0);                    // sin(0)
    CHECK(e.at(0, 2 * j + 1) == 1.0);                // cos(0)
    CHECK(e.at(0, d / 2 + 2 * j) == 0.0);
    CHECK(e.at(0, d / 2 + 2 * j + 1) == 1.0);
  }
  for (int c = 0; c < d; ++c) {
    CHECK(e.at(1, c) == e.at(2, c));  // equal positions, equal embeddings
    CHECK(e.at(1, c) >= -1.0);
    CHECK(e.at(1, c) <= 1.0);
  }
  CHECK_THROWS(nn::ape_sinusoidal({{0.0, 0.0}}, 6));
}

// ---------------------------------------------------------------------------
// finite-difference gradient checks
// ---------------------------------------------------------------------------

TEST_CASE("finite_difference_check: quadratic is exact, constant is zero") {
  ParamStore ps;
  Rng rng(10);
  auto& p = ps.create("p", nn::init_uniform({3, 5}, 2.0, rng));
  const auto quad = [&] {
    ps.zero_grads();
    double L = 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      L += 0.5 * p.value.v[i] * p.value.v[i];
      p.grad.v[i] = p.value.v[i];
    }
    return L;
  };
  Rng check_rng(11);
  const auto res = nn::finite_difference_check(ps, quad, 1e-5, check_rng, 8);
  CHECK(res.max_rel_error < 1e-6);
  CHECK(res.coords_checked == 8);

  const auto constant = [&] {
    ps.zero_grads();
    return 42.0;
  };
  const auto res2 = nn::finite_difference_check(ps, constant, 1e-5, check_rng, 4);
  CHECK(res2.max_rel_error == 0.0);
}

TEST_CASE("gradients: linear") {
  ParamStore ps;
  Rng rng(12);
  auto& x = ps.create("x", nn::init_uniform({3, 4}, 1.0, rng));
  auto& W = ps.create("W", nn::init_uniform({4, 5}, 1.0, rng));
  auto& b = ps.create("b", nn::init_uniform({5}, 1.0, rng));
  const Tensor c = nn::init_uniform({3, 5}, 1.0, rng);
  const auto loss = [&] {
    ps.zero_grads();
    const Tensor y = nn::linear(x.value, W.value, b.value);
    Tensor dy;
    const double L = proj_loss(y, c, &dy);
    Tensor dx = Tensor::zeros(x.value.shape);
    nn::linear_backward(x.value, W.value, dy, &dx, W.grad, b.grad);
    x.grad += dx;
    return L;
  };
  Rng check_rng(13);
  CHECK(nn::finite_difference_check(ps, loss, 1e-5, check_rng, 6).max_rel_error < 1e-6);
}

TEST_CASE("gradients: relu and gelu") {
  ParamStore ps;
  Rng rng(14);
  auto& x = ps.create("x", away_from_zero(nn::init_uniform({4, 6}, 1.0, rng), 0.05));
  const Tensor c = nn::init_uniform({4, 6}, 1.0, rng);
  const auto relu_loss = [&] {
    ps.zero_grads();
    Tensor dy;
    const double L = proj_loss(nn::relu(x.value), c, &dy);
    x.grad += nn::relu_backward(x.value, dy);
    return L;
  };
  Rng r1(15);
  CHECK(nn::finite_difference_check(ps, relu_loss, 1e-5, r1, 8).max_rel_error < 1e-6);

  const auto gelu_loss = [&] {
    ps.zero_grads();
    Tensor dy;
    const double L = proj_loss(nn::gelu(x.value), c, &dy);
    x.grad += nn::gelu_backward(x.value, dy);
    return L;
  };
  Rng r2(16);
  CHECK(nn::finite_difference_check(ps, gelu_loss, 1e-5, r2, 8).max_rel_error < 1e-3);
}

TEST_CASE("gradients: layer_norm") {
  ParamStore ps;
  Rng rng(17);
  auto& x = ps.create("x", nn::init_uniform({5, 8}, 1.5, rng));
  auto& gamma = ps.create("gamma", nn::init_uniform({8}, 1.0, rng));
  auto& beta = ps.create("beta", nn::init_uniform({8}, 1.0, rng));
  const Tensor c = nn::init_uniform({5, 8}, 1.0, rng);
  const auto loss = [&] {
    ps.zero_grads();
    nn::LayerNormCache cache;
    const Tensor y = nn::layer_norm(x.value, gamma.value, beta.value, &cache);
    Tensor dy;
    const double L = proj_loss(y, c, &dy);
    x.grad += nn::layer_norm_backward(cache, gamma.value, dy, gamma.grad, beta.grad);
    return L;
  };
  Rng check_rng(18);
  CHECK(nn::finite_difference_check(ps, loss, 1e-5, check_rng, 8).max_rel_error < 1e-3);
}

TEST_CASE("gradients: conv2d") {
  ParamStore ps;
  Rng rng(19);
  auto& x = ps.create("x", nn::init_uniform({2, 2, 6, 5}, 1.0, rng));
  auto& k = ps.create("k", nn::init_uniform({3, 2, 3, 3}, 0.5, rng));
  auto& b = ps.create("b", nn::init_uniform({3}, 0.5, rng));
  const Tensor y0 = nn::conv2d(x.value, k.value, b.value, 2, 1);
  const Tensor c = nn::init_uniform(y0.shape, 1.0, rng);
  const auto loss = [&] {
    ps.zero_grads();
    const Tensor y = nn::conv2d(x.value, k.value, b.value, 2, 1);
    Tensor dy;
    const double L = proj_loss(y, c, &dy);
    Tensor dx = Tensor::zeros(x.value.shape);
    nn::conv2d_backward(x.value, k.value, dy, 2, 1, &dx, k.grad, b.grad);
    x.grad += dx;
    return L;
  };
  Rng check_rng(20);
  CHECK(nn::finite_difference_check(ps, loss, 1e-5, check_rng, 6).max_rel_error < 1e-6);
}

TEST_CASE("gradients: rope rotation including frequencies") {
  ParamStore ps;
  Rng rng(21);
  const int S = 4, heads = 2, hd = 6;
  auto& x = ps.create("x", nn::init_uniform({S, heads, hd}, 1.0, rng));
  auto& fx = ps.create("fx", nn::init_uniform({heads, hd / 2}, 6.0, rng));
  auto& fy = ps.create("fy", nn::init_uniform({heads, hd / 2}, 6.0, rng));
  std::vector<NormalizedPosition> pos(S);
  for (auto& p : pos) p = {rng.uniform(), rng.uniform()};
  const Tensor c = nn::init_uniform({S, heads, hd}, 1.0, rng);
  const auto loss = [&] {
    ps.zero_grads();
    const Tensor y = nn::rope_mixed_rotate(x.value, pos, fx.value, fy.value);
    Tensor dy;
    const double L = proj_loss(y, c, &dy);
    x.grad += nn::rope_mixed_rotate_backward(x.value, pos, fx.value, fy.value, dy, fx.grad, fy.grad);
    return L;
  };
  Rng check_rng(22);
  CHECK(nn::finite_difference_check(ps, loss, 1e-5, check_rng, 8).max_rel_error < 1e-3);
}

TEST_CASE("gradients: multi-head attention with mask and rope") {
  const int d = 8, S = 5, heads = 2;
  for (const bool rope : {false, true}) {
    CAPTURE(rope);
    ParamStore ps;
    Rng rng(23);
    auto& x = ps.create("x", nn::init_uniform({S, d}, 1.0, rng));
    nn::AttentionParams p;
    p.wq = &ps.create("wq", nn::init_uniform({d, d}, 0.5, rng));
    p.wk = &ps.create("wk", nn::init_uniform({d, d}, 0.5, rng));
    p.wv = &ps.create("wv", nn::init_uniform({d, d}, 0.5, rng));
    p.wo = &ps.create("wo", nn::init_uniform({d, d}, 0.5, rng));
    p.bq = &ps.create("bq", nn::init_uniform({d}, 0.2, rng));
    p.bk = &ps.create("bk", nn::init_uniform({d}, 0.2, rng));
    p.bv = &ps.create("bv", nn::init_uniform({d}, 0.2, rng));
    p.bo = &ps.create("bo", nn::init_uniform({d}, 0.2, rng));
    if (rope) {
      p.rope_fx = &ps.create("fx", nn::init_uniform({heads, d / heads / 2}, 6.0, rng));
      p.rope_fy = &ps.create("fy", nn::init_uniform({heads, d / heads / 2}, 6.0, rng));
    }
    std::vector<bool> mask = {true, true, false, true, true};
    std::vector<NormalizedPosition> pos(S);
    for (auto& q : pos) q = {rng.uniform(), rng.uniform()};
    const Tensor c = nn::init_uniform({S, d}, 1.0, rng);

    const auto loss = [&] {
      ps.zero_grads();
      nn::AttentionCache cache;
      const Tensor y = nn::multi_head_attention(x.value, heads, mask, p, pos, &cache);
      Tensor dy;
      const double L = proj_loss(y, c, &dy);
      x.grad += nn::multi_head_attention_backward(cache, heads, p, dy);
      return L;
    };
    Rng check_rng(24);
    CHECK(nn::finite_difference_check(ps, loss, 1e-5, check_rng, 6).max_rel_error < 1e-3);
  }
}

TEST_CASE("gradients: cross entropy with temperature and class weights") {
  ParamStore ps;
  Rng rng(25);
  auto& logits = ps.create("logits", nn::init_uniform({6, 4}, 2.0, rng));
  const std::vector<int> labels = {0, 3, 1, 2, 1, 0};
  const std::vector<bool> mask = {true, true, false, true, true, true};
  const std::vector<double> weights = {1.0, 2.0, 0.5, 1.5};
  const auto loss = [&] {
    ps.zero_grads();
    Tensor d;
    const double L = nn::cross_entropy_from_logits(logits.value, labels, mask, weights, 0.25, &d);
    logits.grad += d;
    return L;
  };
  Rng check_rng(26);
  CHECK(nn::finite_difference_check(ps, loss, 1e-5, check_rng, 12).max_rel_error < 1e-3);
}

TEST_CASE("gradients: max_pool2d") {
  ParamStore ps;
  Rng rng(27);
  auto& x = ps.create("x", nn::init_uniform({1, 2, 6, 6}, 1.0, rng));
  std::vector<std::size_t> argmax;
  const Tensor y0 = nn::max_pool2d(x.value, 2, 2, &argmax);
  const Tensor c = nn::init_uniform(y0.shape, 1.0, rng);
  const auto loss = [&] {
    ps.zero_grads();
    std::vector<std::size_t> am;
    const Tensor y = nn::max_pool2d(x.value, 2, 2, &am);
    Tensor dy;
    const double L = proj_loss(y, c, &dy);
    x.grad += nn::max_pool2d_backward(x.value, dy, am);
    return L;
  };
  Rng check_rng(28);
  CHECK(nn::finite_difference_check(ps, loss, 1e-6, check_rng, 8).max_rel_error < 1e-3);
}
