// Acceptance harness: run with a single argument 1..10 to execute one
// criterion. Prints exactly one PASS/FAIL line and exits 0/1. Criteria 6-8
// share trained models through ./acceptance_cache so reruns are cheap.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "textar/checkpoint.hpp"
#include "textar/dataset.hpp"
#include "textar/evaluation.hpp"
#include "textar/geometry.hpp"
#include "textar/nn.hpp"
#include "textar/rng.hpp"
#include "textar/synthdoc.hpp"
#include "textar/training.hpp"

using namespace textar;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

double median3(double a, double b, double c) {
  std::vector<double> v = {a, b, c};
  std::sort(v.begin(), v.end());
  return v[1];
}

// ---------------------------------------------------------------------------
// 1. geometry oracle equivalence
// ---------------------------------------------------------------------------

bool criterion1(std::string& detail) {
  Timer timer;
  Rng rng(1001);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(50));
    geom::DocumentLayout layout;
    layout.width = 500;
    layout.height = 400;
    for (int i = 0; i < n; ++i) {
      const double cx = rng.uniform(4.0, 496.0);
      const double cy = rng.uniform(4.0, 396.0);
      layout.boxes.push_back({i, cx - 2, cy - 2, cx + 2, cy + 2, {}});
    }
    const int S = 1 + static_cast<int>(rng.uniform_int(12));
    const double k = rng.uniform(0.5, 2.0);
    const double m = rng.uniform(2.1, 4.0);
    const int anchor = static_cast<int>(rng.uniform_int(n));

    // oracle: full sort of (distance, id)
    const NormalizedPosition a = geom::normalize_center(layout.boxes[anchor], layout);
    std::vector<std::pair<double, int>> all;
    for (const auto& b : layout.boxes)
      all.emplace_back(geom::weighted_chebyshev(geom::normalize_center(b, layout), a, k, m), b.id);
    std::sort(all.begin(), all.end());
    std::multiset<int> expect;
    for (int i = 0; i < std::min(S, n); ++i) expect.insert(all[i].second);

    const auto w = geom::nearest_window(layout, anchor, S, k, m);
    std::multiset<int> got;
    for (std::size_t s = 0; s < w.members.size(); ++s)
      if (w.padding_mask[s]) got.insert(w.members[s]);
    if (got != expect) {
      detail = "nearest_window mismatch at trial " + std::to_string(trial);
      return false;
    }

    const auto windows = geom::sequential_context_windows(layout, S, k, m, rng.next_u64());
    std::set<int> covered;
    for (const auto& win : windows)
      for (std::size_t s = 0; s < win.members.size(); ++s)
        if (win.padding_mask[s]) covered.insert(win.members[s]);
    const std::size_t lo = static_cast<std::size_t>((n + S - 1) / S);
    if (covered.size() != static_cast<std::size_t>(n) || windows.size() < lo ||
        windows.size() > static_cast<std::size_t>(n)) {
      detail = "coverage/cardinality violation at trial " + std::to_string(trial);
      return false;
    }
  }
  const double dt = timer.seconds();
  char buf[128];
  std::snprintf(buf, sizeof buf, "200 layouts, oracle-exact, %.2fs", dt);
  detail = buf;
  return dt < 5.0;
}

// ---------------------------------------------------------------------------
// 2. rope properties
// ---------------------------------------------------------------------------

bool criterion2(std::string& detail) {
  Rng rng(2002);
  double worst_shift = 0.0, worst_norm = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int heads = 1 + static_cast<int>(rng.uniform_int(4));
    const int hd = 2 * (1 + static_cast<int>(rng.uniform_int(8)));
    Tensor q = nn::init_uniform({1, heads, hd}, 1.0, rng);
    Tensor k = nn::init_uniform({1, heads, hd}, 1.0, rng);
    Tensor fx = nn::init_uniform({heads, hd / 2}, 40.0, rng);
    Tensor fy = nn::init_uniform({heads, hd / 2}, 40.0, rng);
    const NormalizedPosition pq{rng.uniform(), rng.uniform()};
    const NormalizedPosition pk{rng.uniform(), rng.uniform()};
    const NormalizedPosition d{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};

    auto logits = [&](NormalizedPosition a, NormalizedPosition b) {
      const Tensor rq = nn::rope_mixed_rotate(q, {a}, fx, fy);
      const Tensor rk = nn::rope_mixed_rotate(k, {b}, fx, fy);
      std::vector<double> dots(heads, 0.0);
      for (int h = 0; h < heads; ++h)
        for (int c = 0; c < hd; ++c) dots[h] += rq.at(0, h, c) * rk.at(0, h, c);
      return dots;
    };
    const auto base = logits(pq, pk);
    const auto moved = logits({pq.x + d.x, pq.y + d.y}, {pk.x + d.x, pk.y + d.y});
    for (int h = 0; h < heads; ++h)
      worst_shift = std::max(worst_shift, std::abs(base[h] - moved[h]));

    // per-pair norm preservation
    const Tensor rq = nn::rope_mixed_rotate(q, {pq}, fx, fy);
    for (int h = 0; h < heads; ++h)
      for (int p = 0; p < hd / 2; ++p) {
        const double n0 = q.at(0, h, 2 * p) * q.at(0, h, 2 * p) +
                          q.at(0, h, 2 * p + 1) * q.at(0, h, 2 * p + 1);
        const double n1 = rq.at(0, h, 2 * p) * rq.at(0, h, 2 * p) +
                          rq.at(0, h, 2 * p + 1) * rq.at(0, h, 2 * p + 1);
        if (n0 > 0) worst_norm = std::max(worst_norm, std::abs(n1 - n0) / n0);
      }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "max shift dev %.2e (<1e-6), max norm dev %.2e (<1e-12)",
                worst_shift, worst_norm);
  detail = buf;
  return worst_shift < 1e-6 && worst_norm < 1e-12;
}

// ---------------------------------------------------------------------------
// 3. gradient suite
// ---------------------------------------------------------------------------

double check_primitive(const char* name, ParamStore& ps, const std::function<double()>& loss,
                       double eps, int coords, double& worst, std::string& worst_name) {
  Rng rng(3003);
  const auto res = nn::finite_difference_check(ps, loss, eps, rng, coords);
  if (res.max_rel_error > worst) {
    worst = res.max_rel_error;
    worst_name = name;
  }
  return res.max_rel_error;
}

double proj(const Tensor& y, const Tensor& c, Tensor* dy) {
  if (dy) *dy = c;
  double L = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) L += y.v[i] * c.v[i];
  return L;
}

bool criterion3(std::string& detail) {
  Timer timer;
  double worst = 0.0;
  std::string worst_name = "none";

  {  // linear
    ParamStore ps;
    Rng rng(31);
    auto& x = ps.create("x", nn::init_uniform({3, 4}, 1.0, rng));
    auto& W = ps.create("W", nn::init_uniform({4, 5}, 1.0, rng));
    auto& b = ps.create("b", nn::init_uniform({5}, 1.0, rng));
    const Tensor c = nn::init_uniform({3, 5}, 1.0, rng);
    check_primitive("linear", ps, [&] {
      ps.zero_grads();
      Tensor dy;
      const double L = proj(nn::linear(x.value, W.value, b.value), c, &dy);
      Tensor dx = Tensor::zeros(x.value.shape);
      nn::linear_backward(x.value, W.value, dy, &dx, W.grad, b.grad);
      x.grad += dx;
      return L;
    }, 1e-5, 8, worst, worst_name);
  }
  {  // relu + gelu
    ParamStore ps;
    Rng rng(32);
    auto& x = ps.create("x", nn::init_uniform({4, 6}, 1.0, rng));
    for (double& v : x.value.v) v += (v >= 0 ? 0.05 : -0.05);
    const Tensor c = nn::init_uniform({4, 6}, 1.0, rng);
    check_primitive("relu", ps, [&] {
      ps.zero_grads();
      Tensor dy;
      const double L = proj(nn::relu(x.value), c, &dy);
      x.grad += nn::relu_backward(x.value, dy);
      return L;
    }, 1e-5, 8, worst, worst_name);
    check_primitive("gelu", ps, [&] {
      ps.zero_grads();
      Tensor dy;
      const double L = proj(nn::gelu(x.value), c, &dy);
      x.grad += nn::gelu_backward(x.value, dy);
      return L;
    }, 1e-5, 8, worst, worst_name);
  }
  {  // layer_norm
    ParamStore ps;
    Rng rng(33);
    auto& x = ps.create("x", nn::init_uniform({5, 8}, 1.5, rng));
    auto& g = ps.create("g", nn::init_uniform({8}, 1.0, rng));
    auto& be = ps.create("be", nn::init_uniform({8}, 1.0, rng));
    const Tensor c = nn::init_uniform({5, 8}, 1.0, rng);
    check_primitive("layer_norm", ps, [&] {
      ps.zero_grads();
      nn::LayerNormCache cache;
      Tensor dy;
      const double L = proj(nn::layer_norm(x.value, g.value, be.value, &cache), c, &dy);
      x.grad += nn::layer_norm_backward(cache, g.value, dy, g.grad, be.grad);
      return L;
    }, 1e-5, 8, worst, worst_name);
  }
  {  // conv2d + max_pool
    ParamStore ps;
    Rng rng(34);
    auto& x = ps.create("x", nn::init_uniform({2, 2, 6, 5}, 1.0, rng));
    auto& k = ps.create("k", nn::init_uniform({3, 2, 3, 3}, 0.5, rng));
    auto& b = ps.create("b", nn::init_uniform({3}, 0.5, rng));
    const Tensor c = nn::init_uniform(nn::conv2d(x.value, k.value, b.value, 2, 1).shape, 1.0, rng);
    check_primitive("conv2d", ps, [&] {
      ps.zero_grads();
      Tensor dy;
      const double L = proj(nn::conv2d(x.value, k.value, b.value, 2, 1), c, &dy);
      Tensor dx = Tensor::zeros(x.value.shape);
      nn::conv2d_backward(x.value, k.value, dy, 2, 1, &dx, k.grad, b.grad);
      x.grad += dx;
      return L;
    }, 1e-5, 8, worst, worst_name);

    ParamStore ps2;
    auto& px = ps2.create("x", nn::init_uniform({1, 2, 6, 6}, 1.0, rng));
    std::vector<std::size_t> am0;
    const Tensor c2 = nn::init_uniform(nn::max_pool2d(px.value, 2, 2, &am0).shape, 1.0, rng);
    check_primitive("max_pool2d", ps2, [&] {
      ps2.zero_grads();
      std::vector<std::size_t> am;
      Tensor dy;
      const double L = proj(nn::max_pool2d(px.value, 2, 2, &am), c2, &dy);
      px.grad += nn::max_pool2d_backward(px.value, dy, am);
      return L;
    }, 1e-6, 8, worst, worst_name);
  }
  {  // rope
    ParamStore ps;
    Rng rng(35);
    auto& x = ps.create("x", nn::init_uniform({4, 2, 6}, 1.0, rng));
    auto& fx = ps.create("fx", nn::init_uniform({2, 3}, 6.0, rng));
    auto& fy = ps.create("fy", nn::init_uniform({2, 3}, 6.0, rng));
    std::vector<NormalizedPosition> pos(4);
    for (auto& p : pos) p = {rng.uniform(), rng.uniform()};
    const Tensor c = nn::init_uniform({4, 2, 6}, 1.0, rng);
    check_primitive("rope", ps, [&] {
      ps.zero_grads();
      Tensor dy;
      const double L = proj(nn::rope_mixed_rotate(x.value, pos, fx.value, fy.value), c, &dy);
      x.grad +=
          nn::rope_mixed_rotate_backward(x.value, pos, fx.value, fy.value, dy, fx.grad, fy.grad);
      return L;
    }, 1e-5, 8, worst, worst_name);
  }
  {  // attention with rope and a masked slot
    const int d = 8, S = 5, heads = 2;
    ParamStore ps;
    Rng rng(36);
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
    p.rope_fx = &ps.create("fx", nn::init_uniform({heads, d / heads / 2}, 6.0, rng));
    p.rope_fy = &ps.create("fy", nn::init_uniform({heads, d / heads / 2}, 6.0, rng));
    const std::vector<bool> mask = {true, true, false, true, true};
    std::vector<NormalizedPosition> pos(S);
    for (auto& q : pos) q = {rng.uniform(), rng.uniform()};
    const Tensor c = nn::init_uniform({S, d}, 1.0, rng);
    check_primitive("attention", ps, [&] {
      ps.zero_grads();
      nn::AttentionCache cache;
      Tensor dy;
      const double L = proj(nn::multi_head_attention(x.value, heads, mask, p, pos, &cache), c, &dy);
      x.grad += nn::multi_head_attention_backward(cache, heads, p, dy);
      return L;
    }, 1e-5, 8, worst, worst_name);
  }
  {  // cross entropy
    ParamStore ps;
    Rng rng(37);
    auto& logits = ps.create("logits", nn::init_uniform({6, 4}, 2.0, rng));
    const std::vector<int> labels = {0, 3, 1, 2, 1, 0};
    const std::vector<bool> mask = {true, true, false, true, true, true};
    check_primitive("cross_entropy", ps, [&] {
      ps.zero_grads();
      Tensor d;
      const double L =
          nn::cross_entropy_from_logits(logits.value, labels, mask, {}, 0.25, &d);
      logits.grad += d;
      return L;
    }, 1e-5, 12, worst, worst_name);
  }
  {  // quadratic sanity: central differences are exact on quadratics
    ParamStore ps;
    Rng rng(38);
    auto& p = ps.create("p", nn::init_uniform({3, 5}, 2.0, rng));
    Rng crng(39);
    const auto res = nn::finite_difference_check(ps, [&] {
      ps.zero_grads();
      double L = 0.0;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        L += 0.5 * p.value.v[i] * p.value.v[i];
        p.grad.v[i] = p.value.v[i];
      }
      return L;
    }, 1e-5, crng, 8);
    if (res.max_rel_error >= 1e-6) {
      detail = "quadratic sanity check exceeded 1e-6";
      return false;
    }
  }
  {  // full toy model forward + multitask loss
    const model::ModelConfig mc = model::ModelConfig::toy();
    model::Model m(mc, 303);
    Rng rng(304);
    model::WindowBatch batch;
    batch.crops = nn::init_uniform({2, mc.S, 1, mc.crop_h, mc.crop_w}, 0.5, rng);
    for (double& v : batch.crops.v) v = std::abs(v);
    batch.positions.assign(2, std::vector<NormalizedPosition>(mc.S));
    batch.mask.assign(2, std::vector<bool>(mc.S, true));
    batch.mask[1][mc.S - 1] = false;
    batch.labels_t1.assign(2, std::vector<int>(mc.S, 0));
    batch.labels_t2.assign(2, std::vector<int>(mc.S, 0));
    for (int b = 0; b < 2; ++b)
      for (int s = 0; s < mc.S; ++s) {
        batch.positions[b][s] = {rng.uniform(), rng.uniform()};
        batch.labels_t1[b][s] = static_cast<int>(rng.uniform_int(4));
        batch.labels_t2[b][s] = static_cast<int>(rng.uniform_int(4));
      }
    train::TrainConfig tc;
    const auto loss = [&] {
      m.params().zero_grads();
      model::ForwardCache cache;
      const auto out = m.forward(batch, false, nullptr, &cache);
      model::ModelOutput grads;
      const double L = train::multitask_loss(out, batch, mc, tc, &grads);
      m.backward(cache, grads);
      return L;
    };
    // 1e-5 keeps the +-eps probes from stepping across relu kinks, which
    // would poison the difference quotient without any gradient being wrong
    Rng crng(305);
    const auto res = nn::finite_difference_check(m.params(), loss, 1e-5, crng, 4);
    if (res.max_rel_error > worst) {
      worst = res.max_rel_error;
      worst_name = "full model (" + res.worst_param + ")";
    }
  }

  const double dt = timer.seconds();
  char buf[192];
  std::snprintf(buf, sizeof buf, "max rel err %.2e (%s), %.1fs", worst, worst_name.c_str(), dt);
  detail = buf;
  return worst < 1e-3 && dt < 120.0;
}

// ---------------------------------------------------------------------------
// 4. loss closed forms
// ---------------------------------------------------------------------------

bool criterion4(std::string& detail) {
  const model::ModelConfig mc = model::ModelConfig::toy();
  Rng rng(4004);
  model::WindowBatch batch;
  batch.crops = Tensor::zeros({2, mc.S, 1, mc.crop_h, mc.crop_w});
  batch.positions.assign(2, std::vector<NormalizedPosition>(mc.S));
  batch.mask.assign(2, std::vector<bool>(mc.S, true));
  batch.labels_t1.assign(2, std::vector<int>(mc.S, 0));
  batch.labels_t2.assign(2, std::vector<int>(mc.S, 0));
  for (int b = 0; b < 2; ++b)
    for (int s = 0; s < mc.S; ++s) {
      batch.labels_t1[b][s] = static_cast<int>(rng.uniform_int(4));
      batch.labels_t2[b][s] = static_cast<int>(rng.uniform_int(4));
    }

  train::TrainConfig tc;  // weights 0.25/0.75 sum to 1
  model::ModelOutput out;
  out.logits_t1 = Tensor::full({2, mc.S, 4}, 0.7);
  out.logits_t2 = Tensor::full({2, mc.S, 4}, -1.2);
  const double L = train::multitask_loss(out, batch, mc, tc, nullptr);
  const double dev = std::abs(L - std::log(4.0));
  if (dev >= 1e-6) {
    detail = "uniform-logit loss deviates from ln4 by " + std::to_string(dev);
    return false;
  }

  train::TrainConfig tc10;
  tc10.weight_t1 = 1.0;
  tc10.weight_t2 = 0.0;
  model::ModelOutput rnd;
  rnd.logits_t1 = nn::init_uniform({2, mc.S, 4}, 1.0, rng);
  rnd.logits_t2 = nn::init_uniform({2, mc.S, 4}, 1.0, rng);
  model::ModelOutput grads;
  train::multitask_loss(rnd, batch, mc, tc10, &grads);
  for (double g : grads.logits_t2.v)
    if (g != 0.0) {
      detail = "group weight (1,0) left a nonzero t2 gradient";
      return false;
    }
  bool t1_nonzero = false;
  for (double g : grads.logits_t1.v) t1_nonzero |= g != 0.0;
  if (!t1_nonzero) {
    detail = "t1 gradients vanished unexpectedly";
    return false;
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "ln4 dev %.1e, t2 grads exactly zero under (1,0)", dev);
  detail = buf;
  return true;
}

// ---------------------------------------------------------------------------
// 5. overfit sanity
// ---------------------------------------------------------------------------

data::Dataset synth_dataset(int docs, const synth::SynthConfig& base, std::uint64_t seed, int S,
                            std::uint64_t window_seed, double m = 2.0) {
  std::vector<synth::GeneratedDocument> gen;
  gen.reserve(docs);
  for (int i = 0; i < docs; ++i)
    gen.push_back(synth::generate_document(base, Rng::derive_seed(seed, i)));
  data::Dataset ds = data::from_generated(std::move(gen), base.crop_h, base.crop_w);
  data::build_windows(ds, S, 1.0, m, window_seed);
  return ds;
}

bool criterion5(std::string& detail) {
  Timer timer;
  model::ModelConfig mc = model::ModelConfig::desk_default();
  mc.dropout = 0.0;  // overfit sanity measures capacity, not regularization

  synth::SynthConfig sc;
  sc.words_min = 30;
  sc.words_max = 40;
  sc.page_w = 480;
  sc.page_h = 360;
  sc.crop_h = mc.crop_h;
  sc.crop_w = mc.crop_w;
  data::Dataset ds = synth_dataset(3, sc, 505, mc.S, 505);
  // exactly 10 windows
  std::size_t kept = 0;
  for (auto& doc : ds.docs) {
    std::size_t room = 10 - std::min<std::size_t>(10, kept);
    if (doc.windows.size() > room) doc.windows.resize(room);
    kept += doc.windows.size();
  }
  if (ds.total_windows() != 10) {
    detail = "failed to assemble 10 windows";
    return false;
  }

  train::TrainConfig tc;
  tc.lr = 1e-3;
  tc.epochs = 0;
  tc.max_steps = 160;  // crosses 0.05 near step 100; 300 is the contract cap
  tc.batch_windows = 10;  // full-batch: one step per epoch
  tc.seed = 5;

  // determinism: two short runs agree bit-exactly
  train::TrainConfig short_tc = tc;
  short_tc.max_steps = 10;
  train::TrainResult ra, rb;
  train::train_stage1(mc, ds, short_tc, &ra);
  train::train_stage1(mc, ds, short_tc, &rb);
  if (ra.final_loss != rb.final_loss) {
    detail = "short reruns disagreed; training is not deterministic";
    return false;
  }

  train::TrainResult res;
  train::train_stage1(mc, ds, tc, &res);
  long first_cross = -1;
  double best = 1e9;
  for (const auto& row : res.rows) {
    best = std::min(best, row.loss);
    if (first_cross < 0 && row.loss < 0.05) first_cross = row.epoch + 1;  // 1 step per epoch
  }
  const double dt = timer.seconds();
  char buf[160];
  std::snprintf(buf, sizeof buf, "loss <0.05 at step %ld (limit 300), best %.4f, %.0fs",
                first_cross, best, dt);
  detail = buf;
  return first_cross > 0 && first_cross <= 300 && dt < 300.0;
}

// ---------------------------------------------------------------------------
// 6-8: trained-model comparisons with a shared cache
// ---------------------------------------------------------------------------

model::ModelConfig small_context_config() {
  model::ModelConfig mc;
  mc.S = 8;
  mc.crop_h = 32;
  mc.crop_w = 24;
  mc.d_model = 64;
  mc.heads = 4;
  mc.tenc_layers = 2;
  mc.rope_layers = 1;
  mc.fen_channels = {8, 16, 32};
  mc.dropout = 0.1;
  return mc;
}

synth::SynthConfig ambiguous_synth(const model::ModelConfig& mc) {
  synth::SynthConfig sc;
  sc.words_min = 30;
  sc.words_max = 45;
  sc.page_w = 480;
  sc.page_h = 360;
  sc.crop_h = mc.crop_h;
  sc.crop_w = mc.crop_w;
  sc.ambiguity_rate = 0.5;
  // keep scattered underlines modest so a trapped row (every word lined) is a
  // clear neighborhood signature rather than a plausible random cluster
  std::array<double, 16> mix{};
  mix.fill(0.005);
  mix[AttributeLabel{0, 0}.combined()] = 0.40;
  mix[AttributeLabel{1, 0}.combined()] = 0.15;
  mix[AttributeLabel{2, 0}.combined()] = 0.10;
  mix[AttributeLabel{0, 1}.combined()] = 0.08;
  mix[AttributeLabel{1, 1}.combined()] = 0.04;
  mix[AttributeLabel{0, 2}.combined()] = 0.10;
  mix[AttributeLabel{0, 3}.combined()] = 0.03;
  double sum = 0.0;
  for (double p : mix) sum += p;
  for (double& p : mix) p /= sum;
  sc.class_mix = mix;
  return sc;
}

json run_cached(const std::string& name, const std::function<json()>& compute) {
  const fs::path dir = "acceptance_cache";
  const fs::path file = dir / (name + ".json");
  if (fs::exists(file)) {
    std::ifstream f(file);
    json j;
    f >> j;
    return j;
  }
  const json j = compute();
  fs::create_directories(dir);
  std::ofstream(file) << j.dump(2);
  return j;
}

double underline_f1(const eval::EvalReport& r) { return r.per_class.at("t2_underline").f1; }

// trains baseline / stage1 / stage2 per seed on the trap dataset and
// evaluates all three on a held-out trap split
json context_experiment() {
  const model::ModelConfig mc = small_context_config();
  const synth::SynthConfig sc = ambiguous_synth(mc);
  // m=5 makes windows row-dominated on this grid (4 same-row neighbors
  // instead of 2), which is the context the table trap is resolved by
  data::Dataset train_ds = synth_dataset(36, sc, 6001, mc.S, 6001, 5.0);
  data::Dataset test_ds = synth_dataset(24, sc, 7001, mc.S, 7001, 5.0);

  json out = json::array();
  for (std::uint64_t seed : {1, 2, 3}) {
    train::TrainConfig tc;
    tc.lr = 1e-3;
    tc.epochs = 32;
    tc.batch_windows = 8;
    tc.seed = seed;

    const auto stage1 = train::train_stage1(mc, train_ds, tc);
    const auto rep1 = eval::evaluate_run(*stage1, test_ds, 16);

    model::Model baseline(model::baseline_config(mc), Rng::derive_seed(seed, 100));
    train::train_loop(baseline, train_ds, tc);
    const auto repb = eval::evaluate_run(baseline, test_ds, 16);

    std::map<std::string, Tensor> tensors;
    for (const auto& [n, e] : stage1->params()) tensors.emplace(n, e.value);
    train::TrainConfig tc2 = tc;
    tc2.epochs = 48;  // the RoPE blocks and heads start fresh
    const auto stage2 = train::train_stage2(tensors, mc, train_ds, tc2);
    const auto rep2 = eval::evaluate_run(*stage2, test_ds, 16);

    out.push_back({{"seed", seed},
                   {"baseline_underline_f1", underline_f1(repb)},
                   {"baseline_macro", repb.macro_f1},
                   {"stage1_underline_f1", underline_f1(rep1)},
                   {"stage1_macro", rep1.macro_f1},
                   {"stage2_underline_f1", underline_f1(rep2)},
                   {"stage2_macro", rep2.macro_f1}});
  }
  return out;
}

bool criterion6(std::string& detail) {
  Timer timer;
  const json runs = run_cached("context_runs", context_experiment);
  std::vector<double> gaps;
  for (const auto& r : runs)
    gaps.push_back(r.at("stage1_underline_f1").get<double>() -
                   r.at("baseline_underline_f1").get<double>());
  const double med = median3(gaps[0], gaps[1], gaps[2]);
  char buf[192];
  std::snprintf(buf, sizeof buf,
                "underline F1 gap context-baseline per seed: %.3f %.3f %.3f, median %.3f (>=0.10), "
                "%.0fs",
                gaps[0], gaps[1], gaps[2], med, timer.seconds());
  detail = buf;
  return med >= 0.10 && timer.seconds() < 1800.0;
}

bool criterion7(std::string& detail) {
  const json runs = run_cached("context_runs", context_experiment);
  std::vector<double> s1, s2;
  for (const auto& r : runs) {
    s1.push_back(r.at("stage1_macro").get<double>());
    s2.push_back(r.at("stage2_macro").get<double>());
  }
  const double m1 = median3(s1[0], s1[1], s1[2]);
  const double m2 = median3(s2[0], s2[1], s2[2]);
  char buf[160];
  std::snprintf(buf, sizeof buf, "macro F1 median stage2 %.3f vs stage1 %.3f (stage2 >= stage1)",
                m2, m1);
  detail = buf;
  return m2 >= m1;
}

json head_experiment() {
  model::ModelConfig mc = small_context_config();
  synth::SynthConfig sc = ambiguous_synth(mc);
  sc.ambiguity_rate = 0.25;
  // deliberately skewed T1xT2 mix: most combinations are rare, a few dominate
  std::array<double, 16> mix{};
  mix.fill(0.01);
  mix[AttributeLabel{0, 0}.combined()] = 0.37;
  mix[AttributeLabel{1, 0}.combined()] = 0.18;
  mix[AttributeLabel{0, 1}.combined()] = 0.18;
  mix[AttributeLabel{2, 2}.combined()] = 0.08;
  mix[AttributeLabel{3, 1}.combined()] = 0.04;
  mix[AttributeLabel{1, 3}.combined()] = 0.04;
  double sum = 0.0;
  for (double p : mix) sum += p;
  for (double& p : mix) p /= sum;
  sc.class_mix = mix;

  data::Dataset train_ds = synth_dataset(24, sc, 8001, mc.S, 8001);
  data::Dataset test_ds = synth_dataset(12, sc, 9001, mc.S, 9001);

  json out = json::array();
  for (std::uint64_t seed : {1, 2, 3}) {
    train::TrainConfig tc;
    tc.lr = 1e-3;
    tc.epochs = 8;
    tc.batch_windows = 8;
    tc.seed = seed;

    const auto dual = train::train_stage1(mc, train_ds, tc);
    const auto repd = eval::evaluate_run(*dual, test_ds, 16);

    model::ModelConfig single = mc;
    single.dual_head = false;
    const auto single_m = train::train_stage1(single, train_ds, tc);
    const auto reps = eval::evaluate_run(*single_m, test_ds, 16);

    out.push_back({{"seed", seed},
                   {"dual_macro", repd.macro_f1},
                   {"single_macro", reps.macro_f1}});
  }
  return out;
}

bool criterion8(std::string& detail) {
  const json runs = run_cached("head_runs", head_experiment);
  std::vector<double> dual, single;
  for (const auto& r : runs) {
    dual.push_back(r.at("dual_macro").get<double>());
    single.push_back(r.at("single_macro").get<double>());
  }
  const double md = median3(dual[0], dual[1], dual[2]);
  const double ms = median3(single[0], single[1], single[2]);
  char buf[160];
  std::snprintf(buf, sizeof buf, "macro F1 median dual %.3f vs single %.3f (dual >= single)", md,
                ms);
  detail = buf;
  return md >= ms;
}

// ---------------------------------------------------------------------------
// 9. cavg determinism and idempotence
// ---------------------------------------------------------------------------

bool criterion9(std::string& detail) {
  Rng rng(9009);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(6));
    std::vector<eval::LogitRecord> recs(n);
    for (int i = 0; i < n; ++i) {
      recs[i].window = i;
      for (int c = 0; c < 4; ++c) {
        recs[i].logits_t1.push_back(rng.uniform(-3, 3));
        recs[i].logits_t2.push_back(rng.uniform(-3, 3));
      }
    }
    const AttributeLabel base = eval::cavg(recs);

    std::vector<eval::LogitRecord> shuffled = recs;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rng.uniform_int(i)]);
    if (!(eval::cavg(shuffled) == base)) {
      detail = "cavg changed under record reordering";
      return false;
    }

    std::vector<eval::LogitRecord> copies;
    const int k = 2 + static_cast<int>(rng.uniform_int(3));
    for (int j = 0; j < k; ++j) copies.insert(copies.end(), recs.begin(), recs.end());
    if (!(eval::cavg(copies) == base)) {
      detail = "cavg changed under k-fold duplication";
      return false;
    }
  }

  // evaluate_run bit-reproducibility on a real (untrained) model
  const model::ModelConfig mc = model::ModelConfig::toy();
  synth::SynthConfig sc;
  sc.words_min = 10;
  sc.words_max = 14;
  sc.page_w = 240;
  sc.page_h = 180;
  sc.crop_h = mc.crop_h;
  sc.crop_w = mc.crop_w;
  const data::Dataset ds = synth_dataset(2, sc, 909, mc.S, 909);
  const model::Model m(mc, 99);
  const auto ra = eval::evaluate_run(m, ds, 4);
  const auto rb = eval::evaluate_run(m, ds, 16);
  if (eval::report_json(ra) != eval::report_json(rb) || ra.predictions != rb.predictions) {
    detail = "evaluate_run differs across reruns/batch sizes";
    return false;
  }
  detail = "order invariance, k-copy idempotence, bit-identical evaluate_run";
  return true;
}

// ---------------------------------------------------------------------------
// 10. checkpoint round-trip
// ---------------------------------------------------------------------------

bool criterion10(std::string& detail) {
  const fs::path dir = fs::temp_directory_path() / "textar_acceptance_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const model::ModelConfig mc = model::ModelConfig::toy();
  model::Model m(mc, 1010);
  const json header = {{"format", 1}, {"model", mc.to_json()}};
  const std::string p1 = (dir / "a.ckpt").string();
  const std::string p2 = (dir / "b.ckpt").string();
  save_checkpoint(p1, header, m.params());

  const Checkpoint ck = load_checkpoint(p1);
  ParamStore ps;
  for (const auto& [name, t] : ck.tensors) ps.create(name, t);
  save_checkpoint(p2, ck.header, ps);

  auto slurp = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  };
  const std::string b1 = slurp(p1), b2 = slurp(p2);
  fs::remove_all(dir);
  if (b1.empty() || b1 != b2) {
    detail = "save->load->save bytes differ";
    return false;
  }
  detail = std::to_string(b1.size()) + " bytes, save->load->save identical";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <criterion 1..10>\n", argv[0]);
    return 2;
  }
  const int n = std::atoi(argv[1]);
  bool ok = false;
  std::string detail;
  try {
    switch (n) {
      case 1: ok = criterion1(detail); break;
      case 2: ok = criterion2(detail); break;
      case 3: ok = criterion3(detail); break;
      case 4: ok = criterion4(detail); break;
      case 5: ok = criterion5(detail); break;
      case 6: ok = criterion6(detail); break;
      case 7: ok = criterion7(detail); break;
      case 8: ok = criterion8(detail); break;
      case 9: ok = criterion9(detail); break;
      case 10: ok = criterion10(detail); break;
      default:
        std::fprintf(stderr, "unknown criterion %d\n", n);
        return 2;
    }
  } catch (const std::exception& e) {
    std::printf("criterion %d: FAIL (exception: %s)\n", n, e.what());
    return 1;
  }
  std::printf("criterion %d: %s (%s)\n", n, ok ? "PASS" : "FAIL", detail.c_str());
  return ok ? 0 : 1;
}
