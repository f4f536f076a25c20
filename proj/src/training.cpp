#include "textar/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "textar/log.hpp"
#include "textar/nn.hpp"

namespace textar::train {

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::stage1: return "stage1";
    case Stage::stage2: return "stage2";
    case Stage::end_to_end: return "end_to_end";
  }
  return "?";
}

Stage stage_from_name(const std::string& name) {
  if (name == "stage1") return Stage::stage1;
  if (name == "stage2") return Stage::stage2;
  if (name == "end_to_end") return Stage::end_to_end;
  throw std::invalid_argument("unknown training stage: " + name);
}

void TrainConfig::validate() const {
  if (lr <= 0) throw std::invalid_argument("train: lr must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw std::invalid_argument("train: betas must lie in [0,1)");
  if (eps <= 0) throw std::invalid_argument("train: eps must be positive");
  if (epochs < 0 || max_steps < 0)
    throw std::invalid_argument("train: epochs and max_steps must be non-negative");
  if (batch_windows <= 0) throw std::invalid_argument("train: batch_windows must be positive");
  if (weight_t1 < 0 || weight_t2 < 0 || weight_t1 + weight_t2 <= 0)
    throw std::invalid_argument("train: bad group weights");
  if (!class_weights_t1.empty() && class_weights_t1.size() != kNumClasses)
    throw std::invalid_argument("train: class_weights_t1 needs 4 entries");
  if (!class_weights_t2.empty() && class_weights_t2.size() != kNumClasses)
    throw std::invalid_argument("train: class_weights_t2 needs 4 entries");
}

namespace {

// [B, S, C] -> [B*S, C] view copy (tiny batches; a copy keeps Tensor simple)
Tensor flatten_logits(const Tensor& t) {
  return Tensor({t.dim(0) * t.dim(1), t.dim(2)}, t.v);
}

}  // namespace

double multitask_loss(const model::ModelOutput& out, const model::WindowBatch& batch,
                      const model::ModelConfig& mc, const TrainConfig& tc,
                      model::ModelOutput* grads) {
  const int B = batch.batch();
  const int S = batch.window();

  std::vector<bool> loss_mask(static_cast<std::size_t>(B) * S);
  std::vector<int> lab1(loss_mask.size()), lab2(loss_mask.size()), labc(loss_mask.size());
  for (int b = 0; b < B; ++b) {
    for (int s = 0; s < S; ++s) {
      const std::size_t i = static_cast<std::size_t>(b) * S + s;
      const int t1 = batch.labels_t1[b][s];
      const int t2 = batch.labels_t2[b][s];
      loss_mask[i] = batch.mask[b][s] && t1 >= 0 && t2 >= 0;
      lab1[i] = std::max(t1, 0);
      lab2[i] = std::max(t2, 0);
      labc[i] = AttributeLabel{std::max(t1, 0), std::max(t2, 0)}.combined();
    }
  }

  if (!mc.dual_head) {
    check_shape(out.logits_combined, {B, S, kNumCombined}, "multitask_loss combined");
    Tensor dflat;
    const double loss =
        nn::cross_entropy_from_logits(flatten_logits(out.logits_combined), labc, loss_mask, {},
                                      mc.temperature, grads ? &dflat : nullptr);
    if (grads) grads->logits_combined = Tensor({B, S, kNumCombined}, std::move(dflat.v));
    return loss;
  }

  check_shape(out.logits_t1, {B, S, kNumClasses}, "multitask_loss t1");
  check_shape(out.logits_t2, {B, S, kNumClasses}, "multitask_loss t2");
  Tensor d1, d2;
  const double l1 = nn::cross_entropy_from_logits(flatten_logits(out.logits_t1), lab1, loss_mask,
                                                  tc.class_weights_t1, mc.temperature,
                                                  grads ? &d1 : nullptr);
  const double l2 = nn::cross_entropy_from_logits(flatten_logits(out.logits_t2), lab2, loss_mask,
                                                  tc.class_weights_t2, mc.temperature,
                                                  grads ? &d2 : nullptr);
  if (grads) {
    for (double& g : d1.v) g *= tc.weight_t1;
    for (double& g : d2.v) g *= tc.weight_t2;
    grads->logits_t1 = Tensor({B, S, kNumClasses}, std::move(d1.v));
    grads->logits_t2 = Tensor({B, S, kNumClasses}, std::move(d2.v));
  }
  return tc.weight_t1 * l1 + tc.weight_t2 * l2;
}

void adam_step(ParamStore& params, const TrainConfig& tc, long step) {
  if (step < 1) throw std::invalid_argument("adam_step: step is 1-based");
  const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
  for (auto& [name, e] : params) {
    if (e.frozen) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad.v[i];
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient in " + name);
      e.adam_m.v[i] = tc.beta1 * e.adam_m.v[i] + (1.0 - tc.beta1) * g;
      e.adam_v.v[i] = tc.beta2 * e.adam_v.v[i] + (1.0 - tc.beta2) * g * g;
      const double mhat = e.adam_m.v[i] / bc1;
      const double vhat = e.adam_v.v[i] / bc2;
      e.value.v[i] -= tc.lr * mhat / (std::sqrt(vhat) + tc.eps);
    }
  }
}

void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << "epoch,split,loss,f1_t1_normal,f1_t1_bold,f1_t1_italic,f1_t1_bold_italic,"
        "f1_t2_normal,f1_t2_underline,f1_t2_strikeout,f1_t2_underline_strikeout\n";
  for (const auto& r : rows) {
    os << r.epoch << "," << r.split << "," << r.loss;
    for (double f : r.f1) os << "," << f;
    os << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

namespace {

struct F1Accum {
  // [head(2)][class(4)]
  long tp[2][4] = {};
  long fp[2][4] = {};
  long fn[2][4] = {};

  void add(int head, int pred, int truth) {
    if (pred == truth)
      ++tp[head][truth];
    else {
      ++fp[head][pred];
      ++fn[head][truth];
    }
  }

  std::array<double, 8> f1() const {
    std::array<double, 8> out{};
    for (int h = 0; h < 2; ++h)
      for (int c = 0; c < 4; ++c) {
        const long denom = 2 * tp[h][c] + fp[h][c] + fn[h][c];
        out[static_cast<std::size_t>(4 * h + c)] =
            denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp[h][c]) / static_cast<double>(denom);
      }
    return out;
  }
};

int argmax4(const Tensor& t, int b, int s, int n) {
  int best = 0;
  for (int c = 1; c < n; ++c)
    if (t.at(b, s, c) > t.at(b, s, best)) best = c;
  return best;
}

void accumulate_preds(const model::ModelOutput& out, const model::WindowBatch& batch,
                      bool dual_head, F1Accum& acc) {
  for (int b = 0; b < batch.batch(); ++b) {
    for (int s = 0; s < batch.window(); ++s) {
      if (!batch.mask[b][s]) continue;
      const int t1 = batch.labels_t1[b][s];
      const int t2 = batch.labels_t2[b][s];
      if (t1 < 0 || t2 < 0) continue;
      if (dual_head) {
        acc.add(0, argmax4(out.logits_t1, b, s, kNumClasses), t1);
        acc.add(1, argmax4(out.logits_t2, b, s, kNumClasses), t2);
      } else {
        const auto pred =
            AttributeLabel::from_combined(argmax4(out.logits_combined, b, s, kNumCombined));
        acc.add(0, pred.t1, t1);
        acc.add(1, pred.t2, t2);
      }
    }
  }
}

}  // namespace

TrainResult train_loop(model::Model& m, const data::Dataset& ds, const TrainConfig& tc) {
  tc.validate();
  auto refs = data::all_windows(ds);
  if (refs.empty()) throw std::invalid_argument("train: dataset has no windows");

  Rng shuffle_rng(Rng::derive(tc.seed, 1));
  Rng model_rng(Rng::derive(tc.seed, 2));  // dropout + augmentation draws
  const auto aug_policy = synth::AugmentPolicy::training_default();
  const synth::AugmentPolicy* aug = tc.augment ? &aug_policy : nullptr;

  TrainResult res;
  // epochs=0 with max_steps>0 means "run until the step cap";
  // both zero is a no-op (the returned model equals its initialization)
  const int epoch_cap =
      tc.epochs > 0 ? tc.epochs : (tc.max_steps > 0 ? std::numeric_limits<int>::max() : 0);
  bool done = false;
  for (int epoch = 0; epoch < epoch_cap && !done; ++epoch) {
    // Fisher-Yates with the project rng keeps shuffles reproducible
    for (std::size_t i = refs.size(); i > 1; --i)
      std::swap(refs[i - 1], refs[shuffle_rng.uniform_int(i)]);

    double loss_sum = 0.0;
    int batches = 0;
    F1Accum acc;
    for (std::size_t start = 0; start < refs.size(); start += tc.batch_windows) {
      const std::size_t end = std::min(refs.size(), start + tc.batch_windows);
      const std::vector<data::WindowRef> chunk(refs.begin() + static_cast<std::ptrdiff_t>(start),
                                               refs.begin() + static_cast<std::ptrdiff_t>(end));
      const auto batch = data::make_batch(ds, chunk, aug, &model_rng);

      model::ForwardCache cache;
      const auto out = m.forward(batch, true, &model_rng, &cache);
      model::ModelOutput grads;
      const double loss = multitask_loss(out, batch, m.config(), tc, &grads);

      m.params().zero_grads();
      m.backward(cache, grads);
      m.params().clear_frozen_grads();
      ++res.steps;
      adam_step(m.params(), tc, res.steps);

      loss_sum += loss;
      ++batches;
      res.final_loss = loss;
      accumulate_preds(out, batch, m.config().dual_head, acc);

      if (tc.max_steps > 0 && res.steps >= tc.max_steps) {
        done = true;
        break;
      }
    }

    EpochRow row;
    row.epoch = epoch;
    row.split = "train";
    row.loss = batches > 0 ? loss_sum / batches : 0.0;
    row.f1 = acc.f1();
    res.rows.push_back(row);
    TEXTAR_LOG_DEBUG("epoch %d: loss %.6f (%ld steps)", epoch, row.loss, res.steps);
  }
  return res;
}

std::unique_ptr<model::Model> train_stage1(model::ModelConfig mc, const data::Dataset& ds,
                                           const TrainConfig& tc, TrainResult* result) {
  mc.pe = model::PEVariant::none;
  mc.concat = false;
  mc.rope_layers = 0;
  auto m = std::make_unique<model::Model>(mc, Rng::derive_seed(tc.seed, 100));
  auto res = train_loop(*m, ds, tc);
  if (result) *result = std::move(res);
  return m;
}

std::unique_ptr<model::Model> train_stage2(const std::map<std::string, Tensor>& stage1_tensors,
                                           model::ModelConfig mc, const data::Dataset& ds,
                                           const TrainConfig& tc, TrainResult* result) {
  auto m = std::make_unique<model::Model>(mc, Rng::derive_seed(tc.seed, 200));
  const auto loaded = m->load_matching(stage1_tensors);
  std::size_t encoder_loaded = 0;
  for (const auto& name : loaded)
    if (name.rfind("fen.", 0) == 0 || name.rfind("tenc.", 0) == 0) ++encoder_loaded;
  if (encoder_loaded == 0)
    throw std::runtime_error("stage2: no encoder tensors matched the stage-1 checkpoint");
  TEXTAR_LOG_DEBUG("stage2: restored %zu tensors (%zu encoder)", loaded.size(), encoder_loaded);
  m->freeze_encoder();
  auto res = train_loop(*m, ds, tc);
  if (result) *result = std::move(res);
  return m;
}

}  // namespace textar::train
