#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "textar/dataset.hpp"
#include "textar/model.hpp"
#include "textar/params.hpp"

namespace textar::train {

enum class Stage { stage1, stage2, end_to_end };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 30;
  int max_steps = 0;  // 0 = bounded by epochs only
  int batch_windows = 8;
  // multitask group weights: L = w_t1 * CE(T1) + w_t2 * CE(T2)
  double weight_t1 = 0.25;
  double weight_t2 = 0.75;
  // optional per-class reweighting, empty = off (the default)
  std::vector<double> class_weights_t1;
  std::vector<double> class_weights_t2;
  bool augment = false;
  Stage stage = Stage::stage1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Scalar multitask loss over a batch at the model's softmax temperature.
// grads (optional) receives d loss / d logits in the forward output shapes.
// Loss slots are the padding mask restricted to labeled words; a group weight
// of exactly zero produces exactly zero gradients for that head.
double multitask_loss(const model::ModelOutput& out, const model::WindowBatch& batch,
                      const model::ModelConfig& mc, const TrainConfig& tc,
                      model::ModelOutput* grads);

// One bias-corrected Adam update (step is 1-based). Frozen entries are
// skipped; a non-finite gradient aborts with the parameter's name.
void adam_step(ParamStore& params, const TrainConfig& tc, long step);

struct EpochRow {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  // running-argmax F1 per class: t1 normal/bold/italic/b&i, then t2
  // normal/underline/strikeout/u&s
  std::array<double, 8> f1{};
};

struct TrainResult {
  std::vector<EpochRow> rows;
  long steps = 0;
  double final_loss = 0.0;
};

// header: epoch,split,loss,f1_* (8 columns)
void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows);

// Deterministic SGD loop: seeded shuffle each epoch, forward/backward,
// Adam. The dataset must have windows built and crops loaded.
TrainResult train_loop(model::Model& m, const data::Dataset& ds, const TrainConfig& tc);

// Stage 1: context encoder without positional information (pe=none, no
// concat); trains FEN + TEnc + heads from scratch.
std::unique_ptr<model::Model> train_stage1(model::ModelConfig mc, const data::Dataset& ds,
                                           const TrainConfig& tc, TrainResult* result = nullptr);

// Stage 2: restores matching fen.*/tenc.* tensors from stage 1, freezes them,
// and trains fresh positional layers + heads on the concatenated features.
std::unique_ptr<model::Model> train_stage2(const std::map<std::string, Tensor>& stage1_tensors,
                                           model::ModelConfig mc, const data::Dataset& ds,
                                           const TrainConfig& tc, TrainResult* result = nullptr);

}  // namespace textar::train
