#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "textar/nn.hpp"
#include "textar/params.hpp"
#include "textar/rng.hpp"
#include "textar/tensor.hpp"
#include "textar/types.hpp"

namespace textar::model {

enum class PEVariant { none, ape, lpe, rope_mixed };

const char* pe_name(PEVariant pe);
PEVariant pe_from_name(const std::string& name);

struct ModelConfig {
  int S = 16;
  int crop_h = 32;  // 3:4 width:height, like the full-scale 128x96
  int crop_w = 24;
  int d_model = 128;
  int heads = 4;
  int tenc_layers = 4;
  int rope_layers = 2;
  std::vector<int> fen_channels = {16, 32, 64, 128};
  PEVariant pe = PEVariant::rope_mixed;
  bool dual_head = true;
  bool concat = true;
  double dropout = 0.3;
  double temperature = 0.25;
  int head_hidden = 0;  // 0 means d_model
  int lpe_grid = 32;

  void validate() const;
  int head_input_width() const;
  int hidden() const { return head_hidden > 0 ? head_hidden : d_model; }

  static ModelConfig desk_default();
  static ModelConfig full_scale();  // S=125, 128x96 crops, l=2
  static ModelConfig toy();          // S=4, d_model=32 (gradient checking)

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct WindowBatch {
  Tensor crops;  // [B, S, 1, crop_h, crop_w]
  std::vector<std::vector<NormalizedPosition>> positions;  // [B][S]
  std::vector<std::vector<bool>> mask;                     // [B][S], true = real word
  std::vector<std::vector<int>> labels_t1;                 // ignored where mask=false
  std::vector<std::vector<int>> labels_t2;

  int batch() const { return crops.dim(0); }
  int window() const { return crops.dim(1); }
};

struct ModelOutput {
  Tensor logits_t1;        // [B, S, 4] (dual head)
  Tensor logits_t2;        // [B, S, 4]
  Tensor logits_combined;  // [B, S, 16] (single head); empty otherwise
};

struct ForwardCache;

// TexTAR: FEN -> TEnc (no positional information) -> PE block -> optional
// per-token concatenation -> classification head(s). The ablation axes
// (single head, APE/LPE, no-concat, baseline) are all ModelConfig settings.
class Model {
 public:
  struct LinearRefs {
    ParamEntry* W;
    ParamEntry* b;
  };
  struct LNRefs {
    ParamEntry* gamma;
    ParamEntry* beta;
  };
  struct ConvRefs {
    ParamEntry* K;
    ParamEntry* b;
    LNRefs ln;
  };
  struct LayerRefs {
    LNRefs ln1, ln2;
    nn::AttentionParams attn;
    LinearRefs ff1, ff2;
  };
  struct HeadRefs {
    LinearRefs fc1, fc2;
  };

  Model(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // dropout_rng may be null when train=false or dropout=0.
  ModelOutput forward(const WindowBatch& batch, bool train, Rng* dropout_rng,
                      ForwardCache* cache) const;

  // Accumulates parameter gradients for d(loss)/d(logits) in `grads`
  // (shapes matching the forward output). Call params().zero_grads() first.
  void backward(const ForwardCache& cache, const ModelOutput& grads);

  // Per-word embedding stage only (context-free by construction).
  Tensor fen_forward(const Tensor& crops, ForwardCache* cache) const;  // -> [B, S, d_model]

  // Copies checkpoint tensors whose name and shape match; returns the names
  // that were loaded.
  std::vector<std::string> load_matching(const std::map<std::string, Tensor>& tensors);

  // Freezes fen.* and tenc.* (the stage-2 contract).
  void freeze_encoder();

 private:
  ModelConfig cfg_;
  ParamStore params_;

  std::vector<ConvRefs> fen_convs_;
  LinearRefs fen_fc_{};
  std::vector<LayerRefs> tenc_;
  std::vector<LayerRefs> ab_;
  ParamEntry* lpe_table_ = nullptr;
  HeadRefs head_t1_{}, head_t2_{}, head_combined_{};

  void build(std::uint64_t init_seed);
  LayerRefs build_layer(const std::string& prefix, bool rope, Rng& rng);
  HeadRefs build_head(const std::string& prefix, int out_classes, Rng& rng);

  Tensor encoder_stack_forward(const std::vector<LayerRefs>& layers, const Tensor& x,
                               const WindowBatch& batch, bool rope,
                               std::vector<std::vector<struct LayerCacheImpl>>& caches) const;
};

// Baseline comparator: FEN plus heads, no encoder, no positions. Returns a
// config whose forward is the single-word model at the same crop geometry.
ModelConfig baseline_config(const ModelConfig& like);

// Full forward cache. Opaque to callers; defined here so tests can hold it.
struct LayerCacheImpl {
  nn::LayerNormCache ln1c, ln2c;
  nn::AttentionCache attnc;
  Tensor h2, f, g;
};

struct HeadCache {
  Tensor in;    // [N, din]
  Tensor f;     // fc1 output
  Tensor r;     // relu output
  Tensor mask;  // dropout mask
};

struct ForwardCache {
  // fen
  Tensor fen_input;  // [N, 1, H, W]
  std::vector<Tensor> conv_in;
  std::vector<Tensor> conv_out;       // pre-relu
  std::vector<Tensor> conv_relu_nhwc; // post-relu, channels-last
  std::vector<nn::LayerNormCache> conv_ln;
  Tensor gap_in;  // [N, C, h, w]
  Tensor fc_in;   // [N, C]
  // encoder
  std::vector<std::vector<LayerCacheImpl>> tenc_caches;  // [B][layer]
  std::vector<std::vector<LayerCacheImpl>> ab_caches;
  Tensor t_emb;   // [B, S, d]
  Tensor ab_in;   // [B, S, d]
  Tensor t_rope;  // [B, S, d]
  std::vector<std::vector<int>> lpe_idx;
  // heads
  HeadCache head_t1, head_t2, head_combined;
  // batch view needed by backward
  std::vector<std::vector<bool>> mask;
  std::vector<std::vector<NormalizedPosition>> positions;
};

}  // namespace textar::model
