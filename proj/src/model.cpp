#include "textar/model.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace textar::model {

namespace {

Tensor bchw_to_bhwc(const Tensor& x) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor y({B, H, W, C});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) y.at(b, h, w, c) = x.at(b, c, h, w);
  return y;
}

Tensor bhwc_to_bchw(const Tensor& x) {
  const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  Tensor y({B, C, H, W});
  for (int b = 0; b < B; ++b)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w)
        for (int c = 0; c < C; ++c) y.at(b, c, h, w) = x.at(b, h, w, c);
  return y;
}

Tensor slice_token_matrix(const Tensor& x, int b) {  // [B,S,d] -> [S,d] copy
  const int S = x.dim(1), d = x.dim(2);
  Tensor y({S, d});
  std::copy_n(&x.v[static_cast<std::size_t>(b) * S * d], static_cast<std::size_t>(S) * d,
              y.v.begin());
  return y;
}

void store_token_matrix(Tensor& dst, int b, const Tensor& src) {
  const int S = dst.dim(1), d = dst.dim(2);
  std::copy_n(src.v.begin(), static_cast<std::size_t>(S) * d,
              &dst.v[static_cast<std::size_t>(b) * S * d]);
}

Tensor xavier(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  return nn::init_uniform({fan_in, fan_out}, limit, rng);
}

}  // namespace

const char* pe_name(PEVariant pe) {
  switch (pe) {
    case PEVariant::none: return "none";
    case PEVariant::ape: return "ape";
    case PEVariant::lpe: return "lpe";
    case PEVariant::rope_mixed: return "rope_mixed";
  }
  return "none";
}

PEVariant pe_from_name(const std::string& name) {
  if (name == "none") return PEVariant::none;
  if (name == "ape") return PEVariant::ape;
  if (name == "lpe") return PEVariant::lpe;
  if (name == "rope_mixed") return PEVariant::rope_mixed;
  throw std::invalid_argument("unknown pe variant: " + name);
}

void ModelConfig::validate() const {
  if (S < 1) throw std::invalid_argument("model: S must be >= 1");
  if (d_model % heads != 0) throw std::invalid_argument("model: d_model not divisible by heads");
  if (pe == PEVariant::rope_mixed && (d_model / heads) % 2 != 0)
    throw std::invalid_argument("model: rope requires even head_dim");
  if (pe == PEVariant::ape && d_model % 4 != 0)
    throw std::invalid_argument("model: ape requires d_model divisible by 4");
  if (std::abs(3 * crop_h - 4 * crop_w) > 3)
    throw std::invalid_argument("model: crop aspect must be 3:4 (width:height)");
  if (fen_channels.empty()) throw std::invalid_argument("model: fen_channels empty");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model: bad dropout");
  if (temperature <= 0.0) throw std::invalid_argument("model: temperature must be positive");
  if (tenc_layers < 0 || rope_layers < 0) throw std::invalid_argument("model: negative depth");
  if (lpe_grid < 1) throw std::invalid_argument("model: lpe_grid must be >= 1");
}

int ModelConfig::head_input_width() const {
  if (pe == PEVariant::none) return d_model;
  return concat ? 2 * d_model : d_model;
}

ModelConfig ModelConfig::desk_default() { return ModelConfig{}; }

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.S = 125;
  c.crop_h = 128;
  c.crop_w = 96;
  c.d_model = 256;
  c.heads = 8;
  c.tenc_layers = 6;
  c.rope_layers = 2;
  c.fen_channels = {16, 32, 64, 128};
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.S = 4;
  c.crop_h = 16;
  c.crop_w = 12;
  c.d_model = 32;
  c.heads = 4;
  c.tenc_layers = 1;
  c.rope_layers = 1;
  c.fen_channels = {4, 8};
  c.dropout = 0.0;
  return c;
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"S", S},
                        {"crop_h", crop_h},
                        {"crop_w", crop_w},
                        {"d_model", d_model},
                        {"heads", heads},
                        {"tenc_layers", tenc_layers},
                        {"rope_layers", rope_layers},
                        {"fen_channels", fen_channels},
                        {"pe", pe_name(pe)},
                        {"dual_head", dual_head},
                        {"concat", concat},
                        {"dropout", dropout},
                        {"temperature", temperature},
                        {"head_hidden", head_hidden},
                        {"lpe_grid", lpe_grid}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.S = j.at("S").get<int>();
  c.crop_h = j.at("crop_h").get<int>();
  c.crop_w = j.at("crop_w").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.heads = j.at("heads").get<int>();
  c.tenc_layers = j.at("tenc_layers").get<int>();
  c.rope_layers = j.at("rope_layers").get<int>();
  c.fen_channels = j.at("fen_channels").get<std::vector<int>>();
  c.pe = pe_from_name(j.at("pe").get<std::string>());
  c.dual_head = j.at("dual_head").get<bool>();
  c.concat = j.at("concat").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.head_hidden = j.at("head_hidden").get<int>();
  c.lpe_grid = j.at("lpe_grid").get<int>();
  c.validate();
  return c;
}

ModelConfig baseline_config(const ModelConfig& like) {
  ModelConfig c = like;
  c.tenc_layers = 0;
  c.rope_layers = 0;
  c.pe = PEVariant::none;
  c.concat = false;
  return c;
}

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

Model::Model(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build(init_seed);
}

Model::LayerRefs Model::build_layer(const std::string& prefix, bool rope, Rng& rng) {
  const int d = cfg_.d_model;
  LayerRefs L;
  L.ln1 = {&params_.create(prefix + ".ln1.gamma", Tensor::full({d}, 1.0)),
           &params_.create(prefix + ".ln1.beta", Tensor::zeros({d}))};
  L.ln2 = {&params_.create(prefix + ".ln2.gamma", Tensor::full({d}, 1.0)),
           &params_.create(prefix + ".ln2.beta", Tensor::zeros({d}))};
  L.attn.wq = &params_.create(prefix + ".attn.wq", xavier(d, d, rng));
  L.attn.wk = &params_.create(prefix + ".attn.wk", xavier(d, d, rng));
  L.attn.wv = &params_.create(prefix + ".attn.wv", xavier(d, d, rng));
  L.attn.wo = &params_.create(prefix + ".attn.wo", xavier(d, d, rng));
  L.attn.bq = &params_.create(prefix + ".attn.bq", Tensor::zeros({d}));
  L.attn.bk = &params_.create(prefix + ".attn.bk", Tensor::zeros({d}));
  L.attn.bv = &params_.create(prefix + ".attn.bv", Tensor::zeros({d}));
  L.attn.bo = &params_.create(prefix + ".attn.bo", Tensor::zeros({d}));
  if (rope) {
    nn::RopeFrequencies f = nn::rope_axial_init(cfg_.heads, d / cfg_.heads);
    L.attn.rope_fx = &params_.create(prefix + ".rope.fx", std::move(f.fx));
    L.attn.rope_fy = &params_.create(prefix + ".rope.fy", std::move(f.fy));
  }
  const int ff = 4 * d;
  L.ff1 = {&params_.create(prefix + ".ff1.w", xavier(d, ff, rng)),
           &params_.create(prefix + ".ff1.b", Tensor::zeros({ff}))};
  L.ff2 = {&params_.create(prefix + ".ff2.w", xavier(ff, d, rng)),
           &params_.create(prefix + ".ff2.b", Tensor::zeros({d}))};
  return L;
}

Model::HeadRefs Model::build_head(const std::string& prefix, int out_classes, Rng& rng) {
  const int din = cfg_.head_input_width();
  const int hid = cfg_.hidden();
  HeadRefs h;
  h.fc1 = {&params_.create(prefix + ".fc1.w", xavier(din, hid, rng)),
           &params_.create(prefix + ".fc1.b", Tensor::zeros({hid}))};
  h.fc2 = {&params_.create(prefix + ".fc2.w", xavier(hid, out_classes, rng)),
           &params_.create(prefix + ".fc2.b", Tensor::zeros({out_classes}))};
  return h;
}

void Model::build(std::uint64_t init_seed) {
  Rng rng(init_seed);

  int cin = 1;
  for (std::size_t i = 0; i < cfg_.fen_channels.size(); ++i) {
    const int cout = cfg_.fen_channels[i];
    const std::string p = "fen.conv" + std::to_string(i);
    ConvRefs cr;
    cr.K = &params_.create(p + ".k", nn::init_kaiming({cout, cin, 3, 3}, cin * 9, rng));
    cr.b = &params_.create(p + ".b", Tensor::zeros({cout}));
    cr.ln = {&params_.create(p + ".ln.gamma", Tensor::full({cout}, 1.0)),
             &params_.create(p + ".ln.beta", Tensor::zeros({cout}))};
    fen_convs_.push_back(cr);
    cin = cout;
  }
  fen_fc_ = {&params_.create("fen.fc.w", xavier(cin, cfg_.d_model, rng)),
             &params_.create("fen.fc.b", Tensor::zeros({cfg_.d_model}))};

  for (int i = 0; i < cfg_.tenc_layers; ++i)
    tenc_.push_back(build_layer("tenc." + std::to_string(i), false, rng));

  if (cfg_.pe != PEVariant::none) {
    for (int i = 0; i < cfg_.rope_layers; ++i)
      ab_.push_back(build_layer("ab." + std::to_string(i), cfg_.pe == PEVariant::rope_mixed, rng));
    if (cfg_.pe == PEVariant::lpe)
      lpe_table_ = &params_.create(
          "lpe.table", nn::init_uniform({cfg_.lpe_grid * cfg_.lpe_grid, cfg_.d_model}, 0.02, rng));
  }

  if (cfg_.dual_head) {
    head_t1_ = build_head("head.t1", kNumClasses, rng);
    head_t2_ = build_head("head.t2", kNumClasses, rng);
  } else {
    head_combined_ = build_head("head.c", kNumCombined, rng);
  }
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

Tensor Model::fen_forward(const Tensor& crops, ForwardCache* cache) const {
  const int B = crops.dim(0), S = crops.dim(1);
  const int N = B * S;
  Tensor x = crops;
  x.shape = {N, crops.dim(2), crops.dim(3), crops.dim(4)};
  if (cache) cache->fen_input = x;

  for (std::size_t i = 0; i < fen_convs_.size(); ++i) {
    const ConvRefs& cr = fen_convs_[i];
    if (cache) cache->conv_in.push_back(x);
    Tensor y = nn::conv2d(x, cr.K->value, cr.b->value, 2, 1);
    if (cache) cache->conv_out.push_back(y);
    Tensor r = nn::relu(y);
    Tensor rn = bchw_to_bhwc(r);
    if (cache) cache->conv_relu_nhwc.push_back(rn);
    nn::LayerNormCache lnc;
    Tensor ln = nn::layer_norm(rn, cr.ln.gamma->value, cr.ln.beta->value, cache ? &lnc : nullptr);
    if (cache) cache->conv_ln.push_back(std::move(lnc));
    x = bhwc_to_bchw(ln);
  }
  if (cache) cache->gap_in = x;

  // global average pool
  const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor g({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) acc += x.at(n, c, h, w);
      g.at(n, c) = acc / (H * W);
    }
  if (cache) cache->fc_in = g;

  Tensor e = nn::linear(g, fen_fc_.W->value, fen_fc_.b->value);
  e.shape = {B, S, cfg_.d_model};
  return e;
}

namespace {

Tensor layer_forward(const Model::LayerRefs&, const Tensor&, int, const std::vector<bool>&,
                     const std::vector<NormalizedPosition>&, LayerCacheImpl&);

}  // namespace

Tensor Model::encoder_stack_forward(const std::vector<LayerRefs>& layers, const Tensor& x,
                                    const WindowBatch& batch, bool rope,
                                    std::vector<std::vector<LayerCacheImpl>>& caches) const {
  const int B = x.dim(0);
  Tensor out = x;
  caches.assign(B, {});
  static const std::vector<NormalizedPosition> no_positions;
  for (int b = 0; b < B; ++b) {
    Tensor t = slice_token_matrix(out, b);
    caches[b].resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l)
      t = layer_forward(layers[l], t, cfg_.heads, batch.mask[b],
                        rope ? batch.positions[b] : no_positions, caches[b][l]);
    store_token_matrix(out, b, t);
  }
  return out;
}

namespace {

Tensor layer_forward(const Model::LayerRefs& L, const Tensor& x, int heads,
                     const std::vector<bool>& mask, const std::vector<NormalizedPosition>& pos,
                     LayerCacheImpl& c) {
  Tensor h1 = nn::layer_norm(x, L.ln1.gamma->value, L.ln1.beta->value, &c.ln1c);
  Tensor a = nn::multi_head_attention(h1, heads, mask, L.attn, pos, &c.attnc);
  Tensor x2 = x;
  x2 += a;
  Tensor h2 = nn::layer_norm(x2, L.ln2.gamma->value, L.ln2.beta->value, &c.ln2c);
  c.h2 = h2;
  c.f = nn::linear(h2, L.ff1.W->value, L.ff1.b->value);
  c.g = nn::gelu(c.f);
  Tensor o = nn::linear(c.g, L.ff2.W->value, L.ff2.b->value);
  Tensor y = std::move(x2);
  y += o;
  return y;
}

Tensor layer_backward(const Model::LayerRefs& L, int heads, const LayerCacheImpl& c,
                      const Tensor& dy) {
  Tensor dx2 = dy;
  Tensor dg = Tensor::zeros(c.g.shape);
  nn::linear_backward(c.g, L.ff2.W->value, dy, &dg, L.ff2.W->grad, L.ff2.b->grad);
  Tensor df = nn::gelu_backward(c.f, dg);
  Tensor dh2 = Tensor::zeros(c.h2.shape);
  nn::linear_backward(c.h2, L.ff1.W->value, df, &dh2, L.ff1.W->grad, L.ff1.b->grad);
  dx2 += nn::layer_norm_backward(c.ln2c, L.ln2.gamma->value, dh2, L.ln2.gamma->grad,
                                 L.ln2.beta->grad);
  Tensor dh1 = nn::multi_head_attention_backward(c.attnc, heads, L.attn, dx2);
  Tensor dx = std::move(dx2);
  dx += nn::layer_norm_backward(c.ln1c, L.ln1.gamma->value, dh1, L.ln1.gamma->grad,
                                L.ln1.beta->grad);
  return dx;
}

Tensor head_forward(const Model::HeadRefs& h, const Tensor& in, double rate, bool train, Rng* rng,
                    HeadCache& c) {
  c.in = in;
  c.f = nn::linear(in, h.fc1.W->value, h.fc1.b->value);
  c.r = nn::relu(c.f);
  Rng fallback(0);
  Tensor d = nn::dropout(c.r, rate, train, rng ? *rng : fallback, &c.mask);
  return nn::linear(d, h.fc2.W->value, h.fc2.b->value);
}

Tensor head_backward(const Model::HeadRefs& h, const HeadCache& c, const Tensor& dy) {
  // fc2 input = r .* mask
  Tensor d(c.r.shape);
  for (std::size_t i = 0; i < d.size(); ++i) d.v[i] = c.r.v[i] * c.mask.v[i];
  Tensor dd = Tensor::zeros(d.shape);
  nn::linear_backward(d, h.fc2.W->value, dy, &dd, h.fc2.W->grad, h.fc2.b->grad);
  Tensor dr = nn::dropout_backward(dd, c.mask);
  Tensor df = nn::relu_backward(c.f, dr);
  Tensor din = Tensor::zeros(c.in.shape);
  nn::linear_backward(c.in, h.fc1.W->value, df, &din, h.fc1.W->grad, h.fc1.b->grad);
  return din;
}

}  // namespace

ModelOutput Model::forward(const WindowBatch& batch, bool train, Rng* dropout_rng,
                           ForwardCache* cache) const {
  const int B = batch.batch(), S = batch.window();
  if (S != cfg_.S) throw std::invalid_argument("model: batch window size != config S");
  if (batch.crops.dim(3) != cfg_.crop_h || batch.crops.dim(4) != cfg_.crop_w)
    throw std::invalid_argument("model: crop shape mismatch");
  if (train && cfg_.dropout > 0.0 && dropout_rng == nullptr)
    throw std::invalid_argument("model: train mode with dropout requires an rng");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.mask = batch.mask;
  c.positions = batch.positions;

  Tensor e = fen_forward(batch.crops, &c);

  c.t_emb = encoder_stack_forward(tenc_, e, batch, false, c.tenc_caches);

  Tensor t_final;
  if (cfg_.pe != PEVariant::none) {
    c.ab_in = c.t_emb;
    if (cfg_.pe == PEVariant::ape) {
      for (int b = 0; b < B; ++b) {
        Tensor pe = nn::ape_sinusoidal(batch.positions[b], cfg_.d_model);
        for (int s = 0; s < S; ++s)
          for (int d = 0; d < cfg_.d_model; ++d) c.ab_in.at(b, s, d) += pe.at(s, d);
      }
    } else if (cfg_.pe == PEVariant::lpe) {
      c.lpe_idx.assign(B, std::vector<int>(S, 0));
      const int g = cfg_.lpe_grid;
      for (int b = 0; b < B; ++b)
        for (int s = 0; s < S; ++s) {
          const auto& p = batch.positions[b][s];
          const int gx = std::min(g - 1, std::max(0, static_cast<int>(p.x * g)));
          const int gy = std::min(g - 1, std::max(0, static_cast<int>(p.y * g)));
          const int idx = gy * g + gx;
          c.lpe_idx[b][s] = idx;
          for (int d = 0; d < cfg_.d_model; ++d)
            c.ab_in.at(b, s, d) += lpe_table_->value.at(idx, d);
        }
    }
    c.t_rope =
        encoder_stack_forward(ab_, c.ab_in, batch, cfg_.pe == PEVariant::rope_mixed, c.ab_caches);

    if (cfg_.concat) {
      t_final = Tensor({B, S, 2 * cfg_.d_model});
      for (int b = 0; b < B; ++b)
        for (int s = 0; s < S; ++s)
          for (int d = 0; d < cfg_.d_model; ++d) {
            t_final.at(b, s, d) = c.t_emb.at(b, s, d);
            t_final.at(b, s, cfg_.d_model + d) = c.t_rope.at(b, s, d);
          }
    } else {
      t_final = c.t_rope;
    }
  } else {
    t_final = c.t_emb;
  }

  Tensor flat = t_final;
  flat.shape = {B * S, cfg_.head_input_width()};

  ModelOutput out;
  if (cfg_.dual_head) {
    out.logits_t1 = head_forward(head_t1_, flat, cfg_.dropout, train, dropout_rng, c.head_t1);
    out.logits_t2 = head_forward(head_t2_, flat, cfg_.dropout, train, dropout_rng, c.head_t2);
    out.logits_t1.shape = {B, S, kNumClasses};
    out.logits_t2.shape = {B, S, kNumClasses};
  } else {
    out.logits_combined =
        head_forward(head_combined_, flat, cfg_.dropout, train, dropout_rng, c.head_combined);
    out.logits_combined.shape = {B, S, kNumCombined};
  }
  return out;
}

void Model::backward(const ForwardCache& c, const ModelOutput& grads) {
  const int B = static_cast<int>(c.mask.size());
  const int S = cfg_.S;
  const int din = cfg_.head_input_width();

  Tensor dflat({B * S, din});
  if (cfg_.dual_head) {
    Tensor d1 = grads.logits_t1;
    d1.shape = {B * S, kNumClasses};
    Tensor d2 = grads.logits_t2;
    d2.shape = {B * S, kNumClasses};
    dflat += head_backward(head_t1_, c.head_t1, d1);
    dflat += head_backward(head_t2_, c.head_t2, d2);
  } else {
    Tensor dc = grads.logits_combined;
    dc.shape = {B * S, kNumCombined};
    dflat += head_backward(head_combined_, c.head_combined, dc);
  }

  Tensor d_temb({B, S, cfg_.d_model});
  if (cfg_.pe != PEVariant::none) {
    Tensor d_trope({B, S, cfg_.d_model});
    if (cfg_.concat) {
      for (int b = 0; b < B; ++b)
        for (int s = 0; s < S; ++s)
          for (int d = 0; d < cfg_.d_model; ++d) {
            d_temb.at(b, s, d) = dflat.v[(static_cast<std::size_t>(b) * S + s) * din + d];
            d_trope.at(b, s, d) =
                dflat.v[(static_cast<std::size_t>(b) * S + s) * din + cfg_.d_model + d];
          }
    } else {
      d_trope = dflat;
      d_trope.shape = {B, S, cfg_.d_model};
    }

    // AB stack backward
    static const std::vector<NormalizedPosition> no_positions;
    for (int b = 0; b < B; ++b) {
      Tensor dt = slice_token_matrix(d_trope, b);
      for (int l = static_cast<int>(ab_.size()) - 1; l >= 0; --l)
        dt = layer_backward(ab_[l], cfg_.heads, c.ab_caches[b][l], dt);
      store_token_matrix(d_trope, b, dt);
    }

    // ab_in = t_emb (+ pe terms)
    for (std::size_t i = 0; i < d_temb.size(); ++i) d_temb.v[i] += d_trope.v[i];
    if (cfg_.pe == PEVariant::lpe) {
      for (int b = 0; b < B; ++b)
        for (int s = 0; s < S; ++s)
          for (int d = 0; d < cfg_.d_model; ++d)
            lpe_table_->grad.at(c.lpe_idx[b][s], d) += d_trope.at(b, s, d);
    }
  } else {
    d_temb = dflat;
    d_temb.shape = {B, S, cfg_.d_model};
  }

  // TEnc backward
  for (int b = 0; b < B; ++b) {
    Tensor dt = slice_token_matrix(d_temb, b);
    for (int l = static_cast<int>(tenc_.size()) - 1; l >= 0; --l)
      dt = layer_backward(tenc_[l], cfg_.heads, c.tenc_caches[b][l], dt);
    store_token_matrix(d_temb, b, dt);
  }

  // FEN backward
  const int N = B * S;
  Tensor de = d_temb;
  de.shape = {N, cfg_.d_model};
  Tensor dg = Tensor::zeros(c.fc_in.shape);
  nn::linear_backward(c.fc_in, fen_fc_.W->value, de, &dg, fen_fc_.W->grad, fen_fc_.b->grad);

  const int C = c.gap_in.dim(1), H = c.gap_in.dim(2), W = c.gap_in.dim(3);
  Tensor dx({N, C, H, W});
  for (int n = 0; n < N; ++n)
    for (int ch = 0; ch < C; ++ch) {
      const double g = dg.at(n, ch) / (H * W);
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) dx.at(n, ch, h, w) = g;
    }

  for (int i = static_cast<int>(fen_convs_.size()) - 1; i >= 0; --i) {
    const ConvRefs& cr = fen_convs_[i];
    Tensor dln = bchw_to_bhwc(dx);
    Tensor drelu_nhwc = nn::layer_norm_backward(c.conv_ln[i], cr.ln.gamma->value, dln,
                                                cr.ln.gamma->grad, cr.ln.beta->grad);
    Tensor drelu = bhwc_to_bchw(drelu_nhwc);
    Tensor dconv = nn::relu_backward(c.conv_out[i], drelu);
    Tensor din;
    Tensor* din_ptr = nullptr;
    if (i > 0) {
      din = Tensor::zeros(c.conv_in[i].shape);
      din_ptr = &din;
    }
    nn::conv2d_backward(c.conv_in[i], cr.K->value, dconv, 2, 1, din_ptr, cr.K->grad, cr.b->grad);
    if (i > 0) dx = std::move(din);
  }
}

std::vector<std::string> Model::load_matching(const std::map<std::string, Tensor>& tensors) {
  std::vector<std::string> loaded;
  for (const auto& [name, t] : tensors) {
    if (!params_.contains(name)) continue;
    ParamEntry& e = params_.at(name);
    if (e.value.shape != t.shape) continue;
    e.value = t;
    loaded.push_back(name);
  }
  return loaded;
}

void Model::freeze_encoder() {
  params_.set_frozen("fen.", true);
  params_.set_frozen("tenc.", true);
}

}  // namespace textar::model
