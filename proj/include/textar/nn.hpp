#pragma once

#include <functional>
#include <string>
#include <vector>

#include "textar/params.hpp"
#include "textar/rng.hpp"
#include "textar/tensor.hpp"
#include "textar/types.hpp"

namespace textar::nn {

// ---------------------------------------------------------------------------
// Dense / elementwise primitives. Each op ships its hand-derived backward;
// forward caches are whatever the backward needs, held by the caller.
// ---------------------------------------------------------------------------

// x: [rows.., d_in] treated as a matrix [N, d_in]; W: [d_in, d_out]; b: [d_out]
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);
// dx is optional (nullptr skips input gradient); dW/db are accumulated into.
void linear_backward(const Tensor& x, const Tensor& W, const Tensor& dy, Tensor* dx, Tensor& dW,
                     Tensor& db);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

// Layer norm over the last axis, with affine params gamma/beta of shape [d].
struct LayerNormCache {
  Tensor xhat;                  // normalized pre-affine values
  std::vector<double> inv_std;  // one per normalized row
};
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, LayerNormCache* cache,
                  double eps = 1e-5);
Tensor layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma, const Tensor& dy,
                           Tensor& dgamma, Tensor& dbeta);

// x: [B, Cin, H, W]; kernel: [Cout, Cin, kh, kw]; bias: [Cout]
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride, int pad);
void conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy, int stride, int pad,
                     Tensor* dx, Tensor& dkernel, Tensor& dbias);

// kernel k x k, stride defaults to k. argmax holds flat input indices.
Tensor max_pool2d(const Tensor& x, int k, int stride, std::vector<std::size_t>* argmax);
Tensor max_pool2d_backward(const Tensor& x, const Tensor& dy,
                           const std::vector<std::size_t>& argmax);

// Inverted dropout. Train mode samples a keep mask (cached for backward);
// eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng, Tensor* mask);
Tensor dropout_backward(const Tensor& dy, const Tensor& mask);

// softmax(x / tau) along `axis`, max-stabilized.
Tensor softmax_temperature(const Tensor& x, double tau, int axis);

// Masked mean cross-entropy over logits[N, C] at temperature tau, with
// optional per-class weights (empty = unweighted). Returns the scalar loss;
// dlogits (if non-null) receives d loss / d logits. All-masked input is
// defined as zero loss with zero gradients.
double cross_entropy_from_logits(const Tensor& logits, const std::vector<int>& labels,
                                 const std::vector<bool>& mask,
                                 const std::vector<double>& class_weights, double tau,
                                 Tensor* dlogits);

// ---------------------------------------------------------------------------
// Positional mechanisms
// ---------------------------------------------------------------------------

// Learnable 2D rotary frequencies: per head, head_dim/2 channel pairs, each
// with an x and a y frequency (radians per unit of normalized position).
struct RopeFrequencies {
  Tensor fx;  // [heads, pairs]
  Tensor fy;  // [heads, pairs]
};

// Axial initialization: half the pairs carry x-only frequencies, half y-only,
// on a geometric band from 2*pi*1 to 2*pi*20 over normalized coordinates.
RopeFrequencies rope_axial_init(int heads, int head_dim);

// x: [S, heads, head_dim]; rotates each consecutive channel pair of token i
// by angle fx*p_i.x + fy*p_i.y. Pure rotation; head_dim must be even.
Tensor rope_mixed_rotate(const Tensor& x, const std::vector<NormalizedPosition>& positions,
                         const Tensor& fx, const Tensor& fy);
// Gradients w.r.t. x (returned) plus accumulation into dfx/dfy.
Tensor rope_mixed_rotate_backward(const Tensor& x, const std::vector<NormalizedPosition>& positions,
                                  const Tensor& fx, const Tensor& fy, const Tensor& dy, Tensor& dfx,
                                  Tensor& dfy);

// Fixed 2D sinusoidal embedding: [S, d_model], d_model divisible by 4
// (half the channels encode x, half y, sin/cos interleaved).
Tensor ape_sinusoidal(const std::vector<NormalizedPosition>& positions, int d_model);

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

struct AttentionParams {
  ParamEntry* wq;
  ParamEntry* wk;
  ParamEntry* wv;
  ParamEntry* wo;
  ParamEntry* bq;
  ParamEntry* bk;
  ParamEntry* bv;
  ParamEntry* bo;
  // non-null enables RoPE-Mixed rotation of q and k
  ParamEntry* rope_fx = nullptr;
  ParamEntry* rope_fy = nullptr;
};

struct AttentionCache {
  Tensor x;             // input [S, d]
  Tensor q, k, v;       // [S, heads, head_dim] (q,k post-rotation)
  Tensor q_pre, k_pre;  // pre-rotation copies (only when rope enabled)
  Tensor attn;          // [heads, S, S] softmax weights
  Tensor ctx;           // [S, d] concatenated head outputs pre-projection
  std::vector<bool> mask;
  std::vector<NormalizedPosition> positions;
};

// Standard scaled dot-product multi-head self-attention over one window.
// mask[j]=false keys get -inf logits; a query with no unmasked keys outputs
// zeros. positions may be empty when rope is disabled.
Tensor multi_head_attention(const Tensor& x, int heads, const std::vector<bool>& mask,
                            const AttentionParams& p,
                            const std::vector<NormalizedPosition>& positions,
                            AttentionCache* cache);
Tensor multi_head_attention_backward(const AttentionCache& cache, int heads,
                                     const AttentionParams& p, const Tensor& dy);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t coords_checked = 0;
  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// loss_fn must (re)compute the scalar loss and fill analytic grads in `params`
// as a side effect of evaluation. Central differences are taken on a random
// subsample of up to `coords_per_param` coordinates per tensor.
GradCheckResult finite_difference_check(ParamStore& params, const std::function<double()>& loss_fn,
                                        double epsilon, Rng& rng, int coords_per_param = 4);

// Initialization helpers (all draw from the caller's rng).
Tensor init_uniform(std::vector<int> shape, double limit, Rng& rng);
Tensor init_kaiming(std::vector<int> shape, int fan_in, Rng& rng);

}  // namespace textar::nn
