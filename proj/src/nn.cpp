#include "textar/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace textar::nn {

namespace {

// rows of a [.., d]-shaped tensor viewed as a matrix
std::size_t leading_rows(const Tensor& t) {
  if (t.rank() < 1) throw std::invalid_argument("expected rank >= 1");
  return t.size() / static_cast<std::size_t>(t.shape.back());
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  if (W.rank() != 2) throw std::invalid_argument("linear: W must be rank 2");
  const int d_in = W.dim(0), d_out = W.dim(1);
  if (x.shape.back() != d_in) throw std::invalid_argument("linear: x/W mismatch");
  if (b.rank() != 1 || b.dim(0) != d_out) throw std::invalid_argument("linear: bad bias");

  const std::size_t n = leading_rows(x);
  std::vector<int> out_shape = x.shape;
  out_shape.back() = d_out;
  Tensor y(out_shape);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = &x.v[r * d_in];
    double* yr = &y.v[r * d_out];
    for (int j = 0; j < d_out; ++j) yr[j] = b.v[j];
    for (int i = 0; i < d_in; ++i) {
      const double xi = xr[i];
      const double* wr = &W.v[static_cast<std::size_t>(i) * d_out];
      for (int j = 0; j < d_out; ++j) yr[j] += xi * wr[j];
    }
  }
  return y;
}

void linear_backward(const Tensor& x, const Tensor& W, const Tensor& dy, Tensor* dx, Tensor& dW,
                     Tensor& db) {
  const int d_in = W.dim(0), d_out = W.dim(1);
  const std::size_t n = leading_rows(x);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = &x.v[r * d_in];
    const double* dyr = &dy.v[r * d_out];
    for (int j = 0; j < d_out; ++j) db.v[j] += dyr[j];
    for (int i = 0; i < d_in; ++i) {
      const double xi = xr[i];
      double* dwr = &dW.v[static_cast<std::size_t>(i) * d_out];
      for (int j = 0; j < d_out; ++j) dwr[j] += xi * dyr[j];
    }
    if (dx) {
      double* dxr = &dx->v[r * d_in];
      for (int i = 0; i < d_in; ++i) {
        const double* wr = &W.v[static_cast<std::size_t>(i) * d_out];
        double acc = 0.0;
        for (int j = 0; j < d_out; ++j) acc += wr[j] * dyr[j];
        dxr[i] += acc;
      }
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& e : y.v) e = e > 0.0 ? e : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) dx.v[i] = x.v[i] > 0.0 ? dy.v[i] : 0.0;
  return dx;
}

Tensor gelu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x.v[i];
    y.v[i] = 0.5 * xi * (1.0 + std::erf(xi * kInvSqrt2));
  }
  return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x.v[i];
    const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
    dx.v[i] = dy.v[i] * (cdf + xi * pdf);
  }
  return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, LayerNormCache* cache,
                  double eps) {
  const int d = x.shape.back();
  if (gamma.size() != static_cast<std::size_t>(d) || beta.size() != static_cast<std::size_t>(d))
    throw std::invalid_argument("layer_norm: affine shape mismatch");
  const std::size_t n = leading_rows(x);
  Tensor y(x.shape);
  Tensor xhat(x.shape);
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = &x.v[r * d];
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += xr[i];
    mean /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) {
      const double c = xr[i] - mean;
      var += c * c;
    }
    var /= d;
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = istd;
    for (int i = 0; i < d; ++i) {
      const double xh = (xr[i] - mean) * istd;
      xhat.v[r * d + i] = xh;
      y.v[r * d + i] = gamma.v[i] * xh + beta.v[i];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma, const Tensor& dy,
                           Tensor& dgamma, Tensor& dbeta) {
  const Tensor& xhat = cache.xhat;
  const int d = xhat.shape.back();
  const std::size_t n = leading_rows(xhat);
  Tensor dx(xhat.shape);
  for (std::size_t r = 0; r < n; ++r) {
    const double* dyr = &dy.v[r * d];
    const double* xhr = &xhat.v[r * d];
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int i = 0; i < d; ++i) {
      const double dxh = dyr[i] * gamma.v[i];
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * xhr[i];
      dgamma.v[i] += dyr[i] * xhr[i];
      dbeta.v[i] += dyr[i];
    }
    const double istd = cache.inv_std[r];
    for (int i = 0; i < d; ++i) {
      const double dxh = dyr[i] * gamma.v[i];
      dx.v[r * d + i] = istd * (dxh - sum_dxhat / d - xhr[i] * sum_dxhat_xhat / d);
    }
  }
  return dx;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride, int pad) {
  if (x.rank() != 4 || kernel.rank() != 4) throw std::invalid_argument("conv2d: rank mismatch");
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != Cin) throw std::invalid_argument("conv2d: channel mismatch");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");

  Tensor y({B, Cout, Ho, Wo});
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = bias.v[co];
          for (int ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= W) continue;
                acc += x.at(b, ci, iy, ix) * kernel.at(co, ci, ky, kx);
              }
            }
          y.at(b, co, oy, ox) = acc;
        }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy, int stride, int pad,
                     Tensor* dx, Tensor& dkernel, Tensor& dbias) {
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const int Ho = dy.dim(2), Wo = dy.dim(3);
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const double g = dy.at(b, co, oy, ox);
          dbias.v[co] += g;
          for (int ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= W) continue;
                dkernel.at(co, ci, ky, kx) += g * x.at(b, ci, iy, ix);
                if (dx) dx->at(b, ci, iy, ix) += g * kernel.at(co, ci, ky, kx);
              }
            }
        }
}

Tensor max_pool2d(const Tensor& x, int k, int stride, std::vector<std::size_t>* argmax) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = (H - k) / stride + 1;
  const int Wo = (W - k) / stride + 1;
  Tensor y({B, C, Ho, Wo});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride + ky, ix = ox * stride + kx;
              const std::size_t idx =
                  ((static_cast<std::size_t>(b) * C + c) * H + iy) * W + ix;
              if (x.v[idx] > best) {
                best = x.v[idx];
                best_idx = idx;
              }
            }
          y.v[o] = best;
          if (argmax) (*argmax)[o] = best_idx;
        }
  return y;
}

Tensor max_pool2d_backward(const Tensor& x, const Tensor& dy,
                           const std::vector<std::size_t>& argmax) {
  Tensor dx(x.shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx.v[argmax[o]] += dy.v[o];
  return dx;
}

Tensor dropout(const Tensor& x, double rate, bool train, Rng& rng, Tensor* mask) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!train || rate == 0.0) {
    if (mask) *mask = Tensor::full(x.shape, 1.0);
    return x;
  }
  const double scale = 1.0 / (1.0 - rate);
  Tensor m(x.shape);
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.v[i] = rng.uniform() < rate ? 0.0 : scale;
    y.v[i] = x.v[i] * m.v[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

Tensor dropout_backward(const Tensor& dy, const Tensor& mask) {
  Tensor dx(dy.shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.v[i] = dy.v[i] * mask.v[i];
  return dx;
}

Tensor softmax_temperature(const Tensor& x, double tau, int axis) {
  if (tau <= 0.0) throw std::invalid_argument("softmax: tau must be positive");
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank()) throw std::invalid_argument("softmax: bad axis");
  const int n = x.dim(axis);
  std::size_t inner = 1;
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t outer = x.size() / (inner * n);

  Tensor y(x.shape);
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t b = 0; b < inner; ++b) {
      const std::size_t base = a * n * inner + b;
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) mx = std::max(mx, x.v[base + i * inner]);
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
        const double e = std::exp((x.v[base + i * inner] - mx) / tau);
        y.v[base + i * inner] = e;
        sum += e;
      }
      for (int i = 0; i < n; ++i) y.v[base + i * inner] /= sum;
    }
  return y;
}

double cross_entropy_from_logits(const Tensor& logits, const std::vector<int>& labels,
                                 const std::vector<bool>& mask,
                                 const std::vector<double>& class_weights, double tau,
                                 Tensor* dlogits) {
  if (tau <= 0.0) throw std::invalid_argument("cross_entropy: tau must be positive");
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be [N,C]");
  const int N = logits.dim(0), C = logits.dim(1);
  if (labels.size() != static_cast<std::size_t>(N) || mask.size() != static_cast<std::size_t>(N))
    throw std::invalid_argument("cross_entropy: label/mask size mismatch");
  if (!class_weights.empty() && class_weights.size() != static_cast<std::size_t>(C))
    throw std::invalid_argument("cross_entropy: class weight count mismatch");

  if (dlogits) *dlogits = Tensor::zeros(logits.shape);

  // first pass: per-token weighted NLL and total weight
  double total = 0.0, weight_sum = 0.0;
  std::vector<double> probs(static_cast<std::size_t>(N) * C, 0.0);
  std::vector<double> token_w(N, 0.0);
  for (int i = 0; i < N; ++i) {
    if (!mask[i]) continue;
    const int y = labels[i];
    if (y < 0 || y >= C) throw std::invalid_argument("cross_entropy: label out of range");
    const double* lr = &logits.v[static_cast<std::size_t>(i) * C];
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < C; ++c) mx = std::max(mx, lr[c]);
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
      const double e = std::exp((lr[c] - mx) / tau);
      probs[static_cast<std::size_t>(i) * C + c] = e;
      sum += e;
    }
    double logp_y = (lr[y] - mx) / tau - std::log(sum);
    for (int c = 0; c < C; ++c) probs[static_cast<std::size_t>(i) * C + c] /= sum;
    const double w = class_weights.empty() ? 1.0 : class_weights[y];
    token_w[i] = w;
    total += -w * logp_y;
    weight_sum += w;
  }
  if (weight_sum == 0.0) return 0.0;  // all-masked: zero loss, zero grads

  if (dlogits) {
    for (int i = 0; i < N; ++i) {
      if (!mask[i] || token_w[i] == 0.0) continue;
      const double scale = token_w[i] / (tau * weight_sum);
      for (int c = 0; c < C; ++c) {
        const double p = probs[static_cast<std::size_t>(i) * C + c];
        dlogits->v[static_cast<std::size_t>(i) * C + c] =
            scale * (p - (c == labels[i] ? 1.0 : 0.0));
      }
    }
  }
  return total / weight_sum;
}

// ---------------------------------------------------------------------------
// RoPE-Mixed
// ---------------------------------------------------------------------------

RopeFrequencies rope_axial_init(int heads, int head_dim) {
  if (head_dim % 2 != 0) throw std::invalid_argument("rope: head_dim must be even");
  const int pairs = head_dim / 2;
  RopeFrequencies f{Tensor({heads, pairs}), Tensor({heads, pairs})};
  const int half = (pairs + 1) / 2;
  const double lo = 2.0 * M_PI * 1.0, hi = 2.0 * M_PI * 20.0;
  auto band = [&](int j, int n) {
    if (n <= 1) return lo;
    return lo * std::pow(hi / lo, static_cast<double>(j) / (n - 1));
  };
  for (int h = 0; h < heads; ++h)
    for (int p = 0; p < pairs; ++p) {
      if (p < half)
        f.fx.at(h, p) = band(p, half);
      else
        f.fy.at(h, p) = band(p - half, pairs - half);
    }
  return f;
}

Tensor rope_mixed_rotate(const Tensor& x, const std::vector<NormalizedPosition>& positions,
                         const Tensor& fx, const Tensor& fy) {
  if (x.rank() != 3) throw std::invalid_argument("rope: x must be [S, heads, head_dim]");
  const int S = x.dim(0), heads = x.dim(1), hd = x.dim(2);
  if (hd % 2 != 0) throw std::invalid_argument("rope: head_dim must be even");
  const int pairs = hd / 2;
  if (positions.size() != static_cast<std::size_t>(S))
    throw std::invalid_argument("rope: position count mismatch");

  Tensor y(x.shape);
  for (int i = 0; i < S; ++i) {
    const double px = positions[i].x, py = positions[i].y;
    for (int h = 0; h < heads; ++h)
      for (int p = 0; p < pairs; ++p) {
        const double theta = fx.at(h, p) * px + fy.at(h, p) * py;
        const double c = std::cos(theta), s = std::sin(theta);
        const double x0 = x.at(i, h, 2 * p), x1 = x.at(i, h, 2 * p + 1);
        y.at(i, h, 2 * p) = x0 * c - x1 * s;
        y.at(i, h, 2 * p + 1) = x0 * s + x1 * c;
      }
  }
  return y;
}

Tensor rope_mixed_rotate_backward(const Tensor& x, const std::vector<NormalizedPosition>& positions,
                                  const Tensor& fx, const Tensor& fy, const Tensor& dy, Tensor& dfx,
                                  Tensor& dfy) {
  const int S = x.dim(0), heads = x.dim(1), hd = x.dim(2);
  const int pairs = hd / 2;
  Tensor dx(x.shape);
  for (int i = 0; i < S; ++i) {
    const double px = positions[i].x, py = positions[i].y;
    for (int h = 0; h < heads; ++h)
      for (int p = 0; p < pairs; ++p) {
        const double theta = fx.at(h, p) * px + fy.at(h, p) * py;
        const double c = std::cos(theta), s = std::sin(theta);
        const double x0 = x.at(i, h, 2 * p), x1 = x.at(i, h, 2 * p + 1);
        const double g0 = dy.at(i, h, 2 * p), g1 = dy.at(i, h, 2 * p + 1);
        dx.at(i, h, 2 * p) = g0 * c + g1 * s;
        dx.at(i, h, 2 * p + 1) = -g0 * s + g1 * c;
        const double dtheta = g0 * (-x0 * s - x1 * c) + g1 * (x0 * c - x1 * s);
        dfx.at(h, p) += dtheta * px;
        dfy.at(h, p) += dtheta * py;
      }
  }
  return dx;
}

Tensor ape_sinusoidal(const std::vector<NormalizedPosition>& positions, int d_model) {
  if (d_model % 4 != 0) throw std::invalid_argument("ape: d_model must be divisible by 4");
  const int S = static_cast<int>(positions.size());
  const int quarter = d_model / 4;
  const double lo = 2.0 * M_PI * 1.0, hi = 2.0 * M_PI * 20.0;
  Tensor y({S, d_model});
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < quarter; ++j) {
      const double omega =
          quarter <= 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(j) / (quarter - 1));
      y.at(i, 2 * j) = std::sin(omega * positions[i].x);
      y.at(i, 2 * j + 1) = std::cos(omega * positions[i].x);
      y.at(i, d_model / 2 + 2 * j) = std::sin(omega * positions[i].y);
      y.at(i, d_model / 2 + 2 * j + 1) = std::cos(omega * positions[i].y);
    }
  return y;
}

// ---------------------------------------------------------------------------
// Multi-head attention
// ---------------------------------------------------------------------------

namespace {

Tensor reshape_heads(const Tensor& x, int heads) {  // [S, d] -> [S, heads, d/heads]
  const int S = x.dim(0), d = x.dim(1);
  Tensor y = x;
  y.shape = {S, heads, d / heads};
  return y;
}

Tensor flatten_heads(const Tensor& x) {  // [S, heads, hd] -> [S, heads*hd]
  Tensor y = x;
  y.shape = {x.dim(0), x.dim(1) * x.dim(2)};
  return y;
}

}  // namespace

Tensor multi_head_attention(const Tensor& x, int heads, const std::vector<bool>& mask,
                            const AttentionParams& p,
                            const std::vector<NormalizedPosition>& positions,
                            AttentionCache* cache) {
  if (x.rank() != 2) throw std::invalid_argument("attention: x must be [S, d]");
  const int S = x.dim(0), d = x.dim(1);
  if (d % heads != 0) throw std::invalid_argument("attention: d_model not divisible by heads");
  if (mask.size() != static_cast<std::size_t>(S))
    throw std::invalid_argument("attention: mask size mismatch");
  const int hd = d / heads;
  const bool rope = p.rope_fx != nullptr;

  Tensor q = reshape_heads(linear(x, p.wq->value, p.bq->value), heads);
  Tensor k = reshape_heads(linear(x, p.wk->value, p.bk->value), heads);
  Tensor v = reshape_heads(linear(x, p.wv->value, p.bv->value), heads);

  Tensor q_pre, k_pre;
  if (rope) {
    q_pre = q;
    k_pre = k;
    q = rope_mixed_rotate(q_pre, positions, p.rope_fx->value, p.rope_fy->value);
    k = rope_mixed_rotate(k_pre, positions, p.rope_fx->value, p.rope_fy->value);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor attn({heads, S, S});
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < S; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < S; ++j) {
        if (!mask[j]) continue;
        double dot = 0.0;
        for (int c = 0; c < hd; ++c) dot += q.at(i, h, c) * k.at(j, h, c);
        attn.at(h, i, j) = dot * scale;
        mx = std::max(mx, attn.at(h, i, j));
      }
      // no unmasked keys: all weights stay zero, the query outputs zeros
      if (!std::isfinite(mx)) {
        for (int j = 0; j < S; ++j) attn.at(h, i, j) = 0.0;
        continue;
      }
      double sum = 0.0;
      for (int j = 0; j < S; ++j) {
        if (!mask[j]) {
          attn.at(h, i, j) = 0.0;
          continue;
        }
        attn.at(h, i, j) = std::exp(attn.at(h, i, j) - mx);
        sum += attn.at(h, i, j);
      }
      for (int j = 0; j < S; ++j) attn.at(h, i, j) /= sum;
    }

  Tensor ctx({S, d});
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        const double a = attn.at(h, i, j);
        if (a == 0.0) continue;
        for (int c = 0; c < hd; ++c) ctx.at(i, h * hd + c) += a * v.at(j, h, c);
      }

  Tensor y = linear(ctx, p.wo->value, p.bo->value);

  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->q_pre = std::move(q_pre);
    cache->k_pre = std::move(k_pre);
    cache->attn = std::move(attn);
    cache->ctx = std::move(ctx);
    cache->mask = mask;
    cache->positions = positions;
  }
  return y;
}

Tensor multi_head_attention_backward(const AttentionCache& cache, int heads,
                                     const AttentionParams& p, const Tensor& dy) {
  const int S = cache.x.dim(0), d = cache.x.dim(1);
  const int hd = d / heads;
  const bool rope = p.rope_fx != nullptr;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // output projection
  Tensor dctx({S, d});
  linear_backward(cache.ctx, p.wo->value, dy, &dctx, p.wo->grad, p.bo->grad);

  // context = attn @ v
  Tensor dattn({heads, S, S});
  Tensor dv({S, heads, hd});
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        const double a = cache.attn.at(h, i, j);
        double acc = 0.0;
        for (int c = 0; c < hd; ++c) {
          const double g = dctx.at(i, h * hd + c);
          acc += g * cache.v.at(j, h, c);
          dv.at(j, h, c) += a * g;
        }
        dattn.at(h, i, j) = acc;
      }

  // softmax rows (rows of zeros backprop to zero)
  Tensor dlogits({heads, S, S});
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < S; ++i) {
      double dot = 0.0;
      for (int j = 0; j < S; ++j) dot += cache.attn.at(h, i, j) * dattn.at(h, i, j);
      for (int j = 0; j < S; ++j)
        dlogits.at(h, i, j) = cache.attn.at(h, i, j) * (dattn.at(h, i, j) - dot);
    }

  // logits = scale * q . k
  Tensor dq({S, heads, hd});
  Tensor dk({S, heads, hd});
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        const double g = dlogits.at(h, i, j) * scale;
        if (g == 0.0) continue;
        for (int c = 0; c < hd; ++c) {
          dq.at(i, h, c) += g * cache.k.at(j, h, c);
          dk.at(j, h, c) += g * cache.q.at(i, h, c);
        }
      }

  if (rope) {
    dq = rope_mixed_rotate_backward(cache.q_pre, cache.positions, p.rope_fx->value,
                                    p.rope_fy->value, dq, p.rope_fx->grad, p.rope_fy->grad);
    dk = rope_mixed_rotate_backward(cache.k_pre, cache.positions, p.rope_fx->value,
                                    p.rope_fy->value, dk, p.rope_fx->grad, p.rope_fy->grad);
  }

  Tensor dx({S, d});
  linear_backward(cache.x, p.wq->value, flatten_heads(dq), &dx, p.wq->grad, p.bq->grad);
  linear_backward(cache.x, p.wk->value, flatten_heads(dk), &dx, p.wk->grad, p.bk->grad);
  linear_backward(cache.x, p.wv->value, flatten_heads(dv), &dx, p.wv->grad, p.bv->grad);
  return dx;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

GradCheckResult finite_difference_check(ParamStore& params, const std::function<double()>& loss_fn,
                                        double epsilon, Rng& rng, int coords_per_param) {
  loss_fn();  // fills analytic grads
  std::map<std::string, Tensor> analytic;
  for (auto& [name, e] : params) analytic.emplace(name, e.grad);

  GradCheckResult result;
  for (auto& [name, e] : params) {
    const std::size_t n = e.value.size();
    if (n == 0) continue;
    const int count = std::min<std::size_t>(coords_per_param, n);
    for (int c = 0; c < count; ++c) {
      const std::size_t idx = rng.uniform_int(n);
      const double saved = e.value.v[idx];
      e.value.v[idx] = saved + epsilon;
      const double fp = loss_fn();
      e.value.v[idx] = saved - epsilon;
      const double fm = loss_fn();
      e.value.v[idx] = saved;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic.at(name).v[idx];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
      ++result.coords_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
      }
    }
  }
  loss_fn();  // leave grads consistent with the unperturbed params
  return result;
}

Tensor init_uniform(std::vector<int> shape, double limit, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.v) x = rng.uniform(-limit, limit);
  return t;
}

Tensor init_kaiming(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double stddev = std::sqrt(2.0 / fan_in);
  for (double& x : t.v) x = rng.normal(0.0, stddev);
  return t;
}

}  // namespace textar::nn
