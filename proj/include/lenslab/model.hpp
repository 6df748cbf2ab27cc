#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lenslab/common.hpp"
#include "lenslab/gemm.hpp"

// Decoder-only transformer, fully instrumented: pre-norm blocks, RMS norm,
// learned positional embeddings, no biases, tanh-approximate GELU. Templated
// on the scalar so gradient checks can run the whole stack in double.

namespace lenslab {

inline constexpr double kRmsEps = 1e-5;

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 128;
  int n_layers = 8;
  int n_heads = 4;
  int d_ff = 512;
  int max_seq_len = 128;
  uint64_t seed = 0;

  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    if (vocab_size < 4) throw ConfigError("vocab_size must be >= 4 (reserved tokens)");
    if (n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("d_model must be divisible by n_heads");
    if (n_layers < 2) throw ConfigError("n_layers must be >= 2");
    if (max_seq_len < 64) throw ConfigError("max_seq_len must be >= 64");
    if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
  }

  bool operator==(const ModelConfig&) const = default;
};

template <typename S>
struct LayerParamsT {
  AVec<S> ln1_g;  // (d)
  Mat<S> wq, wk, wv, wo;  // (d x d)
  AVec<S> ln2_g;  // (d)
  Mat<S> w1;  // (d x d_ff)
  Mat<S> w2;  // (d_ff x d)
};

template <typename S>
struct ParametersT {
  ModelConfig cfg;
  Mat<S> tok_emb;  // (V x d)
  Mat<S> pos_emb;  // (max_seq x d)
  std::vector<LayerParamsT<S>> layers;
  AVec<S> lnf_g;  // (d)
  Mat<S> w_u;  // (d x V), the unembedding

  static ParametersT zeros(const ModelConfig& cfg) {
    ParametersT p;
    p.cfg = cfg;
    p.tok_emb = Mat<S>(cfg.vocab_size, cfg.d_model);
    p.pos_emb = Mat<S>(cfg.max_seq_len, cfg.d_model);
    p.layers.resize(cfg.n_layers);
    for (auto& l : p.layers) {
      l.ln1_g.assign(cfg.d_model, S(1));
      l.wq = Mat<S>(cfg.d_model, cfg.d_model);
      l.wk = Mat<S>(cfg.d_model, cfg.d_model);
      l.wv = Mat<S>(cfg.d_model, cfg.d_model);
      l.wo = Mat<S>(cfg.d_model, cfg.d_model);
      l.ln2_g.assign(cfg.d_model, S(1));
      l.w1 = Mat<S>(cfg.d_model, cfg.d_ff);
      l.w2 = Mat<S>(cfg.d_ff, cfg.d_model);
    }
    p.lnf_g.assign(cfg.d_model, S(1));
    p.w_u = Mat<S>(cfg.d_model, cfg.vocab_size);
    return p;
  }

  // N(0, 0.02) weights, unit gains, from the "init" stream of cfg.seed.
  static ParametersT init(const ModelConfig& cfg) {
    cfg.validate();
    ParametersT p = zeros(cfg);
    auto rng = stream_rng(cfg.seed, "init");
    std::normal_distribution<double> nd(0.0, 0.02);
    auto fill = [&](Mat<S>& m) {
      for (auto& x : m.data) x = static_cast<S>(nd(rng));
    };
    fill(p.tok_emb);
    fill(p.pos_emb);
    for (auto& l : p.layers) {
      fill(l.wq);
      fill(l.wk);
      fill(l.wv);
      fill(l.wo);
      fill(l.w1);
      fill(l.w2);
    }
    fill(p.w_u);
    return p;
  }
};

using Parameters = ParametersT<float>;

// Visits every parameter tensor (as its flat storage) in declaration order;
// this order is the checkpoint serialization order and the optimizer's slot
// order.
template <typename S, typename F>
void visit_tensors(ParametersT<S>& p, F&& f) {
  f(p.tok_emb.data);
  f(p.pos_emb.data);
  for (auto& l : p.layers) {
    f(l.ln1_g);
    f(l.wq.data);
    f(l.wk.data);
    f(l.wv.data);
    f(l.wo.data);
    f(l.ln2_g);
    f(l.w1.data);
    f(l.w2.data);
  }
  f(p.lnf_g);
  f(p.w_u.data);
}

template <typename S, typename F>
void visit_tensors(const ParametersT<S>& p, F&& f) {
  visit_tensors(const_cast<ParametersT<S>&>(p), [&](auto& v) { f(std::as_const(v)); });
}

// ---------------------------------------------------------------------------
// Elementwise pieces
// ---------------------------------------------------------------------------

namespace nn {

template <typename S>
S gelu(S x) {
  const S c0 = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
  const S c1 = static_cast<S>(0.044715);
  return S(0.5) * x * (S(1) + std::tanh(c0 * (x + c1 * x * x * x)));
}

template <typename S>
S gelu_grad(S x) {
  const S c0 = static_cast<S>(0.7978845608028654);
  const S c1 = static_cast<S>(0.044715);
  const S u = c0 * (x + c1 * x * x * x);
  const S th = std::tanh(u);
  const S sech2 = S(1) - th * th;
  return S(0.5) * (S(1) + th) + S(0.5) * x * sech2 * c0 * (S(1) + S(3) * c1 * x * x);
}

// Row-wise y = g .* x / rms(x); stores each row's rms in r.
template <typename S>
void rmsnorm_rows(const Mat<S>& x, const AVec<S>& g, Mat<S>& y, std::vector<S>& r) {
  const int d = x.cols;
  y.rows = x.rows;
  y.cols = d;
  y.data.resize(x.size());
  r.resize(x.rows);
  for (int i = 0; i < x.rows; ++i) {
    const S* xi = x.row(i);
    S* yi = y.row(i);
    S ss = S(0);
    for (int j = 0; j < d; ++j) ss += xi[j] * xi[j];
    const S rms = std::sqrt(ss / S(d) + static_cast<S>(kRmsEps));
    r[i] = rms;
    for (int j = 0; j < d; ++j) yi[j] = g[j] * xi[j] / rms;
  }
}

// Backward of rmsnorm_rows. Accumulates dg; writes dx (not accumulated).
template <typename S>
void rmsnorm_backward(const Mat<S>& x, const AVec<S>& g, const std::vector<S>& r,
                      const Mat<S>& dy, Mat<S>& dx, AVec<S>& dg) {
  const int d = x.cols;
  dx.rows = x.rows;
  dx.cols = d;
  dx.data.resize(x.size());
  for (int i = 0; i < x.rows; ++i) {
    const S* xi = x.row(i);
    const S* dyi = dy.row(i);
    S* dxi = dx.row(i);
    const S rms = r[i];
    S s = S(0);
    for (int j = 0; j < d; ++j) {
      s += g[j] * dyi[j] * xi[j];
      dg[j] += dyi[j] * xi[j] / rms;
    }
    const S k = s / (S(d) * rms * rms * rms);
    for (int j = 0; j < d; ++j) dxi[j] = g[j] * dyi[j] / rms - xi[j] * k;
  }
}

template <typename S>
void softmax_row(S* x, int n) {
  S mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  S sum = S(0);
  for (int i = 0; i < n; ++i) sum += (x[i] = std::exp(x[i] - mx));
  for (int i = 0; i < n; ++i) x[i] /= sum;
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Full-sequence forward with activation capture
// ---------------------------------------------------------------------------

template <typename S>
struct LayerAct {
  Mat<S> xn1;  // (P x d) post first norm
  std::vector<S> r1;  // (P) rms denominators
  Mat<S> q, k, v;  // (P x d)
  std::vector<Mat<S>> alpha;  // per head, (P x P) causal softmax rows
  Mat<S> ctx;  // (P x d) concatenated head outputs
  Mat<S> xm;  // (P x d) post-attention residual (input to second norm)
  Mat<S> xn2;  // (P x d) post second norm
  std::vector<S> r2;  // (P)
  Mat<S> a1;  // (P x d_ff) pre-GELU
  Mat<S> gel;  // (P x d_ff) post-GELU
};

// Everything one forward pass produces: hidden states h[0..L], per-layer
// stashes for backprop, attention tensors, final norm, logits.
template <typename S>
struct ForwardAct {
  int P = 0;
  std::vector<Mat<S>> h;  // L+1 entries, each (P x d); h[0] = embeddings
  std::vector<LayerAct<S>> layer;
  Mat<S> xnf;  // (P x d) post final norm
  std::vector<S> rf;  // (P)
  Mat<S> logits;  // (P x V)

  // attention row accessor: weights for query position qp at (layer, head)
  std::span<const S> attn_row(int l, int head, int qp) const {
    const Mat<S>& a = layer[l].alpha[head];
    return {a.row(qp), static_cast<size_t>(a.cols)};
  }
};

namespace detail {

template <typename S>
void check_tokens(const ModelConfig& cfg, std::span<const int> toks) {
  if (toks.empty()) throw std::invalid_argument("empty token sequence");
  if (static_cast<int>(toks.size()) > cfg.max_seq_len)
    throw std::invalid_argument("sequence length " + std::to_string(toks.size()) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  for (int t : toks)
    if (t < 0 || t >= cfg.vocab_size) throw std::invalid_argument("token id out of range");
}

template <typename S>
void check_finite(const Mat<S>& m, int layer_idx) {
  for (S x : m.data)
    if (!std::isfinite(static_cast<double>(x)))
      throw std::runtime_error("non-finite activation at layer " + std::to_string(layer_idx));
}

// copies column block [h*dh, (h+1)*dh) of src into dst (P x dh)
template <typename S>
void take_head(const Mat<S>& src, int head, int dh, Mat<S>& dst) {
  dst.rows = src.rows;
  dst.cols = dh;
  dst.data.resize(static_cast<size_t>(src.rows) * dh);
  for (int i = 0; i < src.rows; ++i) {
    const S* s = src.row(i) + head * dh;
    std::copy(s, s + dh, dst.row(i));
  }
}

template <typename S>
void put_head(const Mat<S>& src, int head, int dh, Mat<S>& dst) {
  for (int i = 0; i < src.rows; ++i) {
    const S* s = src.row(i);
    std::copy(s, s + dh, dst.row(i) + head * dh);
  }
}

}  // namespace detail

template <typename S>
void forward(const ParametersT<S>& p, std::span<const int> toks, ForwardAct<S>& act) {
  const ModelConfig& cfg = p.cfg;
  detail::check_tokens<S>(cfg, toks);
  const int P = static_cast<int>(toks.size());
  const int d = cfg.d_model, H = cfg.n_heads, dh = cfg.head_dim();
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  act.P = P;
  act.h.resize(cfg.n_layers + 1);
  act.layer.resize(cfg.n_layers);

  Mat<S>& h0 = act.h[0];
  h0 = Mat<S>(P, d);
  for (int i = 0; i < P; ++i) {
    const S* te = p.tok_emb.row(toks[i]);
    const S* pe = p.pos_emb.row(i);
    S* out = h0.row(i);
    for (int j = 0; j < d; ++j) out[j] = te[j] + pe[j];
  }

  Mat<S> qh, kh, vh, scores, ctxh;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerParamsT<S>& lp = p.layers[l];
    LayerAct<S>& la = act.layer[l];
    const Mat<S>& x = act.h[l];

    nn::rmsnorm_rows(x, lp.ln1_g, la.xn1, la.r1);
    gemm(la.xn1, lp.wq, la.q);
    gemm(la.xn1, lp.wk, la.k);
    gemm(la.xn1, lp.wv, la.v);

    la.alpha.resize(H);
    la.ctx = Mat<S>(P, d);
    for (int head = 0; head < H; ++head) {
      detail::take_head(la.q, head, dh, qh);
      detail::take_head(la.k, head, dh, kh);
      detail::take_head(la.v, head, dh, vh);
      gemm_nt(qh, kh, scores);
      Mat<S>& a = la.alpha[head];
      a = Mat<S>(P, P);
      for (int i = 0; i < P; ++i) {
        S* srow = scores.row(i);
        for (int j = 0; j <= i; ++j) srow[j] *= scale;
        nn::softmax_row(srow, i + 1);  // causal: keys 0..i only
        S* arow = a.row(i);
        std::copy(srow, srow + i + 1, arow);  // tail stays zero
      }
      gemm(a, vh, ctxh);
      detail::put_head(ctxh, head, dh, la.ctx);
    }

    gemm(la.ctx, lp.wo, la.xm);
    for (size_t i = 0; i < la.xm.data.size(); ++i) la.xm.data[i] += x.data[i];

    nn::rmsnorm_rows(la.xm, lp.ln2_g, la.xn2, la.r2);
    gemm(la.xn2, lp.w1, la.a1);
    la.gel.rows = la.a1.rows;
    la.gel.cols = la.a1.cols;
    la.gel.data.resize(la.a1.size());
    for (size_t i = 0; i < la.a1.data.size(); ++i) la.gel.data[i] = nn::gelu(la.a1.data[i]);
    Mat<S>& xout = act.h[l + 1];
    gemm(la.gel, lp.w2, xout);
    for (size_t i = 0; i < xout.data.size(); ++i) xout.data[i] += la.xm.data[i];
    detail::check_finite(xout, l);
  }

  nn::rmsnorm_rows(act.h[cfg.n_layers], p.lnf_g, act.xnf, act.rf);
  gemm(act.xnf, p.w_u, act.logits);
}

// ---------------------------------------------------------------------------
// Generation with KV cache and full capture
// ---------------------------------------------------------------------------

// Record of one sampled continuation with every internal the analyses read.
// Positions are 0-based: the prompt occupies 0..N-1 and generated token y_t
// (t = 1..T) sits at position N+t-1.
//
//   hidden[i]      : (L+1 x d) hidden states at position N-1+i, i = 0..T
//   step_logits[i] : raw final logits at position N-1+i, i = 0..T-1; the
//                    distribution y_{i+1} was sampled from (pre-temperature)
//   attn rows      : for step t, the full softmax row of the query at
//                    position N+t-1 (the one holding y_t): keys 0..N+t-1,
//                    self weight last
struct GenerationRecord {
  std::vector<int> prompt;
  int context_len = 0;  // N
  std::vector<int> generated;  // y_1..y_T
  double temperature = 0.0;
  uint64_t seed = 0;
  int n_layers = 0, n_heads = 0, d_model = 0, vocab_size = 0;

  std::vector<Mat<float>> hidden;
  std::vector<std::vector<float>> step_logits;
  std::vector<std::vector<std::vector<float>>> attn;  // [t-1][l*H+h] -> row

  int gen_len() const { return static_cast<int>(generated.size()); }

  // hidden states at sequence position pos (valid N-1 .. N-1+T), one row per layer
  const Mat<float>& hidden_at(int pos) const {
    const int i = pos - (context_len - 1);
    if (i < 0 || i >= static_cast<int>(hidden.size()))
      throw std::out_of_range("no hidden states stored at position " + std::to_string(pos));
    return hidden[static_cast<size_t>(i)];
  }

  const std::vector<float>& logits_for_step(int t) const {
    if (t < 1 || t > static_cast<int>(step_logits.size()))
      throw std::out_of_range("step out of range");
    return step_logits[static_cast<size_t>(t - 1)];
  }

  // full softmax row (keys 0..N+t-1; self weight last) at (step, layer, head)
  std::span<const float> full_row(int t, int l, int h) const {
    if (t < 1 || t > gen_len()) throw std::out_of_range("step out of range");
    if (l < 0 || l >= n_layers || h < 0 || h >= n_heads)
      throw std::out_of_range("layer/head out of range");
    const auto& row = attn[static_cast<size_t>(t - 1)][static_cast<size_t>(l) * n_heads + h];
    return {row.data(), row.size()};
  }

  // stored keys 0..N+t-2 only (query's own weight excluded)
  std::span<const float> attn_row(int t, int l, int h) const {
    auto r = full_row(t, l, h);
    return r.subspan(0, r.size() - 1);
  }

  float self_weight(int t, int l, int h) const {
    auto r = full_row(t, l, h);
    return r[r.size() - 1];
  }
};

template <typename S>
struct KvCache {
  std::vector<Mat<S>> k, v;  // per layer, (max_seq x d), first `len` rows live
  int len = 0;

  KvCache(const ModelConfig& cfg) : len(0) {
    k.assign(cfg.n_layers, Mat<S>(cfg.max_seq_len, cfg.d_model));
    v.assign(cfg.n_layers, Mat<S>(cfg.max_seq_len, cfg.d_model));
  }
};

namespace detail {

// Feeds one token at position pos using the cache; optionally captures hidden
// states (L+1 x d), the per-layer/head attention row, and logits.
template <typename S>
void step_forward(const ParametersT<S>& p, KvCache<S>& cache, int tok, int pos,
                  Mat<float>* cap_hidden, std::vector<std::vector<float>>* cap_attn,
                  std::vector<float>* cap_logits, std::vector<S>* out_logits) {
  const ModelConfig& cfg = p.cfg;
  const int d = cfg.d_model, H = cfg.n_heads, dh = cfg.head_dim();
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  const int keys = pos + 1;

  std::vector<S> x(d), xn(d), q(d), att_ctx(d), row_buf;
  for (int j = 0; j < d; ++j) x[j] = p.tok_emb.at(tok, j) + p.pos_emb.at(pos, j);

  if (cap_hidden) {
    *cap_hidden = Mat<float>(cfg.n_layers + 1, d);
    for (int j = 0; j < d; ++j) cap_hidden->at(0, j) = static_cast<float>(x[j]);
  }
  if (cap_attn) cap_attn->assign(static_cast<size_t>(cfg.n_layers) * H, {});

  std::vector<S> r1;
  Mat<S> xm(1, d), xn_m(1, d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerParamsT<S>& lp = p.layers[l];
    // pre-attention norm
    S ss = S(0);
    for (int j = 0; j < d; ++j) ss += x[j] * x[j];
    S rms = std::sqrt(ss / S(d) + static_cast<S>(kRmsEps));
    for (int j = 0; j < d; ++j) xn[j] = lp.ln1_g[j] * x[j] / rms;

    // q/k/v for this position; k/v go into the cache. Row-streaming axpy so
    // the inner loops vectorize over contiguous weight rows.
    S* krow = cache.k[l].row(pos);
    S* vrow = cache.v[l].row(pos);
    std::fill(q.begin(), q.end(), S(0));
    std::fill(krow, krow + d, S(0));
    std::fill(vrow, vrow + d, S(0));
    for (int i = 0; i < d; ++i) {
      const S xi = xn[i];
      const S* wq_r = lp.wq.row(i);
      const S* wk_r = lp.wk.row(i);
      const S* wv_r = lp.wv.row(i);
      for (int j = 0; j < d; ++j) {
        q[j] += xi * wq_r[j];
        krow[j] += xi * wk_r[j];
        vrow[j] += xi * wv_r[j];
      }
    }

    for (int head = 0; head < H; ++head) {
      const int off = head * dh;
      row_buf.resize(keys);
      for (int key = 0; key < keys; ++key) {
        const S* kk = cache.k[l].row(key) + off;
        S s = S(0);
        for (int j = 0; j < dh; ++j) s += q[off + j] * kk[j];
        row_buf[key] = s * scale;
      }
      nn::softmax_row(row_buf.data(), keys);
      if (cap_attn) {
        auto& dst = (*cap_attn)[static_cast<size_t>(l) * H + head];
        dst.resize(keys);
        for (int key = 0; key < keys; ++key) dst[key] = static_cast<float>(row_buf[key]);
      }
      for (int j = 0; j < dh; ++j) {
        S acc = S(0);
        for (int key = 0; key < keys; ++key) acc += row_buf[key] * cache.v[l].at(key, off + j);
        att_ctx[off + j] = acc;
      }
    }

    // output projection + residual
    for (int j = 0; j < d; ++j) xm.at(0, j) = x[j];
    for (int i = 0; i < d; ++i) {
      const S ci = att_ctx[i];
      const S* wo_r = lp.wo.row(i);
      S* out = xm.row(0);
      for (int j = 0; j < d; ++j) out[j] += ci * wo_r[j];
    }

    // MLP
    nn::rmsnorm_rows(xm, lp.ln2_g, xn_m, r1);
    for (int j = 0; j < d; ++j) x[j] = xm.at(0, j);
    std::vector<S> a1(cfg.d_ff, S(0));
    for (int i = 0; i < d; ++i) {
      const S xi = xn_m.at(0, i);
      const S* w1_r = lp.w1.row(i);
      for (int j = 0; j < cfg.d_ff; ++j) a1[j] += xi * w1_r[j];
    }
    for (auto& v : a1) v = nn::gelu(v);
    for (int i = 0; i < cfg.d_ff; ++i) {
      const S ai = a1[i];
      const S* w2_r = lp.w2.row(i);
      for (int j = 0; j < d; ++j) x[j] += ai * w2_r[j];
    }

    if (cap_hidden)
      for (int j = 0; j < d; ++j) cap_hidden->at(l + 1, j) = static_cast<float>(x[j]);
  }
  cache.len = keys;

  if (cap_logits || out_logits) {
    S ss = S(0);
    for (int j = 0; j < d; ++j) ss += x[j] * x[j];
    S rms = std::sqrt(ss / S(d) + static_cast<S>(kRmsEps));
    std::vector<S> z(cfg.vocab_size, S(0));
    for (int i = 0; i < d; ++i) {
      const S hi = p.lnf_g[i] * x[i] / rms;
      const S* wu_r = p.w_u.row(i);
      for (int t = 0; t < cfg.vocab_size; ++t) z[t] += hi * wu_r[t];
    }
    if (out_logits) *out_logits = z;
    if (cap_logits) cap_logits->assign(z.begin(), z.end());
  }
}

template <typename S>
int sample_token(const std::vector<S>& logits, double temperature, std::mt19937_64& rng) {
  const int n = static_cast<int>(logits.size());
  if (temperature == 0.0) {
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (logits[i] > logits[best]) best = i;
    return best;
  }
  std::vector<double> p(n);
  double mx = -1e300;
  for (int i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]) / temperature);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += (p[i] = std::exp(static_cast<double>(logits[i]) / temperature - mx));
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * sum;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return n - 1;
}

}  // namespace detail

// Samples up to max_new tokens (stops after emitting [EOS]) and captures the
// per-step internals. Needs prompt_len + max_new <= max_seq_len because the
// last sampled token is fed back once to record its hidden states and
// attention row.
template <typename S>
GenerationRecord generate(const ParametersT<S>& p, std::span<const int> prompt, int max_new,
                          double temperature, uint64_t seed) {
  const ModelConfig& cfg = p.cfg;
  detail::check_tokens<S>(cfg, prompt);
  if (max_new < 1) throw std::invalid_argument("max_new must be >= 1");
  if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  const int N = static_cast<int>(prompt.size());
  if (N + max_new > cfg.max_seq_len)
    throw std::invalid_argument("prompt + max_new exceeds max_seq_len");

  GenerationRecord rec;
  rec.prompt.assign(prompt.begin(), prompt.end());
  rec.context_len = N;
  rec.temperature = temperature;
  rec.seed = seed;
  rec.n_layers = cfg.n_layers;
  rec.n_heads = cfg.n_heads;
  rec.d_model = cfg.d_model;
  rec.vocab_size = cfg.vocab_size;

  auto rng = stream_rng(seed, "sampling");
  KvCache<S> cache(cfg);

  // Prompt goes through the batched forward (fast path); its k/v seed the
  // cache and the last position's hidden/logits are the step-1 capture.
  ForwardAct<S> pact;
  forward(p, prompt, pact);
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::copy(pact.layer[l].k.data.begin(), pact.layer[l].k.data.end(),
              cache.k[l].data.begin());
    std::copy(pact.layer[l].v.data.begin(), pact.layer[l].v.data.end(),
              cache.v[l].data.begin());
  }
  cache.len = N;
  rec.hidden.emplace_back(cfg.n_layers + 1, cfg.d_model);
  for (int l = 0; l <= cfg.n_layers; ++l)
    for (int j = 0; j < cfg.d_model; ++j)
      rec.hidden.back().at(l, j) = static_cast<float>(pact.h[l].at(N - 1, j));
  rec.step_logits.emplace_back(pact.logits.row(N - 1), pact.logits.row(N - 1) + cfg.vocab_size);
  std::vector<S> logits(pact.logits.row(N - 1), pact.logits.row(N - 1) + cfg.vocab_size);

  int tok = detail::sample_token(logits, temperature, rng);
  for (int t = 1; t <= max_new; ++t) {
    rec.generated.push_back(tok);
    // feed y_t at position N+t-1: its hidden states and attention row are the
    // step-t capture; its logits sample y_{t+1}
    rec.hidden.emplace_back();
    rec.attn.emplace_back();
    const bool last = (t == max_new) || (tok == kEosId);
    if (!last) rec.step_logits.emplace_back();
    detail::step_forward(p, cache, tok, N + t - 1, &rec.hidden.back(), &rec.attn.back(),
                         last ? nullptr : &rec.step_logits.back(), last ? nullptr : &logits);
    if (last) break;
    tok = detail::sample_token(logits, temperature, rng);
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Checkpoint: "LLAB" | format u16 | config (6 x u32, u64 seed) | tensors as
// little-endian f32 in declaration order. Optional tagged sections (4-byte
// tag, u64 payload length, payload) may follow; the lens probe uses one.
// ---------------------------------------------------------------------------

inline constexpr uint16_t kCheckpointFormat = 1;

inline size_t checkpoint_header_bytes() { return 4 + 2 + 6 * 4 + 8; }

inline size_t checkpoint_tensor_bytes(const ModelConfig& c) {
  size_t n = static_cast<size_t>(c.vocab_size) * c.d_model +
             static_cast<size_t>(c.max_seq_len) * c.d_model;
  n += static_cast<size_t>(c.n_layers) *
       (2 * c.d_model + 4 * static_cast<size_t>(c.d_model) * c.d_model +
        2 * static_cast<size_t>(c.d_model) * c.d_ff);
  n += c.d_model + static_cast<size_t>(c.d_model) * c.vocab_size;
  return n * 4;
}

template <typename S>
void save_checkpoint(const ParametersT<S>& p, const std::string& path) {
  std::string buf;
  buf.reserve(checkpoint_header_bytes() + checkpoint_tensor_bytes(p.cfg));
  buf += "LLAB";
  io::put_u16(buf, kCheckpointFormat);
  io::put_u32(buf, static_cast<uint32_t>(p.cfg.vocab_size));
  io::put_u32(buf, static_cast<uint32_t>(p.cfg.d_model));
  io::put_u32(buf, static_cast<uint32_t>(p.cfg.n_layers));
  io::put_u32(buf, static_cast<uint32_t>(p.cfg.n_heads));
  io::put_u32(buf, static_cast<uint32_t>(p.cfg.d_ff));
  io::put_u32(buf, static_cast<uint32_t>(p.cfg.max_seq_len));
  io::put_u64(buf, p.cfg.seed);
  visit_tensors(p, [&](const AVec<S>& t) {
    for (S x : t) io::put_f32(buf, static_cast<float>(x));
  });
  write_file_atomic(path, buf);
}

inline ModelConfig read_checkpoint_config(io::Reader& r) {
  if (r.bytes(4) != "LLAB") throw IoError("bad checkpoint magic");
  if (r.u16() != kCheckpointFormat) throw IoError("unsupported checkpoint format");
  ModelConfig c;
  c.vocab_size = static_cast<int>(r.u32());
  c.d_model = static_cast<int>(r.u32());
  c.n_layers = static_cast<int>(r.u32());
  c.n_heads = static_cast<int>(r.u32());
  c.d_ff = static_cast<int>(r.u32());
  c.max_seq_len = static_cast<int>(r.u32());
  c.seed = r.u64();
  return c;
}

inline Parameters load_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  io::Reader r{buf};
  const ModelConfig cfg = read_checkpoint_config(r);
  cfg.validate();
  Parameters p = Parameters::zeros(cfg);
  visit_tensors(p, [&](AVec<float>& t) {
    for (auto& x : t) {
      x = r.f32();
      if (!std::isfinite(x)) throw IoError("non-finite parameter in checkpoint");
    }
  });
  return p;
}

inline void append_checkpoint_section(const std::string& path, const char tag[5],
                                      const std::string& payload) {
  std::string buf = read_file(path);
  buf.append(tag, 4);
  io::put_u64(buf, payload.size());
  buf += payload;
  write_file_atomic(path, buf);
}

// Returns the payload of the first section with the given tag, if present.
inline std::optional<std::string> read_checkpoint_section(const std::string& path,
                                                          const char tag[5]) {
  const std::string buf = read_file(path);
  io::Reader r{buf};
  const ModelConfig cfg = read_checkpoint_config(r);
  r.pos += checkpoint_tensor_bytes(cfg);
  if (r.pos > buf.size()) throw IoError("truncated checkpoint");
  while (!r.eof()) {
    const std::string t = r.bytes(4);
    const uint64_t len = r.u64();
    std::string payload = r.bytes(len);
    if (t == std::string_view(tag, 4)) return payload;
  }
  return std::nullopt;
}

}  // namespace lenslab
