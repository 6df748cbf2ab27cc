#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "lenslab/model.hpp"

// Next-token training: hand-written backprop through the whole stack and Adam
// with global gradient-norm clipping. Loss is the mean cross entropy over all
// predicted positions, averaged over the sequences of a batch.

namespace lenslab {

struct TrainHyper {
  int steps = 600;
  double lr = 1e-3;
  int batch = 16;

  bool operator==(const TrainHyper&) const = default;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;
inline constexpr double kGradClip = 1.0;

// One Adam update over a flat list of tensors. Gradients are rescaled first
// so their global L2 norm never exceeds `clip` (disabled when clip <= 0).
template <typename S>
void adam_step(const std::vector<AVec<S>*>& params, const std::vector<AVec<S>*>& grads,
               std::vector<std::vector<S>>& m, std::vector<std::vector<S>>& v, int& t,
               double lr, double clip = kGradClip) {
  if (m.empty()) {
    m.resize(params.size());
    v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m[i].assign(params[i]->size(), S(0));
      v[i].assign(params[i]->size(), S(0));
    }
  }
  double sq = 0.0;
  for (const auto* g : grads)
    for (S x : *g) sq += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(sq);
  const double scale = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;

  ++t;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = *grads[i];
    for (size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]) * scale;
      const double mj = kAdamBeta1 * m[i][j] + (1.0 - kAdamBeta1) * gj;
      const double vj = kAdamBeta2 * v[i][j] + (1.0 - kAdamBeta2) * gj * gj;
      m[i][j] = static_cast<S>(mj);
      v[i][j] = static_cast<S>(vj);
      p[j] -= static_cast<S>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + kAdamEps));
    }
  }
}

template <typename S>
class Trainer {
 public:
  explicit Trainer(ParametersT<S>& params)
      : p_(&params), grad_(ParametersT<S>::zeros(params.cfg)) {
    visit_tensors(*p_, [&](AVec<S>& v) { pslots_.push_back(&v); });
    visit_tensors(grad_, [&](AVec<S>& v) { gslots_.push_back(&v); });
  }

  // Accumulates loss + gradients for one sequence, scaled by inv_batch.
  double accumulate(std::span<const int> toks, double inv_batch) {
    const ModelConfig& cfg = p_->cfg;
    const int P = static_cast<int>(toks.size());
    if (P < 2) throw std::invalid_argument("training sequence needs >= 2 tokens");
    const int d = cfg.d_model, H = cfg.n_heads, dh = cfg.head_dim(), V = cfg.vocab_size;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));

    forward(*p_, toks, act_);

    // loss + dLogits
    Mat<S> dlogits(P, V);
    const double w = inv_batch / (P - 1);
    double loss = 0.0;
    std::vector<double> prob(V);
    for (int i = 0; i < P - 1; ++i) {
      const S* z = act_.logits.row(i);
      double mx = z[0];
      for (int j = 1; j < V; ++j) mx = std::max(mx, static_cast<double>(z[j]));
      double sum = 0.0;
      for (int j = 0; j < V; ++j) sum += (prob[j] = std::exp(static_cast<double>(z[j]) - mx));
      const int gold = toks[i + 1];
      loss += -(std::log(prob[gold] / sum));
      S* dz = dlogits.row(i);
      for (int j = 0; j < V; ++j) dz[j] = static_cast<S>((prob[j] / sum) * w);
      dz[gold] -= static_cast<S>(w);
    }
    loss *= w;

    // final head
    Mat<S> dxnf, dx;
    gemm_nt(dlogits, p_->w_u, dxnf);
    gemm_tn(act_.xnf, dlogits, grad_.w_u, /*accumulate=*/true);
    nn::rmsnorm_backward(act_.h[cfg.n_layers], p_->lnf_g, act_.rf, dxnf, dx, grad_.lnf_g);

    Mat<S> dgel, da1, dxn2, dxm, dctx, dq, dk, dv, dxn1, dtmp;
    Mat<S> qh, kh, vh, dch, dah, ds, dqh, dkh, dvh;
    for (int l = cfg.n_layers - 1; l >= 0; --l) {
      const LayerParamsT<S>& lp = p_->layers[l];
      LayerParamsT<S>& gl = grad_.layers[l];
      LayerAct<S>& la = act_.layer[l];

      // MLP branch: xout = xm + gelu(xn2 w1) w2
      gemm_nt(dx, lp.w2, dgel);
      gemm_tn(la.gel, dx, gl.w2, true);
      da1.rows = dgel.rows;
      da1.cols = dgel.cols;
      da1.data.resize(dgel.size());
      for (size_t i = 0; i < dgel.data.size(); ++i)
        da1.data[i] = dgel.data[i] * nn::gelu_grad(la.a1.data[i]);
      gemm_nt(da1, lp.w1, dxn2);
      gemm_tn(la.xn2, da1, gl.w1, true);
      nn::rmsnorm_backward(la.xm, lp.ln2_g, la.r2, dxn2, dxm, gl.ln2_g);
      for (size_t i = 0; i < dxm.data.size(); ++i) dxm.data[i] += dx.data[i];  // residual

      // attention branch: xm = x + ctx wo
      gemm_nt(dxm, lp.wo, dctx);
      gemm_tn(la.ctx, dxm, gl.wo, true);

      dq = Mat<S>(P, d);
      dk = Mat<S>(P, d);
      dv = Mat<S>(P, d);
      for (int head = 0; head < H; ++head) {
        detail::take_head(la.q, head, dh, qh);
        detail::take_head(la.k, head, dh, kh);
        detail::take_head(la.v, head, dh, vh);
        detail::take_head(dctx, head, dh, dch);
        const Mat<S>& a = la.alpha[head];
        gemm_nt(dch, vh, dah);       // dAlpha
        gemm_tn(a, dch, dvh, false);  // dVh
        // softmax backward row-wise (alpha is causal-zero beyond the diagonal)
        ds.rows = P;
        ds.cols = P;
        ds.data.assign(static_cast<size_t>(P) * P, S(0));
        for (int i = 0; i < P; ++i) {
          const S* ar = a.row(i);
          const S* dar = dah.row(i);
          S dot = S(0);
          for (int j = 0; j <= i; ++j) dot += ar[j] * dar[j];
          S* dsr = ds.row(i);
          for (int j = 0; j <= i; ++j) dsr[j] = ar[j] * (dar[j] - dot) * scale;
        }
        gemm(ds, kh, dqh);
        gemm_tn(ds, qh, dkh, false);
        detail::put_head(dqh, head, dh, dq);
        detail::put_head(dkh, head, dh, dk);
        detail::put_head(dvh, head, dh, dv);
      }

      gemm_nt(dq, lp.wq, dxn1);
      gemm_nt(dk, lp.wk, dtmp);
      for (size_t i = 0; i < dxn1.data.size(); ++i) dxn1.data[i] += dtmp.data[i];
      gemm_nt(dv, lp.wv, dtmp);
      for (size_t i = 0; i < dxn1.data.size(); ++i) dxn1.data[i] += dtmp.data[i];
      gemm_tn(la.xn1, dq, gl.wq, true);
      gemm_tn(la.xn1, dk, gl.wk, true);
      gemm_tn(la.xn1, dv, gl.wv, true);

      nn::rmsnorm_backward(act_.h[l], lp.ln1_g, la.r1, dxn1, dx, gl.ln1_g);
      for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dxm.data[i];  // residual
    }

    for (int i = 0; i < P; ++i) {
      const S* dxi = dx.row(i);
      S* te = grad_.tok_emb.row(toks[i]);
      S* pe = grad_.pos_emb.row(i);
      for (int j = 0; j < d; ++j) {
        te[j] += dxi[j];
        pe[j] += dxi[j];
      }
    }
    return loss;
  }

  void zero_grad() {
    for (auto* g : gslots_) std::fill(g->begin(), g->end(), S(0));
  }

  void update(double lr) { adam_step(pslots_, gslots_, m_, v_, t_, lr); }

  const ParametersT<S>& gradients() const { return grad_; }

 private:
  ParametersT<S>* p_;
  ParametersT<S> grad_;
  std::vector<AVec<S>*> pslots_, gslots_;
  std::vector<std::vector<S>> m_, v_;
  int t_ = 0;
  ForwardAct<S> act_;
};

// Deterministic Fisher-Yates (std::shuffle is implementation-defined).
inline void shuffle_indices(std::vector<size_t>& idx, std::mt19937_64& rng) {
  for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
}

// Runs `steps` optimizer updates over batches drawn epoch-wise from `seqs`.
// Returns the per-step loss curve.
template <typename S>
std::vector<double> train(ParametersT<S>& params, const std::vector<std::vector<int>>& seqs,
                          const TrainHyper& hy) {
  if (seqs.empty()) throw std::invalid_argument("empty training set");
  if (hy.steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (hy.batch < 1) throw std::invalid_argument("batch must be >= 1");

  Trainer<S> tr(params);
  auto rng = stream_rng(params.cfg.seed, "train");
  std::vector<size_t> order(seqs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_indices(order, rng);
  size_t cursor = 0;

  std::vector<double> curve;
  curve.reserve(hy.steps);
  for (int step = 0; step < hy.steps; ++step) {
    tr.zero_grad();
    double loss = 0.0;
    const int B = std::min<int>(hy.batch, static_cast<int>(seqs.size()));
    for (int b = 0; b < B; ++b) {
      if (cursor == order.size()) {
        shuffle_indices(order, rng);
        cursor = 0;
      }
      loss += tr.accumulate(seqs[order[cursor++]], 1.0 / B);
    }
    if (!std::isfinite(loss))
      throw StageError("train", "non-finite loss at step " + std::to_string(step));
    tr.update(hy.lr);
    curve.push_back(loss);
  }
  return curve;
}

// Initializes from the config's seed and trains; the spec-level entry point.
template <typename S = float>
std::pair<ParametersT<S>, std::vector<double>> train_model(
    const ModelConfig& cfg, const std::vector<std::vector<int>>& seqs, const TrainHyper& hy) {
  ParametersT<S> p = ParametersT<S>::init(cfg);
  std::vector<double> curve = train(p, seqs, hy);
  return {std::move(p), std::move(curve)};
}

}  // namespace lenslab
