#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lenslab/common.hpp"
#include "lenslab/distrib.hpp"
#include "lenslab/gemm.hpp"
#include "lenslab/model.hpp"
#include "lenslab/train.hpp"

// Logit lens, tuned lens, per-layer prediction trajectories, and Mean
// Emergence Depth. Layer indexing matches the residual stream: row 0 is the
// embedding output, rows 1..L follow the transformer blocks; the layer-L
// "probe" is the model head itself and is never trained.

namespace lenslab {

template <typename S>
struct LensProbeT {
  int n_layers = 0;  // probes cover layers 0..n_layers-1
  int d_model = 0;
  std::vector<Mat<S>> a;   // (d x d) per probed layer
  std::vector<AVec<S>> b;  // (d) per probed layer

  static LensProbeT identity(int L, int d) {
    LensProbeT p;
    p.n_layers = L;
    p.d_model = d;
    p.a.assign(L, Mat<S>(d, d));
    p.b.assign(L, AVec<S>(static_cast<size_t>(d), S(0)));
    for (auto& m : p.a) {
      m.set_zero();
      for (int i = 0; i < d; ++i) m.at(i, i) = S(1);
    }
    return p;
  }

  void check(const ModelConfig& cfg) const {
    if (n_layers != cfg.n_layers || d_model != cfg.d_model)
      throw std::invalid_argument("lens probe does not match model config");
    if (a.size() != static_cast<size_t>(n_layers) || b.size() != static_cast<size_t>(n_layers))
      throw std::invalid_argument("lens probe layer count mismatch");
    for (const auto& m : a)
      if (m.rows != d_model || m.cols != d_model)
        throw std::invalid_argument("lens probe matrix shape mismatch");
  }
};

using LensProbe = LensProbeT<float>;

// softmax(final-rmsnorm(h) . W_U)
template <typename S>
std::vector<S> logit_lens(const ParametersT<S>& p, std::span<const S> h) {
  const ModelConfig& cfg = p.cfg;
  if (static_cast<int>(h.size()) != cfg.d_model)
    throw std::invalid_argument("logit_lens: hidden dimension mismatch");
  S ss = S(0);
  for (S x : h) {
    if (!std::isfinite(static_cast<double>(x)))
      throw std::invalid_argument("logit_lens: non-finite hidden state");
    ss += x * x;  // same accumulation order as the model's final norm
  }
  const S rms = std::sqrt(ss / static_cast<S>(cfg.d_model) + static_cast<S>(kRmsEps));
  std::vector<S> z(cfg.vocab_size, S(0));
  for (int i = 0; i < cfg.d_model; ++i) {
    const S xi = p.lnf_g[i] * h[i] / rms;
    const S* wr = p.w_u.row(i);
    for (int v = 0; v < cfg.vocab_size; ++v) z[v] += xi * wr[v];
  }
  nn::softmax_row(z.data(), cfg.vocab_size);
  return z;
}

// Lens distribution at `layer` (0..L): affine probe below L, model head at L.
template <typename S>
std::vector<S> tuned_lens_dist(const ParametersT<S>& p, const LensProbeT<S>& probe, int layer,
                               std::span<const S> h) {
  if (layer < 0 || layer > p.cfg.n_layers) throw std::out_of_range("lens layer out of range");
  if (layer == p.cfg.n_layers) return logit_lens(p, h);
  probe.check(p.cfg);
  const int d = p.cfg.d_model;
  if (static_cast<int>(h.size()) != d)
    throw std::invalid_argument("tuned_lens_dist: hidden dimension mismatch");
  std::vector<S> hp(probe.b[layer].begin(), probe.b[layer].end());
  for (int i = 0; i < d; ++i) {
    const S* ar = probe.a[layer].row(i);
    for (int j = 0; j < d; ++j) hp[j] += h[i] * ar[j];
  }
  return logit_lens(p, std::span<const S>(hp));
}

struct LensHyper {
  int steps = 500;
  double lr = 1e-3;
  int max_sequences = 256;   // held-in cap
  int positions_per_seq = 4; // subsampled per sequence
};

namespace detail {

// Residual streams at sampled positions plus the head's distribution there.
template <typename S>
struct LensBatch {
  std::vector<Mat<S>> x;  // per layer 0..L-1: (M x d)
  Mat<S> target;          // (M x V) final-layer probabilities
  std::vector<double> target_entropy;  // per row, for cheap KL evaluation
};

template <typename S>
LensBatch<S> collect_lens_batch(const ParametersT<S>& params,
                                const std::vector<std::vector<int>>& seqs, int max_sequences,
                                int positions_per_seq, std::mt19937_64& rng) {
  const ModelConfig& cfg = params.cfg;
  const int L = cfg.n_layers;
  LensBatch<S> batch;
  batch.x.assign(L, Mat<S>());
  std::vector<std::vector<S>> xrows(L);
  std::vector<S> trows;
  const int n_seqs = std::min<int>(max_sequences, static_cast<int>(seqs.size()));
  ForwardAct<S> act;
  for (int s = 0; s < n_seqs; ++s) {
    forward(params, seqs[s], act);
    const int P = static_cast<int>(seqs[s].size());
    std::vector<int> pos(P);
    for (int i = 0; i < P; ++i) pos[i] = i;
    // partial Fisher-Yates: first k entries become the sampled positions
    const int k = std::min(positions_per_seq, P);
    for (int i = 0; i < k; ++i) std::swap(pos[i], pos[i + rng() % (P - i)]);
    for (int i = 0; i < k; ++i) {
      const int at = pos[i];
      for (int l = 0; l < L; ++l)
        xrows[l].insert(xrows[l].end(), act.h[l].row(at), act.h[l].row(at) + cfg.d_model);
      std::vector<S> t(act.logits.row(at), act.logits.row(at) + cfg.vocab_size);
      nn::softmax_row(t.data(), cfg.vocab_size);
      trows.insert(trows.end(), t.begin(), t.end());
      batch.target_entropy.push_back(entropy(t));
    }
  }
  const int m = static_cast<int>(batch.target_entropy.size());
  for (int l = 0; l < L; ++l) {
    batch.x[l].rows = m;
    batch.x[l].cols = cfg.d_model;
    batch.x[l].data.assign(xrows[l].begin(), xrows[l].end());
  }
  batch.target.rows = m;
  batch.target.cols = cfg.vocab_size;
  batch.target.data.assign(trows.begin(), trows.end());
  return batch;
}

// Mean KL(target || probe dist) over the batch plus gradients wrt (A, b).
// Model head (W_U, final gains) stays frozen; only the affine map trains.
template <typename S>
double probe_loss_grad(const ParametersT<S>& params, const Mat<S>& x, const Mat<S>& target,
                       const std::vector<double>& target_entropy, const Mat<S>& a,
                       const AVec<S>& bvec, Mat<S>& da, AVec<S>& db) {
  const ModelConfig& cfg = params.cfg;
  const int m = x.rows, d = cfg.d_model, V = cfg.vocab_size;
  Mat<S> hp;
  gemm(x, a, hp);
  for (int r = 0; r < m; ++r) {
    S* row = hp.row(r);
    for (int j = 0; j < d; ++j) row[j] += bvec[j];
  }
  Mat<S> xn;
  std::vector<S> rms;
  nn::rmsnorm_rows(hp, params.lnf_g, xn, rms);
  Mat<S> z;
  gemm(xn, params.w_u, z);

  // KL(p||q) per row = lse(z) - <p, z> - H(p); softmax(z) in place for the grad
  double loss = 0.0;
  const S inv_m = S(1) / static_cast<S>(m);
  for (int r = 0; r < m; ++r) {
    S* zr = z.row(r);
    const S* pr = target.row(r);
    S mx = zr[0];
    for (int v = 1; v < V; ++v) mx = std::max(mx, zr[v]);
    double sum = 0.0, dot = 0.0;
    for (int v = 0; v < V; ++v) {
      dot += static_cast<double>(pr[v]) * static_cast<double>(zr[v]);
      zr[v] = std::exp(zr[v] - mx);
      sum += static_cast<double>(zr[v]);
    }
    loss += static_cast<double>(mx) + std::log(sum) - dot - target_entropy[r];
    const S inv_sum = static_cast<S>(1.0 / sum);
    for (int v = 0; v < V; ++v) zr[v] = (zr[v] * inv_sum - pr[v]) * inv_m;  // dKL/dz
  }
  Mat<S> dxn;
  gemm_nt(z, params.w_u, dxn);
  Mat<S> dhp;
  AVec<S> dg_scratch(static_cast<size_t>(d), S(0));  // head gains frozen; discarded
  nn::rmsnorm_backward(hp, params.lnf_g, rms, dxn, dhp, dg_scratch);
  gemm_tn(x, dhp, da);
  std::fill(db.begin(), db.end(), S(0));
  for (int r = 0; r < m; ++r) {
    const S* row = dhp.row(r);
    for (int j = 0; j < d; ++j) db[j] += row[j];
  }
  return loss / m;
}

}  // namespace detail

// Distills each layer's residual stream onto the head distribution with a
// per-layer affine map: full-batch Adam over sampled held-in positions.
template <typename S>
LensProbeT<S> train_tuned_lens(const ParametersT<S>& params,
                               const std::vector<std::vector<int>>& seqs,
                               const LensHyper& hy = {}) {
  if (seqs.empty()) throw std::invalid_argument("train_tuned_lens: no sequences");
  if (hy.steps < 1 || hy.max_sequences < 1 || hy.positions_per_seq < 1 || hy.lr <= 0.0)
    throw std::invalid_argument("train_tuned_lens: bad hyperparameters");
  const ModelConfig& cfg = params.cfg;
  auto rng = stream_rng(cfg.seed, "lens");
  auto batch = detail::collect_lens_batch(params, seqs, hy.max_sequences, hy.positions_per_seq, rng);
  LensProbeT<S> probe = LensProbeT<S>::identity(cfg.n_layers, cfg.d_model);
  const double no_clip = std::numeric_limits<double>::infinity();
  for (int l = 0; l < cfg.n_layers; ++l) {
    Mat<S> da(cfg.d_model, cfg.d_model);
    AVec<S> db(static_cast<size_t>(cfg.d_model), S(0));
    std::vector<AVec<S>*> pslots{&probe.a[l].data, &probe.b[l]};
    std::vector<AVec<S>*> gslots{&da.data, &db};
    std::vector<std::vector<S>> m, v;
    int t = 0;
    for (int step = 0; step < hy.steps; ++step) {
      const double loss = detail::probe_loss_grad(params, batch.x[l], batch.target,
                                                  batch.target_entropy, probe.a[l], probe.b[l],
                                                  da, db);
      if (!std::isfinite(loss))
        throw StageError("lens", "non-finite probe loss at layer " + std::to_string(l) +
                                     " step " + std::to_string(step));
      adam_step(pslots, gslots, m, v, t, hy.lr, no_clip);
    }
  }
  return probe;
}

// Mean KL(head || lens) per layer 0..L over every position of `seqs`.
// Entry L is identically zero; pass an identity probe for the logit-lens
// baseline.
template <typename S>
std::vector<double> mean_lens_kl(const ParametersT<S>& params, const LensProbeT<S>& probe,
                                 const std::vector<std::vector<int>>& seqs) {
  if (seqs.empty()) throw std::invalid_argument("mean_lens_kl: no sequences");
  probe.check(params.cfg);
  const ModelConfig& cfg = params.cfg;
  const int L = cfg.n_layers, V = cfg.vocab_size;
  std::vector<double> acc(L + 1, 0.0);
  size_t count = 0;
  ForwardAct<S> act;
  Mat<S> hp, xn, z;
  std::vector<S> rms;
  for (const auto& seq : seqs) {
    forward(params, seq, act);
    const int P = static_cast<int>(seq.size());
    count += P;
    std::vector<double> h_target(P);
    Mat<S> tgt(P, V);
    for (int r = 0; r < P; ++r) {
      std::copy(act.logits.row(r), act.logits.row(r) + V, tgt.row(r));
      nn::softmax_row(tgt.row(r), V);
      h_target[r] = entropy(std::span<const S>(tgt.row(r), static_cast<size_t>(V)));
    }
    for (int l = 0; l < L; ++l) {
      gemm(act.h[l], probe.a[l], hp);
      for (int r = 0; r < P; ++r) {
        S* row = hp.row(r);
        for (int j = 0; j < cfg.d_model; ++j) row[j] += probe.b[l][j];
      }
      nn::rmsnorm_rows(hp, params.lnf_g, xn, rms);
      gemm(xn, params.w_u, z);
      for (int r = 0; r < P; ++r) {
        const S* zr = z.row(r);
        const S* pr = tgt.row(r);
        S mx = zr[0];
        for (int v = 1; v < V; ++v) mx = std::max(mx, zr[v]);
        double sum = 0.0, dot = 0.0;
        for (int v = 0; v < V; ++v) {
          dot += static_cast<double>(pr[v]) * static_cast<double>(zr[v]);
          sum += std::exp(static_cast<double>(zr[v]) - static_cast<double>(mx));
        }
        acc[l] += static_cast<double>(mx) + std::log(sum) - dot - h_target[r];
      }
    }
  }
  for (int l = 0; l < L; ++l) acc[l] /= static_cast<double>(count);
  return acc;
}

// ---------------------------------------------------------------------------
// Trajectories and Mean Emergence Depth
// ---------------------------------------------------------------------------

struct Trajectory {
  int position = 0;  // absolute sequence position the hidden states came from
  int gold = 0;
  Mat<float> dist;  // (L+1) x V, row l = lens distribution at layer l
  std::vector<double> max_prob, entropy, cross_entropy, forward_kl;  // per layer 0..L
};

inline Trajectory trajectory(const Parameters& params, const LensProbe& probe,
                             const GenerationRecord& rec, int position, int gold) {
  if (rec.d_model != params.cfg.d_model || rec.n_layers != params.cfg.n_layers ||
      rec.vocab_size != params.cfg.vocab_size)
    throw std::invalid_argument("trajectory: record does not match model config");
  if (gold < 0 || gold >= params.cfg.vocab_size)
    throw std::invalid_argument("trajectory: gold token out of range");
  const Mat<float>& h = rec.hidden_at(position);  // throws out_of_range when absent
  const int L = params.cfg.n_layers, V = params.cfg.vocab_size;
  Trajectory t;
  t.position = position;
  t.gold = gold;
  t.dist = Mat<float>(L + 1, V);
  for (int l = 0; l <= L; ++l) {
    const auto dist =
        tuned_lens_dist(params, probe, l, std::span<const float>(h.row(l), static_cast<size_t>(params.cfg.d_model)));
    std::copy(dist.begin(), dist.end(), t.dist.row(l));
  }
  const std::span<const float> p_final(t.dist.row(L), static_cast<size_t>(V));
  for (int l = 0; l <= L; ++l) {
    const std::span<const float> p(t.dist.row(l), static_cast<size_t>(V));
    t.max_prob.push_back(*std::max_element(p.begin(), p.end()));
    t.entropy.push_back(lenslab::entropy(p));
    t.cross_entropy.push_back(lenslab::cross_entropy(static_cast<size_t>(gold), p));
    t.forward_kl.push_back(l == L ? 0.0 : lenslab::forward_kl(p_final, p));
  }
  return t;
}

enum class MedVariant { target_prob, max_prob };

inline const char* med_variant_name(MedVariant v) {
  return v == MedVariant::target_prob ? "target_prob" : "max_prob";
}

struct MEDResult {
  double value = 0.0;
  int n = 0;
  int target_token = 0;
  MedVariant variant = MedVariant::target_prob;
};

// MED = (1/n) sum_{i=L-n+1..L} i * P_i over 1-based transformer layers; the
// embedding stream (layer 0) never enters the window.
inline MEDResult med(const Trajectory& traj, int target, int n,
                     MedVariant variant = MedVariant::target_prob) {
  const int L = traj.dist.rows - 1;
  if (n < 1 || n > L) throw std::invalid_argument("med: window n out of range");
  if (target < 0 || target >= traj.dist.cols)
    throw std::invalid_argument("med: target token out of range");
  double s = 0.0;
  for (int i = L - n + 1; i <= L; ++i) {
    double pi;
    if (variant == MedVariant::target_prob) {
      pi = traj.dist.at(i, target);
    } else {
      const float* row = traj.dist.row(i);
      pi = *std::max_element(row, row + traj.dist.cols);
    }
    s += i * pi;
  }
  return {s / n, n, target, variant};
}

inline int med_window(const ModelConfig& cfg) { return std::min(10, cfg.n_layers); }

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTrajectoryCsvHeader =
    "sample_id,position,layer,max_prob,target_prob,entropy,forward_kl,cross_entropy";

inline void append_trajectory_csv(std::string& out, std::string_view sample_id,
                                  const Trajectory& t) {
  for (int l = 0; l < t.dist.rows; ++l) {
    out += sample_id;
    out += ',';
    out += std::to_string(t.position);
    out += ',';
    out += std::to_string(l);
    out += ',';
    out += fmt_float(t.max_prob[l]);
    out += ',';
    out += fmt_float(t.dist.at(l, t.gold));
    out += ',';
    out += fmt_float(t.entropy[l]);
    out += ',';
    out += fmt_float(t.forward_kl[l]);
    out += ',';
    out += fmt_float(t.cross_entropy[l]);
    out += '\n';
  }
}

inline constexpr char kProbeSectionTag[5] = "TLNS";

inline std::string encode_probe(const LensProbe& probe) {
  std::string s;
  io::put_u32(s, static_cast<uint32_t>(probe.n_layers));
  io::put_u32(s, static_cast<uint32_t>(probe.d_model));
  for (int l = 0; l < probe.n_layers; ++l) {
    for (float x : probe.a[l].data) io::put_f32(s, x);
    for (float x : probe.b[l]) io::put_f32(s, x);
  }
  return s;
}

inline LensProbe decode_probe(const std::string& payload) {
  io::Reader r{payload};
  const int L = static_cast<int>(r.u32());
  const int d = static_cast<int>(r.u32());
  if (L < 1 || d < 1) throw IoError("bad lens probe header");
  if (payload.size() != 8 + static_cast<size_t>(L) * (static_cast<size_t>(d) * d + d) * 4)
    throw IoError("lens probe payload size mismatch");
  LensProbe p = LensProbe::identity(L, d);
  for (int l = 0; l < L; ++l) {
    for (auto& x : p.a[l].data) x = r.f32();
    for (auto& x : p.b[l]) x = r.f32();
  }
  return p;
}

inline void save_probe(const std::string& checkpoint_path, const LensProbe& probe) {
  append_checkpoint_section(checkpoint_path, kProbeSectionTag, encode_probe(probe));
}

inline std::optional<LensProbe> load_probe(const std::string& checkpoint_path) {
  auto payload = read_checkpoint_section(checkpoint_path, kProbeSectionTag);
  if (!payload) return std::nullopt;
  return decode_probe(*payload);
}

}  // namespace lenslab
