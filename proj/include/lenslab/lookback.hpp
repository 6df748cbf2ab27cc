#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "model.hpp"

namespace lenslab {

// contextual-reliance split at one (step, layer, head).
//
// At step t the query sits at sequence position N+t (1-based) and attends over
// stored keys 1..N+t-1: positions 1..N are the prompt ("context"), N+1..N+t-1
// the previously generated tokens ("new"). The query's own softmax weight
// belongs to neither bucket. A_new averages over t-1 keys, so t >= 2.
struct AttentionSplit {
  double a_context = 0.0;
  double a_new = 0.0;
};

inline AttentionSplit attention_split(const GenerationRecord& rec, int t, int l, int h) {
  if (t < 2 || t > rec.gen_len())
    throw std::out_of_range("attention_split: step must satisfy 2 <= t <= gen_len");
  const auto row = rec.attn_row(t, l, h);  // keys 0..N+t-2, self weight excluded
  const int n = rec.context_len;
  double ctx = 0.0, fresh = 0.0;
  for (int i = 0; i < n; ++i) ctx += row[static_cast<size_t>(i)];
  for (size_t j = static_cast<size_t>(n); j < row.size(); ++j) fresh += row[j];
  return {ctx / n, fresh / (t - 1)};
}

// CR = A_context / (A_context + A_new); undefined when both buckets are empty.
inline double cr(double a_context, double a_new) {
  if (a_context < 0.0 || a_new < 0.0)
    throw std::invalid_argument("cr: negative attention mass");
  const double denom = a_context + a_new;
  if (denom <= 0.0) throw std::invalid_argument("cr: A_context + A_new must be positive");
  return a_context / denom;
}

struct ReliancePoint {
  int t = 0;
  int layer = 0;
  int head = 0;
  double a_context = 0.0;
  double a_new = 0.0;
  double cr = 0.0;
};

struct RelianceProfile {
  int n_layers = 0, n_heads = 0;
  std::vector<int> steps;          // the t values used, 2..min(T+1, gen_len)
  std::vector<double> curve;       // per-step CR of head-mean masses at the top layer
  double a_context_bar = 0.0;      // Eq. 7: mean A_context over steps x heads, layer L
  double a_new_bar = 0.0;          // Eq. 8
  double cr_bar = 0.0;             // Eq. 9: a_context_bar / (a_context_bar + a_new_bar)
  Mat<double> heatmap;             // (layer, head) -> mean per-step CR
  std::vector<ReliancePoint> points;  // every (t, layer, head), CSV-exportable
};

// Aggregates the splits over the first T generated steps (step 1 has no
// generated keys and is skipped, so the window covers t = 2..min(T+1, gen_len)).
inline RelianceProfile reliance_profile(const GenerationRecord& rec, int window) {
  if (rec.gen_len() < 2)
    throw std::invalid_argument("reliance_profile: need at least 2 generated tokens");
  if (window < 1 || window > rec.gen_len())
    throw std::out_of_range("reliance_profile: window must satisfy 1 <= T <= gen_len");
  const int last_step = std::min(window + 1, rec.gen_len());
  const int top = rec.n_layers - 1;

  RelianceProfile prof;
  prof.n_layers = rec.n_layers;
  prof.n_heads = rec.n_heads;
  prof.heatmap = Mat<double>(rec.n_layers, rec.n_heads);
  Mat<double> cr_sums(rec.n_layers, rec.n_heads);
  for (int t = 2; t <= last_step; ++t) {
    double top_ctx = 0.0, top_new = 0.0;
    for (int l = 0; l < rec.n_layers; ++l) {
      for (int h = 0; h < rec.n_heads; ++h) {
        const auto s = attention_split(rec, t, l, h);
        prof.points.push_back({t, l, h, s.a_context, s.a_new, cr(s.a_context, s.a_new)});
        cr_sums.at(l, h) += prof.points.back().cr;
        if (l == top) {
          top_ctx += s.a_context;
          top_new += s.a_new;
          prof.a_context_bar += s.a_context;
          prof.a_new_bar += s.a_new;
        }
      }
    }
    prof.steps.push_back(t);
    prof.curve.push_back(cr(top_ctx / rec.n_heads, top_new / rec.n_heads));
  }
  const double n_steps = static_cast<double>(prof.steps.size());
  prof.a_context_bar /= n_steps * rec.n_heads;
  prof.a_new_bar /= n_steps * rec.n_heads;
  prof.cr_bar = cr(prof.a_context_bar, prof.a_new_bar);
  for (int l = 0; l < rec.n_layers; ++l)
    for (int h = 0; h < rec.n_heads; ++h)
      prof.heatmap.at(l, h) = cr_sums.at(l, h) / n_steps;
  return prof;
}

// Per-head attention restricted to generated-token queries and keys: entry
// (t-1, j-1) is the weight query y_t places on y_j (j == t is the self weight,
// j > t zero). Row sums fall short of 1 by exactly the mass spent on context.
inline std::vector<Mat<double>> attention_heatmap(const GenerationRecord& rec, int layer) {
  if (layer < 0 || layer >= rec.n_layers)
    throw std::out_of_range("attention_heatmap: layer out of range");
  if (rec.gen_len() < 1)
    throw std::invalid_argument("attention_heatmap: record has no generated tokens");
  const int span = rec.gen_len();
  std::vector<Mat<double>> maps;
  maps.reserve(static_cast<size_t>(rec.n_heads));
  for (int h = 0; h < rec.n_heads; ++h) {
    Mat<double> m(span, span);
    for (int t = 1; t <= span; ++t) {
      const auto row = rec.full_row(t, layer, h);  // keys 0..N+t-1, self last
      for (int j = 1; j < t; ++j)
        m.at(t - 1, j - 1) = row[static_cast<size_t>(rec.context_len + j - 1)];
      m.at(t - 1, t - 1) = row[row.size() - 1];
    }
    maps.push_back(std::move(m));
  }
  return maps;
}

inline constexpr std::string_view kRelianceCsvHeader =
    "sample_id,t,layer,head,a_context,a_new,cr";

inline void append_reliance_csv(std::string& out, std::string_view sample_id,
                                const RelianceProfile& prof) {
  for (const auto& p : prof.points) {
    out += sample_id;
    out += ',';
    out += std::to_string(p.t);
    out += ',';
    out += std::to_string(p.layer);
    out += ',';
    out += std::to_string(p.head);
    out += ',';
    out += fmt_float_rt(p.a_context);
    out += ',';
    out += fmt_float_rt(p.a_new);
    out += ',';
    out += fmt_float_rt(p.cr);
    out += '\n';
  }
}

}  // namespace lenslab
