#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

// Distribution metrics (nats). Probabilities are epsilon-floored before any
// log so sampled supports with exact zeros stay finite.

namespace lenslab {

inline constexpr double kProbEps = 1e-12;

namespace detail {

template <typename Seq>
void check_dist(const Seq& p) {
  double s = 0.0;
  for (size_t i = 0; i < p.size(); ++i) s += static_cast<double>(p[i]);
  if (std::fabs(s - 1.0) > 1e-4) throw std::invalid_argument("not a distribution");
}

}  // namespace detail

template <typename Seq>
double entropy(const Seq& p) {
  detail::check_dist(p);
  double h = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double pi = static_cast<double>(p[i]);
    if (pi > 0.0) h -= pi * std::log(std::max(pi, kProbEps));
  }
  return h;
}

// KL(p || q)
template <typename Seq>
double forward_kl(const Seq& p, const Seq& q) {
  if (p.size() != q.size()) throw std::invalid_argument("size mismatch");
  detail::check_dist(p);
  detail::check_dist(q);
  double kl = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double pi = static_cast<double>(p[i]);
    if (pi > 0.0)
      kl += pi * (std::log(std::max(pi, kProbEps)) -
                  std::log(std::max(static_cast<double>(q[i]), kProbEps)));
  }
  return kl;
}

template <typename Seq>
double cross_entropy(size_t gold, const Seq& q) {
  detail::check_dist(q);
  if (gold >= q.size()) throw std::invalid_argument("gold index out of range");
  return -std::log(std::max(static_cast<double>(q[gold]), kProbEps));
}

template <typename Seq>
double total_variation(const Seq& p, const Seq& q) {
  if (p.size() != q.size()) throw std::invalid_argument("size mismatch");
  detail::check_dist(p);
  detail::check_dist(q);
  double s = 0.0;
  for (size_t i = 0; i < p.size(); ++i)
    s += std::fabs(static_cast<double>(p[i]) - static_cast<double>(q[i]));
  return 0.5 * s;
}

}  // namespace lenslab
