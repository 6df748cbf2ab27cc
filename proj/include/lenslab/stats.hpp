#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

// Welch t-test and descriptive statistics. The p-value comes from the
// regularized incomplete beta function, evaluated with a continued fraction
// (modified Lentz), so there is no dependency on an external stats library.

namespace lenslab::stats {

enum class Alternative { two_sided, greater, less };

struct TTestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
  Alternative alternative = Alternative::two_sided;
};

struct Descriptive {
  double mean = 0.0;
  double std = 0.0;  // unbiased (n-1); 0 when n < 2
  int n = 0;
};

inline Descriptive describe(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("describe: empty sample");
  Descriptive d;
  d.n = static_cast<int>(xs.size());
  for (double x : xs) d.mean += x;
  d.mean /= d.n;
  if (d.n >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - d.mean) * (x - d.mean);
    d.std = std::sqrt(ss / (d.n - 1));
  }
  return d;
}

namespace detail {

// Continued fraction for the incomplete beta (Numerical Recipes betacf form).
inline double beta_cf(double a, double b, double x) {
  constexpr double tol = 1e-12;
  constexpr double tiny = 1e-300;
  constexpr int max_iter = 500;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < tol) return h;
  }
  return h;  // converged to machine noise long before this for sane inputs
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double betainc(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("betainc: a,b must be > 0");
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("betainc: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                a * std::log(x) + b * std::log1p(-x));
  // Continued fraction converges fastest on the side of the mean a/(a+b);
  // mirror through I_x(a,b) = 1 - I_{1-x}(b,a) otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

// Upper-tail probability P(T >= t) for Student's t with nu degrees of freedom.
inline double student_t_sf(double t, double nu) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double ib = betainc(nu / 2.0, 0.5, nu / (nu + t * t));
  return t >= 0.0 ? ib / 2.0 : 1.0 - ib / 2.0;
}

inline TTestResult t_test(std::span<const double> a, std::span<const double> b,
                          Alternative alt = Alternative::two_sided) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t_test: need n >= 2 per sample");
  const Descriptive da = describe(a), db = describe(b);
  const double va = da.std * da.std, vb = db.std * db.std;
  const double sa = va / da.n, sb = vb / db.n;
  TTestResult r;
  r.alternative = alt;
  if (sa + sb == 0.0) {
    // Both samples constant. Equal means: no evidence, p = 1 by definition.
    r.degrees_of_freedom = static_cast<double>(da.n + db.n - 2);
    if (da.mean == db.mean) {
      r.t_statistic = 0.0;
      r.p_value = 1.0;
      return r;
    }
    r.t_statistic = da.mean > db.mean ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity();
  } else {
    r.t_statistic = (da.mean - db.mean) / std::sqrt(sa + sb);
    r.degrees_of_freedom = (sa + sb) * (sa + sb) /
                           (sa * sa / (da.n - 1) + sb * sb / (db.n - 1));
  }
  const double upper = student_t_sf(r.t_statistic, r.degrees_of_freedom);
  switch (alt) {
    case Alternative::greater: r.p_value = upper; break;
    case Alternative::less: r.p_value = 1.0 - upper; break;
    case Alternative::two_sided: r.p_value = 2.0 * std::min(upper, 1.0 - upper); break;
  }
  return r;
}

}  // namespace lenslab::stats
