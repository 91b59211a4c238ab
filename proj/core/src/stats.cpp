#include "marl/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace marl::stats {

SampleSummary aggregate_seeds(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("aggregate_seeds: need at least 2 values");
  SampleSummary s;
  s.n = static_cast<int>(values.size());
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("aggregate_seeds: non-finite value");
    s.mean += v;
  }
  s.mean /= s.n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / (s.n - 1));
  return s;
}

namespace {

void require_testable(const SampleSummary& s) {
  if (s.n < 2) throw std::invalid_argument("statistical test needs n >= 2 in each group");
  if (!(s.std >= 0.0)) throw std::invalid_argument("standard deviation must be >= 0");
}

// Continued fraction for I_x(a, b) (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("incomplete beta: a, b must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("incomplete beta: x must be in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fastest on this side of the mean.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double two_sided_p_value(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be > 0");
  if (std::isnan(t)) throw std::invalid_argument("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return regularized_incomplete_beta(0.5 * df, 0.5, x);
}

double student_t_cdf(double t, double df) {
  const double tail = 0.5 * two_sided_p_value(t, df);
  return t >= 0.0 ? 1.0 - tail : tail;
}

ComparisonResult welch_t(const SampleSummary& a, const SampleSummary& b) {
  require_testable(a);
  require_testable(b);
  ComparisonResult r;
  r.cohens_d = cohens_d(a, b);
  const double va = a.std * a.std / a.n;
  const double vb = b.std * b.std / b.n;
  const double diff = a.mean - b.mean;
  if (va + vb == 0.0) {
    r.degrees_of_freedom = a.n + b.n - 2;
    if (diff == 0.0) {
      r.t_statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), diff);
      r.p_value = 0.0;
    }
    return r;
  }
  r.t_statistic = diff / std::sqrt(va + vb);
  r.degrees_of_freedom =
      (va + vb) * (va + vb) / (va * va / (a.n - 1) + vb * vb / (b.n - 1));
  r.p_value = two_sided_p_value(r.t_statistic, r.degrees_of_freedom);
  return r;
}

double cohens_d(const SampleSummary& a, const SampleSummary& b) {
  require_testable(a);
  require_testable(b);
  const double pooled_var =
      ((a.n - 1) * a.std * a.std + (b.n - 1) * b.std * b.std) / (a.n + b.n - 2);
  const double diff = a.mean - b.mean;
  if (pooled_var == 0.0) {
    return diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  return diff / std::sqrt(pooled_var);
}

}  // namespace marl::stats
