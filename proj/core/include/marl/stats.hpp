#ifndef MARL_STATS_HPP_
#define MARL_STATS_HPP_

#include <span>

namespace marl::stats {

struct SampleSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1 denominator)
  int n = 0;
};

// Requires at least two values.
SampleSummary aggregate_seeds(std::span<const double> values);

struct ComparisonResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;  // Welch-Satterthwaite
  double p_value = 1.0;             // two-sided
  double cohens_d = 0.0;
};

// Welch's unequal-variance t-test. When both variances are zero the test
// degenerates: equal means give t = 0, p = 1; unequal means give t = +-inf,
// p = 0. df then falls back to n_a + n_b - 2.
ComparisonResult welch_t(const SampleSummary& a, const SampleSummary& b);

// (m_a - m_b) / pooled std, pooled over n - 1 weighted variances.
double cohens_d(const SampleSummary& a, const SampleSummary& b);

// I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

double student_t_cdf(double t, double df);
double two_sided_p_value(double t, double df);

}  // namespace marl::stats

#endif  // MARL_STATS_HPP_
