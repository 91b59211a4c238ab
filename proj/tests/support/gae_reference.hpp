#ifndef MARL_TESTS_GAE_REFERENCE_HPP_
#define MARL_TESTS_GAE_REFERENCE_HPP_

#include <cstdint>
#include <vector>

namespace marl::testing {

// Brute-force GAE: sum_k (gamma lambda)^k delta_{t+k}, truncated at episode ends.
inline std::vector<double> brute_force_gae(const std::vector<double>& r,
                                           const std::vector<double>& v,
                                           const std::vector<std::uint8_t>& d, double gamma,
                                           double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = (d[t] || t + 1 == n) ? 0.0 : v[t + 1];
    delta[t] = r[t] + gamma * next - v[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      adv[t] += weight * delta[k];
      if (d[k]) break;
      weight *= gamma * lambda;
    }
  }
  return adv;
}

}  // namespace marl::testing

#endif  // MARL_TESTS_GAE_REFERENCE_HPP_
