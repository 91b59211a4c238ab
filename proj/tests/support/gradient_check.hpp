#ifndef MARL_TESTS_GRADIENT_CHECK_HPP_
#define MARL_TESTS_GRADIENT_CHECK_HPP_

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "marl/neural.hpp"

namespace marl::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped_kinks = 0;  // perturbation crossed a ReLU boundary
};

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Compares backward() against central differences of <forward(x), g> for
// every parameter and input coordinate.
inline GradCheckResult check_gradients(const nn::ParamSet& params, std::span<const double> input,
                                       std::span<const double> out_grad, double h = 1e-4) {
  GradCheckResult result;
  nn::ForwardCache cache;
  nn::forward(params, input, cache);
  const auto analytic = nn::backward(params, cache, out_grad);

  auto activation_signs = [](const nn::ForwardCache& c) {
    std::vector<bool> signs;
    for (std::size_t l = 0; l + 1 < c.pre_activations.size(); ++l) {
      for (double z : c.pre_activations[l]) signs.push_back(z > 0.0);
    }
    return signs;
  };
  auto objective = [&](const nn::ParamSet& p, std::span<const double> x,
                       std::vector<bool>* signs) {
    nn::ForwardCache c;
    const auto out = nn::forward(p, x, c);
    if (signs) *signs = activation_signs(c);
    double v = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) v += out[k] * out_grad[k];
    return v;
  };

  nn::ParamSet probe = params;
  std::vector<double> x(input.begin(), input.end());
  std::vector<bool> s_plus;
  std::vector<bool> s_minus;
  auto record = [&](double numeric, double exact) {
    if (s_plus != s_minus) {
      ++result.skipped_kinks;
      return;
    }
    result.max_rel_error = std::max(result.max_rel_error, rel_error(numeric, exact));
    ++result.checked;
  };

  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe.flat()[i];
    probe.mutable_flat()[i] = orig + h;
    const double fp = objective(probe, x, &s_plus);
    probe.mutable_flat()[i] = orig - h;
    const double fm = objective(probe, x, &s_minus);
    probe.mutable_flat()[i] = orig;
    record((fp - fm) / (2.0 * h), analytic.params[i]);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = objective(params, x, &s_plus);
    x[i] = orig - h;
    const double fm = objective(params, x, &s_minus);
    x[i] = orig;
    record((fp - fm) / (2.0 * h), analytic.input[i]);
  }
  return result;
}

// Random network with non-zero biases, random input and output weighting.
struct RandomProblem {
  nn::ParamSet params;
  std::vector<double> input;
  std::vector<double> out_grad;
};

inline RandomProblem random_problem(const nn::MlpSpec& spec, Rng& rng) {
  RandomProblem p{nn::init_params(spec, nn::InitScheme::kXavierUniform, rng), {}, {}};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < spec.num_layers(); ++l) {
    for (double& b : p.params.mutable_bias(l)) b = 0.1 * normal(rng);
  }
  p.input.resize(spec.input_size());
  for (double& v : p.input) v = normal(rng);
  p.out_grad.resize(spec.output_size());
  for (double& v : p.out_grad) v = normal(rng);
  return p;
}

// Specs with 1-4 layers and widths up to 64; index 0 is the shaper shape.
inline nn::MlpSpec random_spec(int index, Rng& rng) {
  if (index == 0) return nn::MlpSpec{{41, 64, 32, 16, 1}};
  std::uniform_int_distribution<int> depth(1, 4);
  std::uniform_int_distribution<int> width(1, 64);
  nn::MlpSpec spec;
  const int layers = depth(rng);
  for (int l = 0; l <= layers; ++l) spec.layer_sizes.push_back(width(rng));
  return spec;
}

}  // namespace marl::testing

#endif  // MARL_TESTS_GRADIENT_CHECK_HPP_
