#include "marl/neural.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace marl::nn {

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("MlpSpec needs at least 2 layer sizes");
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("MlpSpec layer sizes must be >= 1");
  }
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += static_cast<std::size_t>(layer_sizes[l + 1]) * (layer_sizes[l] + 1);
  }
  return n;
}

ParamSet::ParamSet(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t offset = 0;
  for (int l = 0; l < spec_.num_layers(); ++l) {
    const std::size_t in = spec_.layer_sizes[l];
    const std::size_t out = spec_.layer_sizes[l + 1];
    weight_offset_.push_back(offset);
    offset += in * out;
    bias_offset_.push_back(offset);
    offset += out;
  }
  values_.assign(offset, 0.0);
}

ParamSet ParamSet::from_flat(MlpSpec spec, std::span<const double> values) {
  ParamSet p(std::move(spec));
  if (values.size() != p.size()) {
    throw std::invalid_argument("flat parameter vector has " + std::to_string(values.size()) +
                                " entries, spec needs " + std::to_string(p.size()));
  }
  std::copy(values.begin(), values.end(), p.values_.begin());
  return p;
}

std::span<double> ParamSet::mutable_flat() {
  ++version_;
  return values_;
}

std::span<const double> ParamSet::weights(int layer) const {
  const std::size_t n = static_cast<std::size_t>(spec_.layer_sizes[layer]) * spec_.layer_sizes[layer + 1];
  return std::span<const double>(values_).subspan(weight_offset_[layer], n);
}

std::span<const double> ParamSet::bias(int layer) const {
  return std::span<const double>(values_).subspan(bias_offset_[layer], spec_.layer_sizes[layer + 1]);
}

std::span<double> ParamSet::mutable_weights(int layer) {
  ++version_;
  const std::size_t n = static_cast<std::size_t>(spec_.layer_sizes[layer]) * spec_.layer_sizes[layer + 1];
  return std::span<double>(values_).subspan(weight_offset_[layer], n);
}

std::span<double> ParamSet::mutable_bias(int layer) {
  ++version_;
  return std::span<double>(values_).subspan(bias_offset_[layer], spec_.layer_sizes[layer + 1]);
}

namespace {

void fill_orthogonal(std::span<double> w, int rows, int cols, double gain, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool transpose = rows < cols;
  const int m = transpose ? cols : rows;
  const int n = transpose ? rows : cols;
  Eigen::MatrixXd a(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, n);
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (int j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      w[static_cast<std::size_t>(i) * cols + j] = gain * (transpose ? q(j, i) : q(i, j));
    }
  }
}

void fill_layer(std::span<double> w, int rows, int cols, InitScheme scheme, Rng& rng) {
  switch (scheme) {
    case InitScheme::kOrthogonalGainSqrt2:
      fill_orthogonal(w, rows, cols, std::sqrt(2.0), rng);
      break;
    case InitScheme::kOrthogonalGain001:
      fill_orthogonal(w, rows, cols, 0.01, rng);
      break;
    case InitScheme::kOrthogonalUnitGain:
      fill_orthogonal(w, rows, cols, 1.0, rng);
      break;
    case InitScheme::kXavierUniform: {
      const double bound = std::sqrt(6.0 / (rows + cols));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& x : w) x = u(rng);
      break;
    }
  }
}

}  // namespace

ParamSet init_params(const MlpSpec& spec, InitScheme scheme, Rng& rng) {
  return init_params(spec, InitPlan{scheme, scheme}, rng);
}

ParamSet init_params(const MlpSpec& spec, const InitPlan& plan, Rng& rng) {
  ParamSet p(spec);
  const int layers = spec.num_layers();
  for (int l = 0; l < layers; ++l) {
    const InitScheme scheme = l + 1 == layers ? plan.output : plan.hidden;
    fill_layer(p.mutable_weights(l), spec.layer_sizes[l + 1], spec.layer_sizes[l], scheme, rng);
  }
  return p;
}

std::vector<double> forward(const ParamSet& params, std::span<const double> input) {
  ForwardCache cache;
  const auto out = forward(params, input, cache);
  return {out.begin(), out.end()};
}

std::span<const double> forward(const ParamSet& params, std::span<const double> input,
                                ForwardCache& cache) {
  const MlpSpec& spec = params.spec();
  if (static_cast<int>(input.size()) != spec.input_size()) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.size()) +
                                " entries, network expects " + std::to_string(spec.input_size()));
  }
  const int layers = spec.num_layers();
  cache.params = &params;
  cache.version = params.version();
  cache.layer_inputs.resize(layers);
  cache.pre_activations.resize(layers);
  cache.layer_inputs[0].assign(input.begin(), input.end());
  for (int l = 0; l < layers; ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const double* w = params.weights(l).data();
    const auto b = params.bias(l);
    const std::vector<double>& x = cache.layer_inputs[l];
    std::vector<double>& z = cache.pre_activations[l];
    z.resize(out);
    for (int o = 0; o < out; ++o) {
      const double* row = w + static_cast<std::size_t>(o) * in;
      double acc = b[o];
      for (int i = 0; i < in; ++i) acc += row[i] * x[i];
      z[o] = acc;
    }
    if (l + 1 < layers) {
      std::vector<double>& next = cache.layer_inputs[l + 1];
      next.resize(out);
      for (int o = 0; o < out; ++o) next[o] = z[o] > 0.0 ? z[o] : 0.0;
    }
  }
  return cache.pre_activations.back();
}

void backward(const ParamSet& params, const ForwardCache& cache,
              std::span<const double> output_grad, std::span<double> param_grad,
              std::span<double> input_grad) {
  if (cache.params != &params || cache.version != params.version()) {
    throw StaleCache("backward: cache was not produced by a forward pass on these parameters");
  }
  const MlpSpec& spec = params.spec();
  if (static_cast<int>(output_grad.size()) != spec.output_size()) {
    throw std::invalid_argument("backward: output gradient has the wrong length");
  }
  if (param_grad.size() != params.size()) {
    throw std::invalid_argument("backward: parameter gradient buffer has the wrong length");
  }
  if (!input_grad.empty() && static_cast<int>(input_grad.size()) != spec.input_size()) {
    throw std::invalid_argument("backward: input gradient buffer has the wrong length");
  }

  const int layers = spec.num_layers();
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  std::vector<double> upstream;
  for (int l = layers - 1; l >= 0; --l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const std::vector<double>& x = cache.layer_inputs[l];
    double* gw = param_grad.data() + params.weight_offset(l);
    double* gb = param_grad.data() + params.bias_offset(l);
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      if (d == 0.0) continue;
      double* row = gw + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) row[i] += d * x[i];
    }
    if (l == 0 && input_grad.empty()) break;

    const double* w = params.weights(l).data();
    upstream.assign(in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) upstream[i] += row[i] * d;
    }
    if (l == 0) {
      std::copy(upstream.begin(), upstream.end(), input_grad.begin());
      break;
    }
    const std::vector<double>& z_prev = cache.pre_activations[l - 1];
    for (int i = 0; i < in; ++i) {
      if (z_prev[i] <= 0.0) upstream[i] = 0.0;
    }
    delta.swap(upstream);
  }
}

Gradients backward(const ParamSet& params, const ForwardCache& cache,
                   std::span<const double> output_grad) {
  Gradients g;
  g.params.assign(params.size(), 0.0);
  g.input.assign(params.spec().input_size(), 0.0);
  backward(params, cache, output_grad, g.params, g.input);
  return g;
}

void adam_step(ParamSet& params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& config) {
  const std::size_t n = params.size();
  if (grads.size() != n) throw std::invalid_argument("adam_step: gradient length mismatch");
  if (state.first_moment.size() != n || state.second_moment.size() != n) {
    throw std::invalid_argument("adam_step: optimizer state length mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw std::domain_error("adam_step: non-finite gradient");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  std::span<double> p = params.mutable_flat();
  for (std::size_t i = 0; i < n; ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * grads[i];
    v = config.beta2 * v + (1.0 - config.beta2) * grads[i] * grads[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

double global_norm(std::span<const double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  return std::sqrt(sq);
}

double clip_global_norm(std::span<double> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

namespace categorical {
namespace {

void require_finite(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("categorical: empty logits");
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::domain_error("categorical: non-finite logit");
  }
}

}  // namespace

void log_softmax(std::span<const double> logits, std::span<double> out) {
  require_finite(logits);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double log_norm = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
}

std::vector<double> probabilities(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  log_softmax(logits, p);
  for (double& v : p) v = std::exp(v);
  return p;
}

double log_prob(std::span<const double> logits, int action) {
  if (action < 0 || action >= static_cast<int>(logits.size())) {
    throw std::out_of_range("categorical: action out of range");
  }
  std::vector<double> lp(logits.size());
  log_softmax(logits, lp);
  return lp[action];
}

double entropy(std::span<const double> logits) {
  std::vector<double> lp(logits.size());
  log_softmax(logits, lp);
  double h = 0.0;
  for (double v : lp) h -= std::exp(v) * v;
  return h;
}

Sample sample(std::span<const double> logits, Rng& rng) {
  std::vector<double> lp(logits.size());
  log_softmax(logits, lp);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  int chosen = static_cast<int>(lp.size()) - 1;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    cum += std::exp(lp[i]);
    if (u < cum) {
      chosen = static_cast<int>(i);
      break;
    }
  }
  // Rounding can leave cum slightly below 1; never return a zero-probability tail action.
  while (chosen > 0 && std::exp(lp[chosen]) == 0.0) --chosen;
  return {chosen, lp[chosen]};
}

void log_prob_grad(std::span<const double> logits, int action, std::span<double> out) {
  log_softmax(logits, out);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = -std::exp(out[i]);
  out[action] += 1.0;
}

void entropy_grad(std::span<const double> logits, std::span<double> out) {
  log_softmax(logits, out);
  double h = 0.0;
  for (double v : out) h -= std::exp(v) * v;
  for (double& v : out) v = -std::exp(v) * (v + h);
}

}  // namespace categorical

}  // namespace marl::nn
