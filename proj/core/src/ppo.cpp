#include "marl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace marl::ppo {

void PpoConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("PpoConfig: ") + what);
  };
  require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
  require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "gae_lambda must lie in [0, 1]");
  require(clip_ratio > 0.0, "clip_ratio must be > 0");
  require(update_epochs >= 1, "update_epochs must be >= 1");
  require(learning_rate >= 0.0, "learning_rate must be >= 0");
  require(max_grad_norm > 0.0, "max_grad_norm must be > 0");
  require(entropy_coef >= 0.0 && value_coef >= 0.0, "loss coefficients must be >= 0");
}

std::span<const double> AgentTrajectory::observation(std::size_t t) const {
  return std::span<const double>(observations).subspan(t * obs_dim, obs_dim);
}

std::span<const double> AgentTrajectory::next_observation(std::size_t t) const {
  return std::span<const double>(next_observations).subspan(t * obs_dim, obs_dim);
}

std::vector<double> AgentTrajectory::extrinsic_rewards() const {
  std::vector<double> r(size());
  for (std::size_t t = 0; t < r.size(); ++t) r[t] = reward_env[t] + reward_heuristic[t];
  return r;
}

std::vector<double> AgentTrajectory::total_rewards() const {
  std::vector<double> r = extrinsic_rewards();
  for (std::size_t t = 0; t < r.size(); ++t) r[t] += reward_shaped[t];
  return r;
}

std::span<const double> TrajectoryBatch::global_state(std::size_t t) const {
  return std::span<const double>(global_states).subspan(t * global_dim, global_dim);
}

std::span<const double> UpdateBatch::observation(std::size_t t) const {
  return std::span<const double>(observations).subspan(t * obs_dim, obs_dim);
}

std::span<const double> UpdateBatch::critic_input(std::size_t t) const {
  return std::span<const double>(critic_inputs).subspan(t * critic_dim, critic_dim);
}

AdvantageEstimate compute_gae(std::span<const double> rewards, std::span<const double> values,
                              std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("compute_gae: rewards, values and dones must have equal length");
  }
  AdvantageEstimate est;
  est.advantages.assign(n, 0.0);
  est.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    const double adv = delta + gamma * lambda * live * next_adv;
    est.advantages[i] = adv;
    est.returns[i] = adv + values[i];
    next_adv = adv;
    next_value = values[i];
  }
  return est;
}

namespace {
constexpr double kNormEpsilon = 1e-8;
}

void normalize_advantages(AdvantageEstimate& est) {
  const std::size_t n = est.advantages.size();
  if (n < 2) return;
  double mean = 0.0;
  for (double a : est.advantages) mean += a;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double a : est.advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(n);
  const double scale = std::sqrt(var) + kNormEpsilon;
  for (double& a : est.advantages) a = (a - mean) / scale;
  est.norm_mean = mean;
  est.norm_std = scale;
  est.normalized = true;
}

std::vector<double> normalization_vjp(const AdvantageEstimate& est,
                                      std::span<const double> upstream) {
  const std::size_t n = upstream.size();
  if (n != est.advantages.size()) throw std::invalid_argument("normalization_vjp: length mismatch");
  std::vector<double> out(upstream.begin(), upstream.end());
  if (!est.normalized) return out;
  const double scale = est.norm_std;
  const double sigma = scale - kNormEpsilon;
  double g_mean = 0.0;
  double gn_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    g_mean += upstream[i];
    gn_sum += upstream[i] * est.advantages[i];
  }
  g_mean /= static_cast<double>(n);
  const double coupling = sigma > 0.0 ? gn_sum / (static_cast<double>(n) * sigma) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (upstream[i] - g_mean) / scale - est.advantages[i] * coupling;
  }
  return out;
}

std::vector<double> gae_reward_vjp(std::span<const double> upstream,
                                   std::span<const std::uint8_t> dones, double gamma,
                                   double lambda) {
  const std::size_t n = upstream.size();
  if (dones.size() != n) throw std::invalid_argument("gae_reward_vjp: length mismatch");
  std::vector<double> out(n);
  double carry = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double live_prev = (k > 0 && !dones[k - 1]) ? 1.0 : 0.0;
    carry = upstream[k] + gamma * lambda * live_prev * carry;
    out[k] = carry;
  }
  return out;
}

PolicyTerm policy_objective(double log_prob_new, double log_prob_old, double advantage,
                            double clip_ratio) {
  PolicyTerm term;
  const double ratio = std::exp(log_prob_new - log_prob_old);
  const double clipped_ratio = std::clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio);
  const double unclipped_obj = ratio * advantage;
  const double clipped_obj = clipped_ratio * advantage;
  term.ratio = ratio;
  if (clipped_obj < unclipped_obj) {
    term.loss = -clipped_obj;
    term.clipped = clipped_ratio != ratio;
    term.grad_log_prob = term.clipped ? 0.0 : -unclipped_obj;
  } else {
    term.loss = -unclipped_obj;
    term.grad_log_prob = -unclipped_obj;  // d(-rho*A)/d log_prob = -rho*A
  }
  return term;
}

ValueTerm value_loss(double value, double target) {
  const double diff = value - target;
  return {0.5 * diff * diff, diff};
}

void LossReport::finalize() {
  policy_loss = value_loss = entropy = clip_fraction = 0.0;
  if (epochs.empty()) return;
  for (const auto& e : epochs) {
    policy_loss += e.policy_loss;
    value_loss += e.value_loss;
    entropy += e.entropy;
    clip_fraction += e.clip_fraction;
  }
  const double n = static_cast<double>(epochs.size());
  policy_loss /= n;
  value_loss /= n;
  entropy /= n;
  clip_fraction /= n;
}

namespace {

void require_finite(double v, const char* what, int epoch) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "non-finite " << what << " in PPO epoch " << epoch << " (value " << v << ")";
    throw NonFiniteLoss(msg.str());
  }
}

double critic_epoch(std::span<const double> inputs, int input_dim, std::span<const double> returns,
                    nn::ParamSet& critic, nn::AdamState& opt, const PpoConfig& config, int epoch) {
  const std::size_t n = returns.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> grad(critic.size(), 0.0);
  nn::ForwardCache cache;
  double loss = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto out = nn::forward(critic, inputs.subspan(t * input_dim, input_dim), cache);
    const ValueTerm v = value_loss(out[0], returns[t]);
    loss += v.loss;
    const double g = config.value_coef * v.grad * inv_n;
    nn::backward(critic, cache, std::span<const double>(&g, 1), grad);
  }
  loss *= inv_n;
  require_finite(loss, "value loss", epoch);
  nn::clip_global_norm(grad, config.max_grad_norm);
  nn::adam_step(critic, grad, opt, config.learning_rate);
  return loss;
}

}  // namespace

LossReport run_update(const UpdateBatch& batch, nn::ParamSet& actor, nn::AdamState& actor_opt,
                      nn::ParamSet* critic, nn::AdamState* critic_opt, const PpoConfig& config) {
  config.validate();
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("run_update: empty batch");
  if (batch.old_log_probs.size() != n || batch.advantages.size() != n ||
      batch.returns.size() != n || batch.observations.size() != n * batch.obs_dim) {
    throw std::invalid_argument("run_update: inconsistent batch");
  }
  if ((critic == nullptr) != (critic_opt == nullptr)) {
    throw std::invalid_argument("run_update: critic and critic optimizer must come together");
  }

  AdvantageEstimate adv;
  adv.advantages = batch.advantages;
  if (config.normalize_advantages) normalize_advantages(adv);

  const int n_actions = actor.spec().output_size();
  const double inv_n = 1.0 / static_cast<double>(n);
  LossReport report;
  std::vector<double> grad(actor.size());
  std::vector<double> logp(n_actions), dlogp(n_actions), dent(n_actions), dlogits(n_actions);
  nn::ForwardCache cache;

  for (int epoch = 0; epoch < config.update_epochs; ++epoch) {
    EpochStats stats;
    std::fill(grad.begin(), grad.end(), 0.0);
    std::size_t clipped = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const auto logits = nn::forward(actor, batch.observation(t), cache);
      nn::categorical::log_softmax(logits, logp);
      const int a = batch.actions[t];
      const PolicyTerm term =
          policy_objective(logp[a], batch.old_log_probs[t], adv.advantages[t], config.clip_ratio);
      stats.policy_loss += term.loss;
      if (std::abs(term.ratio - 1.0) > config.clip_ratio) ++clipped;

      double h = 0.0;
      for (double v : logp) h -= std::exp(v) * v;
      stats.entropy += h;

      nn::categorical::log_prob_grad(logits, a, dlogp);
      nn::categorical::entropy_grad(logits, dent);
      for (int k = 0; k < n_actions; ++k) {
        dlogits[k] = (term.grad_log_prob * dlogp[k] - config.entropy_coef * dent[k]) * inv_n;
      }
      nn::backward(actor, cache, dlogits, grad);
    }
    stats.policy_loss *= inv_n;
    stats.entropy *= inv_n;
    stats.clip_fraction = static_cast<double>(clipped) * inv_n;
    require_finite(stats.policy_loss, "policy loss", epoch);
    require_finite(stats.entropy, "entropy", epoch);
    nn::clip_global_norm(grad, config.max_grad_norm);
    nn::adam_step(actor, grad, actor_opt, config.learning_rate);

    if (critic != nullptr) {
      stats.value_loss = critic_epoch(batch.critic_inputs, batch.critic_dim, batch.returns,
                                      *critic, *critic_opt, config, epoch);
    }
    report.epochs.push_back(stats);
  }
  report.finalize();
  return report;
}

LossReport train_critic(std::span<const double> inputs, int input_dim,
                        std::span<const double> returns, nn::ParamSet& critic,
                        nn::AdamState& critic_opt, const PpoConfig& config) {
  config.validate();
  if (returns.empty()) throw std::invalid_argument("train_critic: empty batch");
  if (inputs.size() != returns.size() * static_cast<std::size_t>(input_dim)) {
    throw std::invalid_argument("train_critic: input/return length mismatch");
  }
  LossReport report;
  for (int epoch = 0; epoch < config.update_epochs; ++epoch) {
    EpochStats stats;
    stats.value_loss = critic_epoch(inputs, input_dim, returns, critic, critic_opt, config, epoch);
    report.epochs.push_back(stats);
  }
  report.finalize();
  return report;
}

}  // namespace marl::ppo
