// Learned per-agent reward shaping.
//
// Meta-gradient variant: the shaper is credited for how much a one-step actor
// update on shaped advantages improves the extrinsic (env + heuristic) PPO
// surrogate. The provisional step is an Adam step whose moment estimates are
// held constant, so its Jacobian w.r.t. the policy gradient is diagonal.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "marl/trainers.hpp"

namespace marl::train {
namespace {

struct ShaperForward {
  std::vector<std::vector<double>> inputs;
  std::vector<double> outputs;
};

ShaperForward run_shaper(const nn::ParamSet& shaper, const ppo::AgentTrajectory& traj,
                         int n_actions) {
  ShaperForward f;
  const std::size_t T = traj.size();
  f.inputs.reserve(T);
  f.outputs.resize(T);
  nn::ForwardCache cache;
  for (std::size_t t = 0; t < T; ++t) {
    f.inputs.push_back(
        shaper_input(traj.observation(t), traj.actions[t], n_actions, traj.next_observation(t)));
    f.outputs[t] = nn::forward(shaper, f.inputs.back(), cache)[0];
  }
  return f;
}

// sum_k coeff[k] * dR_k/dphi
std::vector<double> shaper_param_gradient(const nn::ParamSet& shaper, const ShaperForward& f,
                                          std::span<const double> coeff) {
  std::vector<double> grad(shaper.size(), 0.0);
  nn::ForwardCache cache;
  for (std::size_t k = 0; k < coeff.size(); ++k) {
    if (coeff[k] == 0.0) continue;
    nn::forward(shaper, f.inputs[k], cache);
    nn::backward(shaper, cache, std::span<const double>(&coeff[k], 1), grad);
  }
  return grad;
}

ppo::AdvantageEstimate shaped_advantages(const ppo::AgentTrajectory& traj,
                                         std::span<const double> outputs, double alpha,
                                         const ppo::PpoConfig& config) {
  std::vector<double> rewards = traj.extrinsic_rewards();
  for (std::size_t t = 0; t < rewards.size(); ++t) rewards[t] += alpha * outputs[t];
  ppo::AdvantageEstimate est =
      ppo::compute_gae(rewards, traj.values, traj.dones, config.gamma, config.gae_lambda);
  if (config.normalize_advantages) ppo::normalize_advantages(est);
  return est;
}

// Normalized discounted reward-to-go of the extrinsic reward; the batch mean
// acts as the baseline.
std::vector<double> extrinsic_advantages(const ppo::AgentTrajectory& traj, double gamma) {
  const std::vector<double> r = traj.extrinsic_rewards();
  ppo::AdvantageEstimate est;
  est.advantages.assign(r.size(), 0.0);
  double running = 0.0;
  for (std::size_t t = r.size(); t-- > 0;) {
    if (traj.dones[t]) running = 0.0;
    running = r[t] + gamma * running;
    est.advantages[t] = running;
  }
  ppo::normalize_advantages(est);
  return est.advantages;
}

struct ProvisionalStep {
  nn::ParamSet actor;             // theta'
  std::vector<double> step_jac;   // d(theta'_i)/d(g_i), diagonal
  double surrogate = 0.0;         // J_ext(theta')
  std::vector<double> surrogate_grad;  // dJ_ext/dtheta' (ascent)
};

ProvisionalStep provisional_step(const nn::ParamSet& actor, const nn::AdamState& opt,
                                 const ppo::AgentTrajectory& traj,
                                 std::span<const double> shaped_adv,
                                 const ppo::PpoConfig& config, bool want_gradient) {
  const std::size_t T = traj.size();
  const int n_actions = actor.spec().output_size();
  const double inv_t = 1.0 / static_cast<double>(T);
  std::vector<double> dlogp(n_actions), dent(n_actions), dlogits(n_actions);
  nn::ForwardCache cache;

  // PPO gradient at the anchor (rho = 1): -mean(A * grad log pi) - c_H * grad H.
  std::vector<double> g(actor.size(), 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto logits = nn::forward(actor, traj.observation(t), cache);
    nn::categorical::log_prob_grad(logits, traj.actions[t], dlogp);
    nn::categorical::entropy_grad(logits, dent);
    for (int k = 0; k < n_actions; ++k) {
      dlogits[k] = (-shaped_adv[t] * dlogp[k] - config.entropy_coef * dent[k]) * inv_t;
    }
    nn::backward(actor, cache, dlogits, g);
  }
  const double norm = nn::global_norm(g);
  const double clip = norm > config.max_grad_norm ? config.max_grad_norm / norm : 1.0;

  const nn::AdamConfig adam;
  const double step = static_cast<double>(opt.step_count + 1);
  const double c1 = 1.0 - std::pow(adam.beta1, step);
  const double c2 = 1.0 - std::pow(adam.beta2, step);
  ProvisionalStep out;
  out.actor = actor;
  out.step_jac.resize(actor.size());
  {
    std::span<double> theta = out.actor.mutable_flat();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = clip * g[i];
      const double m = adam.beta1 * opt.first_moment[i] + (1.0 - adam.beta1) * gi;
      const double v = adam.beta2 * opt.second_moment[i] + (1.0 - adam.beta2) * gi * gi;
      const double denom = std::sqrt(v / c2) + adam.epsilon;
      theta[i] -= config.learning_rate * (m / c1) / denom;
      out.step_jac[i] = -config.learning_rate * clip * ((1.0 - adam.beta1) / c1) / denom;
    }
  }

  const std::vector<double> ext = extrinsic_advantages(traj, config.gamma);
  if (want_gradient) out.surrogate_grad.assign(actor.size(), 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto logits = nn::forward(out.actor, traj.observation(t), cache);
    const double lp = nn::categorical::log_prob(logits, traj.actions[t]);
    const double ratio = std::exp(lp - traj.log_probs[t]);
    out.surrogate += ratio * ext[t] * inv_t;
    if (want_gradient) {
      nn::categorical::log_prob_grad(logits, traj.actions[t], dlogp);
      for (int k = 0; k < n_actions; ++k) dlogits[k] = ratio * ext[t] * inv_t * dlogp[k];
      nn::backward(out.actor, cache, dlogits, out.surrogate_grad);
    }
  }
  return out;
}

void require_shaper_shapes(const nn::ParamSet& actor, const nn::ParamSet& shaper,
                           const ppo::AgentTrajectory& traj) {
  const int expected = 2 * traj.obs_dim + actor.spec().output_size();
  if (shaper.spec().input_size() != expected || shaper.spec().output_size() != 1) {
    throw std::invalid_argument("shaper input width does not match obs ++ one-hot ++ next obs");
  }
  if (traj.size() == 0) throw std::invalid_argument("shaper update on an empty trajectory");
}

}  // namespace

double provisional_extrinsic_surrogate(const nn::ParamSet& actor, const nn::AdamState& actor_opt,
                                       const nn::ParamSet& shaper,
                                       const ppo::AgentTrajectory& traj,
                                       const ppo::PpoConfig& config,
                                       const ShaperConfig& shaper_config) {
  require_shaper_shapes(actor, shaper, traj);
  const ShaperForward f = run_shaper(shaper, traj, actor.spec().output_size());
  const auto est = shaped_advantages(traj, f.outputs, shaper_config.alpha, config);
  return provisional_step(actor, actor_opt, traj, est.advantages, config, false).surrogate;
}

ShaperGradient meta_shaper_gradient(const nn::ParamSet& actor, const nn::AdamState& actor_opt,
                                    const nn::ParamSet& shaper,
                                    const ppo::AgentTrajectory& traj,
                                    const ppo::PpoConfig& config,
                                    const ShaperConfig& shaper_config) {
  require_shaper_shapes(actor, shaper, traj);
  const std::size_t T = traj.size();
  const int n_actions = actor.spec().output_size();
  const double alpha = shaper_config.alpha;

  ShaperForward f = run_shaper(shaper, traj, n_actions);
  const ppo::AdvantageEstimate est = shaped_advantages(traj, f.outputs, alpha, config);
  const ProvisionalStep prov = provisional_step(actor, actor_opt, traj, est.advantages, config, true);

  ShaperGradient out;
  out.objective = prov.surrogate;
  out.outputs = f.outputs;
  if (alpha == 0.0) {
    out.gradient.assign(shaper.size(), 0.0);
    return out;
  }

  // dJ/dA_t = (1/T) * (J_step^T dJ/dtheta') . (-grad log pi_t) ; J_step is diagonal.
  std::vector<double> direction(actor.size());
  for (std::size_t i = 0; i < direction.size(); ++i) {
    direction[i] = prov.step_jac[i] * prov.surrogate_grad[i];
  }
  std::vector<double> d_adv(T);
  std::vector<double> scratch(actor.size());
  std::vector<double> dlogp(n_actions);
  nn::ForwardCache cache;
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto logits = nn::forward(actor, traj.observation(t), cache);
    nn::categorical::log_prob_grad(logits, traj.actions[t], dlogp);
    std::fill(scratch.begin(), scratch.end(), 0.0);
    nn::backward(actor, cache, dlogp, scratch);
    const double dot = std::inner_product(scratch.begin(), scratch.end(), direction.begin(), 0.0);
    d_adv[t] = -inv_t * dot;
  }
  const std::vector<double> d_raw = ppo::normalization_vjp(est, d_adv);
  const std::vector<double> d_reward =
      ppo::gae_reward_vjp(d_raw, traj.dones, config.gamma, config.gae_lambda);
  // Descend on -J.
  std::vector<double> coeff(T);
  for (std::size_t k = 0; k < T; ++k) coeff[k] = -alpha * d_reward[k];
  out.gradient = shaper_param_gradient(shaper, f, coeff);
  return out;
}

ShaperGradient naive_shaper_gradient(const nn::ParamSet& actor, const nn::ParamSet& shaper,
                                     const ppo::AgentTrajectory& traj,
                                     const ppo::PpoConfig& config,
                                     const ShaperConfig& shaper_config) {
  require_shaper_shapes(actor, shaper, traj);
  const std::size_t T = traj.size();
  const int n_actions = actor.spec().output_size();
  const double alpha = shaper_config.alpha;
  const double inv_t = 1.0 / static_cast<double>(T);

  ShaperForward f = run_shaper(shaper, traj, n_actions);
  const ppo::AdvantageEstimate est = shaped_advantages(traj, f.outputs, alpha, config);

  ShaperGradient out;
  out.outputs = f.outputs;
  std::vector<double> d_adv(T);
  nn::ForwardCache cache;
  for (std::size_t t = 0; t < T; ++t) {
    const auto logits = nn::forward(actor, traj.observation(t), cache);
    const double lp = nn::categorical::log_prob(logits, traj.actions[t]);
    const ppo::PolicyTerm term =
        ppo::policy_objective(lp, traj.log_probs[t], est.advantages[t], config.clip_ratio);
    out.objective += term.loss * inv_t;
    const double effective_ratio =
        term.clipped ? std::clamp(term.ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio)
                     : term.ratio;
    d_adv[t] = -effective_ratio * inv_t;
  }
  const std::vector<double> d_raw = ppo::normalization_vjp(est, d_adv);
  const std::vector<double> d_reward =
      ppo::gae_reward_vjp(d_raw, traj.dones, config.gamma, config.gae_lambda);
  std::vector<double> coeff(T);
  for (std::size_t k = 0; k < T; ++k) {
    const double r = f.outputs[k];
    out.objective += shaper_config.output_l2_coef * r * r * inv_t;
    coeff[k] = alpha * d_reward[k] + 2.0 * shaper_config.output_l2_coef * r * inv_t;
  }
  out.gradient = shaper_param_gradient(shaper, f, coeff);
  return out;
}

ShaperReport apply_shaper_gradient(Network& shaper, ShaperGradient grad,
                                   const ppo::PpoConfig& config,
                                   const ShaperConfig& shaper_config) {
  ShaperReport report;
  report.objective = grad.objective;
  for (double r : grad.outputs) {
    report.mean_abs_output += std::abs(r);
    report.max_abs_output = std::max(report.max_abs_output, std::abs(r));
  }
  if (!grad.outputs.empty()) report.mean_abs_output /= static_cast<double>(grad.outputs.size());
  report.gradient_norm = nn::clip_global_norm(grad.gradient, config.max_grad_norm);
  nn::adam_step(shaper.params, grad.gradient, shaper.optimizer,
                config.learning_rate * shaper_config.lr_scale);
  return report;
}

}  // namespace marl::train
