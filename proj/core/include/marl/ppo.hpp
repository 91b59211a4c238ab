#ifndef MARL_PPO_HPP_
#define MARL_PPO_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "marl/neural.hpp"

namespace marl::ppo {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int update_epochs = 3;
  double learning_rate = 3e-4;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;

  void validate() const;
};

// Per-agent rollout storage, one row per environment step.
struct AgentTrajectory {
  int obs_dim = 0;
  std::vector<double> observations;       // size() x obs_dim
  std::vector<double> next_observations;  // size() x obs_dim
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> reward_env;
  std::vector<double> reward_heuristic;
  std::vector<double> reward_shaped;
  std::vector<std::uint8_t> dones;

  std::size_t size() const { return actions.size(); }
  std::span<const double> observation(std::size_t t) const;
  std::span<const double> next_observation(std::size_t t) const;

  // env + heuristic
  std::vector<double> extrinsic_rewards() const;
  // (env + heuristic) + shaped
  std::vector<double> total_rewards() const;
};

struct TrajectoryBatch {
  std::vector<AgentTrajectory> agents;
  int global_dim = 0;
  std::vector<double> global_states;  // steps x global_dim, shared by all agents

  std::span<const double> global_state(std::size_t t) const;
  std::size_t steps() const { return agents.empty() ? 0 : agents.front().size(); }
};

struct AdvantageEstimate {
  std::vector<double> advantages;
  std::vector<double> returns;  // raw advantage + value, fixed before normalization
  double norm_mean = 0.0;
  double norm_std = 1.0;
  bool normalized = false;
};

// Generalized advantage estimation. The value after a done step is taken as 0.
AdvantageEstimate compute_gae(std::span<const double> rewards, std::span<const double> values,
                              std::span<const std::uint8_t> dones, double gamma, double lambda);

// Shift/scale advantages to zero mean, unit (population) std. Batches with
// fewer than two samples are left untouched.
void normalize_advantages(AdvantageEstimate& estimate);

// Vector-Jacobian product of normalize_advantages: maps d/d(normalized) to
// d/d(raw advantages).
std::vector<double> normalization_vjp(const AdvantageEstimate& estimate,
                                      std::span<const double> upstream);

// Vector-Jacobian product of compute_gae w.r.t. the rewards: maps d/dA to d/dr.
std::vector<double> gae_reward_vjp(std::span<const double> upstream,
                                   std::span<const std::uint8_t> dones, double gamma,
                                   double lambda);

struct PolicyTerm {
  double loss = 0.0;
  double grad_log_prob = 0.0;  // d loss / d log_prob_new
  double ratio = 1.0;
  bool clipped = false;        // clipped branch active and binding
};

// -min(rho * A, clip(rho, 1-eps, 1+eps) * A)
PolicyTerm policy_objective(double log_prob_new, double log_prob_old, double advantage,
                            double clip_ratio);

struct ValueTerm {
  double loss = 0.0;
  double grad = 0.0;
};

// 0.5 * (value - target)^2
ValueTerm value_loss(double value, double target);

struct UpdateBatch {
  int obs_dim = 0;
  int critic_dim = 0;
  std::vector<double> observations;   // actor inputs
  std::vector<double> critic_inputs;  // may equal observations
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;     // raw; normalized inside run_update
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
  std::span<const double> observation(std::size_t t) const;
  std::span<const double> critic_input(std::size_t t) const;
};

struct EpochStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

struct LossReport {
  std::vector<EpochStats> epochs;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;

  void finalize();  // fills the means from epochs
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Full-batch PPO epochs. The actor minimizes policy - entropy_coef * entropy;
// the critic (when given) minimizes value_coef * value loss. Each network's
// gradient is clipped independently before its own Adam step.
LossReport run_update(const UpdateBatch& batch, nn::ParamSet& actor, nn::AdamState& actor_opt,
                      nn::ParamSet* critic, nn::AdamState* critic_opt, const PpoConfig& config);

// Critic-only regression on (input, return) pairs; used for MAPPO's shared critic.
LossReport train_critic(std::span<const double> inputs, int input_dim,
                        std::span<const double> returns, nn::ParamSet& critic,
                        nn::AdamState& critic_opt, const PpoConfig& config);

}  // namespace marl::ppo

#endif  // MARL_PPO_HPP_
