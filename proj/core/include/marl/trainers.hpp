#ifndef MARL_TRAINERS_HPP_
#define MARL_TRAINERS_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marl/neural.hpp"
#include "marl/ppo.hpp"
#include "marl/rng.hpp"
#include "marl/spread_env.hpp"

namespace marl::train {

enum class Algorithm { kMappo, kIppo, kDmarlRsa };

std::string_view to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view name);  // "MAPPO", "IPPO", "DMARL_RSA"

enum class ShaperVariant { kMetaGradient, kNaiveJoint };

std::string_view to_string(ShaperVariant variant);
ShaperVariant parse_shaper_variant(std::string_view name);  // "meta_gradient", "naive_joint"

struct ShaperConfig {
  double alpha = 1.0;
  double lr_scale = 0.5;  // shaper lr = actor lr * lr_scale
  ShaperVariant variant = ShaperVariant::kMetaGradient;
  double output_l2_coef = 0.01;  // naive_joint only

  void validate() const;
};

struct TrainRunConfig {
  Algorithm algorithm = Algorithm::kIppo;
  int episodes = 5000;
  std::vector<std::uint64_t> seeds = {42, 123, 999};
  int episodes_per_update = 10;
  env::EnvConfig env;
  ppo::PpoConfig ppo;
  ShaperConfig shaper;
  nn::InitScheme hidden_init = nn::InitScheme::kOrthogonalGainSqrt2;
  // Control runs for drift measurement: act with the initial policies, never update.
  bool freeze_policies = false;

  // Per-algorithm defaults (MAPPO: lr 5e-4, 4 epochs; others: lr 3e-4, 3 epochs).
  static TrainRunConfig defaults_for(Algorithm algorithm);
  void validate() const;
};

inline constexpr int kHiddenWidth = 64;

nn::MlpSpec actor_spec(int obs_dim, int n_actions);
nn::MlpSpec critic_spec(int input_dim);
nn::MlpSpec shaper_spec(int obs_dim, int n_actions);

struct Network {
  nn::ParamSet params;
  nn::AdamState optimizer;

  explicit Network(nn::ParamSet p) : params(std::move(p)), optimizer(params.size()) {}
};

struct AgentLearner {
  Network actor;
  std::optional<Network> critic;  // absent under MAPPO (shared critic lives on the team)
  std::optional<Network> shaper;  // present iff DMARL-RSA
};

struct Team {
  Algorithm algorithm = Algorithm::kIppo;
  std::vector<AgentLearner> agents;
  std::optional<Network> shared_critic;  // MAPPO only

  int critic_input_dim() const;
};

// Actors, critics and shapers are drawn from separate RNG streams of `seed`.
Team make_team(const TrainRunConfig& config, std::uint64_t seed);

struct NetworkInfo {
  std::string name;  // e.g. "agent0/actor", "shared_critic"
  std::size_t parameters = 0;
};
std::vector<NetworkInfo> describe_networks(const Team& team);

// Concatenation of every agent's observation in agent-index order.
std::vector<double> build_global_state(std::span<const env::Observation> observations,
                                       int expected_agents);

// obs ++ one_hot(action) ++ next_obs
std::vector<double> shaper_input(std::span<const double> obs, int action, int n_actions,
                                 std::span<const double> next_obs);
double shaped_reward(const nn::ParamSet& shaper, std::span<const double> obs, int action,
                     std::span<const double> next_obs, double alpha);

// Decentralized action selection: the actor sees only its own observation.
nn::categorical::Sample select_action(const nn::ParamSet& actor,
                                      std::span<const double> local_observation, Rng& rng);

struct EpisodeMetrics {
  double mean_agent_total = 0.0;  // mean over agents of the summed per-step total reward
  double env_component = 0.0;
  double heuristic_component = 0.0;
  double shaped_component = 0.0;
  int landmarks_covered_final = 0;
  int collision_count = 0;  // colliding pairs summed over steps
};

// Per-step hook used for drift logging.
struct Transition {
  int episode = 0;
  int agent = 0;
  std::span<const double> observation;
  int action = 0;
  std::span<const double> next_observation;
};
using TransitionSink = std::function<void(const Transition&)>;

struct Rollout {
  ppo::TrajectoryBatch batch;
  std::vector<EpisodeMetrics> episodes;
};

// Runs n_episodes full episodes. Episode e is reset with mix_seed(run_seed, e).
Rollout collect_episodes(const env::SpreadEnv& env, const Team& team, int first_episode,
                         int n_episodes, std::uint64_t run_seed, double shaper_alpha, Rng& rng,
                         const TransitionSink& sink = {});

struct ShaperReport {
  double objective = 0.0;  // extrinsic surrogate (meta) or policy loss (naive)
  double gradient_norm = 0.0;
  double mean_abs_output = 0.0;
  double max_abs_output = 0.0;
};

struct TeamUpdateReport {
  std::vector<ppo::LossReport> agents;
  std::optional<ppo::LossReport> shared_critic;
  std::vector<ShaperReport> shapers;
};

TeamUpdateReport update_ippo(Team& team, const ppo::TrajectoryBatch& batch,
                             const ppo::PpoConfig& config);
TeamUpdateReport update_mappo(Team& team, const ppo::TrajectoryBatch& batch,
                              const ppo::PpoConfig& config);
TeamUpdateReport update_dmarl(Team& team, const ppo::TrajectoryBatch& batch,
                              const ppo::PpoConfig& config, const ShaperConfig& shaper_config);

// Advantages/returns for one agent's trajectory under its own rewards and values.
ppo::UpdateBatch make_update_batch(const ppo::AgentTrajectory& traj,
                                   std::span<const double> rewards,
                                   std::span<const double> critic_inputs, int critic_dim,
                                   const ppo::PpoConfig& config);

// Learned reward shaping --------------------------------------------------

// Gradient of (variant objective) w.r.t. the shaper parameters, as a
// descent direction. For kMetaGradient the objective is the negated
// extrinsic surrogate after a provisional actor step taken on shaped
// advantages; for kNaiveJoint it is the actor's clipped policy loss plus an
// output L2 penalty.
struct ShaperGradient {
  std::vector<double> gradient;
  double objective = 0.0;
  std::vector<double> outputs;  // raw shaper outputs R(s, a, s')
};

ShaperGradient meta_shaper_gradient(const nn::ParamSet& actor, const nn::AdamState& actor_opt,
                                    const nn::ParamSet& shaper,
                                    const ppo::AgentTrajectory& traj,
                                    const ppo::PpoConfig& config, const ShaperConfig& shaper_config);

ShaperGradient naive_shaper_gradient(const nn::ParamSet& actor, const nn::ParamSet& shaper,
                                     const ppo::AgentTrajectory& traj,
                                     const ppo::PpoConfig& config,
                                     const ShaperConfig& shaper_config);

// J_ext(theta'): extrinsic surrogate evaluated after the provisional actor
// step the current shaper induces. Exposed for sign checks.
double provisional_extrinsic_surrogate(const nn::ParamSet& actor, const nn::AdamState& actor_opt,
                                       const nn::ParamSet& shaper,
                                       const ppo::AgentTrajectory& traj,
                                       const ppo::PpoConfig& config,
                                       const ShaperConfig& shaper_config);

ShaperReport apply_shaper_gradient(Network& shaper, ShaperGradient grad,
                                   const ppo::PpoConfig& config, const ShaperConfig& shaper_config);

// Driver ------------------------------------------------------------------

using EpisodeCallback = std::function<void(int episode_index, const EpisodeMetrics&)>;

class TrainingRun {
 public:
  TrainingRun(TrainRunConfig config, std::uint64_t seed);

  // Collects one update's worth of episodes and applies the update.
  std::vector<EpisodeMetrics> iterate();
  void run(const EpisodeCallback& on_episode);

  void set_transition_sink(TransitionSink sink) { sink_ = std::move(sink); }

  const Team& team() const { return team_; }
  const TrainRunConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  int episodes_done() const { return episodes_done_; }
  const TeamUpdateReport& last_update() const { return last_update_; }

  // {algo}_{seed}_{agent}_{role}.ckpt
  void save_checkpoints(const std::filesystem::path& dir) const;

 private:
  TrainRunConfig config_;
  std::uint64_t seed_;
  env::SpreadEnv env_;
  Team team_;
  Rng action_rng_;
  int episodes_done_ = 0;
  TeamUpdateReport last_update_;
  TransitionSink sink_;
};

}  // namespace marl::train

#endif  // MARL_TRAINERS_HPP_
