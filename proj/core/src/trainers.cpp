#include "marl/trainers.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace marl::train {

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kMappo: return "MAPPO";
    case Algorithm::kIppo: return "IPPO";
    case Algorithm::kDmarlRsa: return "DMARL_RSA";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "MAPPO") return Algorithm::kMappo;
  if (name == "IPPO") return Algorithm::kIppo;
  if (name == "DMARL_RSA" || name == "DMARL-RSA") return Algorithm::kDmarlRsa;
  throw std::invalid_argument("unknown algorithm '" + std::string(name) +
                              "' (expected MAPPO, IPPO or DMARL_RSA)");
}

std::string_view to_string(ShaperVariant variant) {
  return variant == ShaperVariant::kMetaGradient ? "meta_gradient" : "naive_joint";
}

ShaperVariant parse_shaper_variant(std::string_view name) {
  if (name == "meta_gradient") return ShaperVariant::kMetaGradient;
  if (name == "naive_joint") return ShaperVariant::kNaiveJoint;
  throw std::invalid_argument("unknown shaper variant '" + std::string(name) +
                              "' (expected meta_gradient or naive_joint)");
}

void ShaperConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("ShaperConfig: alpha must be >= 0");
  if (!(lr_scale >= 0.0)) throw std::invalid_argument("ShaperConfig: lr_scale must be >= 0");
  if (!(output_l2_coef >= 0.0)) {
    throw std::invalid_argument("ShaperConfig: output_l2_coef must be >= 0");
  }
}

TrainRunConfig TrainRunConfig::defaults_for(Algorithm algorithm) {
  TrainRunConfig c;
  c.algorithm = algorithm;
  if (algorithm == Algorithm::kMappo) {
    c.ppo.learning_rate = 5e-4;
    c.ppo.update_epochs = 4;
  } else {
    c.ppo.learning_rate = 3e-4;
    c.ppo.update_epochs = 3;
  }
  return c;
}

void TrainRunConfig::validate() const {
  env.validate();
  ppo.validate();
  shaper.validate();
  if (episodes_per_update < 1) throw std::invalid_argument("episodes_per_update must be >= 1");
  if (episodes < episodes_per_update) {
    throw std::invalid_argument("episodes must be >= episodes_per_update");
  }
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
}

nn::MlpSpec actor_spec(int obs_dim, int n_actions) {
  return {{obs_dim, kHiddenWidth, kHiddenWidth, n_actions}};
}

nn::MlpSpec critic_spec(int input_dim) { return {{input_dim, kHiddenWidth, kHiddenWidth, 1}}; }

nn::MlpSpec shaper_spec(int obs_dim, int n_actions) {
  return {{2 * obs_dim + n_actions, 64, 32, 16, 1}};
}

int Team::critic_input_dim() const {
  if (shared_critic) return shared_critic->params.spec().input_size();
  return agents.front().critic->params.spec().input_size();
}

Team make_team(const TrainRunConfig& config, std::uint64_t seed) {
  const int n = config.env.n_agents;
  const int obs_dim = config.env.observation_size();
  const bool xavier = config.hidden_init == nn::InitScheme::kXavierUniform;
  const nn::InitPlan actor_init{config.hidden_init,
                                xavier ? config.hidden_init : nn::InitScheme::kOrthogonalGain001};
  const nn::InitPlan critic_init{config.hidden_init,
                                 xavier ? config.hidden_init : nn::InitScheme::kOrthogonalUnitGain};
  const nn::InitPlan shaper_init = actor_init;

  Rng actor_rng = make_rng(seed, 1);
  Rng critic_rng = make_rng(seed, 2);
  Rng shaper_rng = make_rng(seed, 3);

  Team team;
  team.algorithm = config.algorithm;
  for (int i = 0; i < n; ++i) {
    AgentLearner learner{
        Network(nn::init_params(actor_spec(obs_dim, env::kNumActions), actor_init, actor_rng)),
        std::nullopt, std::nullopt};
    if (config.algorithm != Algorithm::kMappo) {
      learner.critic.emplace(nn::init_params(critic_spec(obs_dim), critic_init, critic_rng));
    }
    if (config.algorithm == Algorithm::kDmarlRsa) {
      learner.shaper.emplace(
          nn::init_params(shaper_spec(obs_dim, env::kNumActions), shaper_init, shaper_rng));
    }
    team.agents.push_back(std::move(learner));
  }
  if (config.algorithm == Algorithm::kMappo) {
    team.shared_critic.emplace(nn::init_params(critic_spec(n * obs_dim), critic_init, critic_rng));
  }
  return team;
}

std::vector<NetworkInfo> describe_networks(const Team& team) {
  std::vector<NetworkInfo> out;
  for (std::size_t i = 0; i < team.agents.size(); ++i) {
    const std::string prefix = "agent" + std::to_string(i) + "/";
    const AgentLearner& a = team.agents[i];
    out.push_back({prefix + "actor", a.actor.params.size()});
    if (a.critic) out.push_back({prefix + "critic", a.critic->params.size()});
    if (a.shaper) out.push_back({prefix + "shaper", a.shaper->params.size()});
  }
  if (team.shared_critic) out.push_back({"shared_critic", team.shared_critic->params.size()});
  return out;
}

std::vector<double> build_global_state(std::span<const env::Observation> observations,
                                       int expected_agents) {
  if (static_cast<int>(observations.size()) != expected_agents) {
    throw std::invalid_argument("build_global_state: expected " + std::to_string(expected_agents) +
                                " observations, got " + std::to_string(observations.size()));
  }
  std::vector<double> global;
  for (const auto& obs : observations) global.insert(global.end(), obs.begin(), obs.end());
  return global;
}

std::vector<double> shaper_input(std::span<const double> obs, int action, int n_actions,
                                 std::span<const double> next_obs) {
  if (action < 0 || action >= n_actions) throw std::out_of_range("shaper_input: bad action");
  std::vector<double> x;
  x.reserve(obs.size() + n_actions + next_obs.size());
  x.insert(x.end(), obs.begin(), obs.end());
  for (int k = 0; k < n_actions; ++k) x.push_back(k == action ? 1.0 : 0.0);
  x.insert(x.end(), next_obs.begin(), next_obs.end());
  return x;
}

double shaped_reward(const nn::ParamSet& shaper, std::span<const double> obs, int action,
                     std::span<const double> next_obs, double alpha) {
  const int in = shaper.spec().input_size();
  const int n_actions = in - static_cast<int>(obs.size() + next_obs.size());
  if (obs.size() != next_obs.size() || n_actions < 1) {
    throw std::invalid_argument("shaped_reward: observation sizes do not match the shaper input");
  }
  const auto x = shaper_input(obs, action, n_actions, next_obs);
  return alpha * nn::forward(shaper, x)[0];
}

nn::categorical::Sample select_action(const nn::ParamSet& actor,
                                      std::span<const double> local_observation, Rng& rng) {
  thread_local nn::ForwardCache cache;
  const auto logits = nn::forward(actor, local_observation, cache);
  return nn::categorical::sample(logits, rng);
}

Rollout collect_episodes(const env::SpreadEnv& env, const Team& team, int first_episode,
                         int n_episodes, std::uint64_t run_seed, double shaper_alpha, Rng& rng,
                         const TransitionSink& sink) {
  const int n = env.config().n_agents;
  if (static_cast<int>(team.agents.size()) != n) {
    throw std::invalid_argument("collect_episodes: team size does not match the environment");
  }
  const int obs_dim = env.observation_size();
  const int steps = env.config().max_steps;

  Rollout rollout;
  ppo::TrajectoryBatch& batch = rollout.batch;
  batch.agents.resize(n);
  batch.global_dim = n * obs_dim;
  const std::size_t total_steps = static_cast<std::size_t>(n_episodes) * steps;
  batch.global_states.reserve(total_steps * batch.global_dim);
  for (auto& traj : batch.agents) {
    traj.obs_dim = obs_dim;
    traj.observations.reserve(total_steps * obs_dim);
    traj.next_observations.reserve(total_steps * obs_dim);
  }

  std::vector<env::Observation> obs(n, env::Observation(obs_dim));
  std::vector<env::Observation> next_obs(n, env::Observation(obs_dim));
  std::vector<env::ActionId> actions(n);
  std::vector<double> log_probs(n);
  nn::ForwardCache cache;

  for (int e = 0; e < n_episodes; ++e) {
    const int episode = first_episode + e;
    env::WorldState state = env.reset(mix_seed(run_seed, static_cast<std::uint64_t>(episode)));
    for (int i = 0; i < n; ++i) env.observe_into(state, i, obs[i]);

    std::vector<double> env_sum(n, 0.0), heur_sum(n, 0.0), shaped_sum(n, 0.0);
    EpisodeMetrics metrics;
    bool done = false;
    while (!done) {
      const std::vector<double> global = build_global_state(obs, n);
      batch.global_states.insert(batch.global_states.end(), global.begin(), global.end());
      for (int i = 0; i < n; ++i) {
        const auto s = select_action(team.agents[i].actor.params, obs[i], rng);
        actions[i] = s.action;
        log_probs[i] = s.log_prob;
      }
      env::StepResult result = env.step(state, actions);
      done = result.outcome.done;
      metrics.collision_count += result.outcome.colliding_pairs;
      for (int i = 0; i < n; ++i) env.observe_into(result.state, i, next_obs[i]);

      for (int i = 0; i < n; ++i) {
        const AgentLearner& learner = team.agents[i];
        ppo::AgentTrajectory& traj = batch.agents[i];
        const double value =
            learner.critic ? nn::forward(learner.critic->params, obs[i], cache)[0]
                           : nn::forward(team.shared_critic->params, global, cache)[0];
        double shaped = 0.0;
        if (learner.shaper && shaper_alpha != 0.0) {
          shaped = shaped_reward(learner.shaper->params, obs[i], actions[i], next_obs[i],
                                 shaper_alpha);
        }
        traj.observations.insert(traj.observations.end(), obs[i].begin(), obs[i].end());
        traj.next_observations.insert(traj.next_observations.end(), next_obs[i].begin(),
                                      next_obs[i].end());
        traj.actions.push_back(actions[i]);
        traj.log_probs.push_back(log_probs[i]);
        traj.values.push_back(value);
        traj.reward_env.push_back(result.outcome.env_reward[i]);
        traj.reward_heuristic.push_back(result.outcome.heuristic_bonus[i]);
        traj.reward_shaped.push_back(shaped);
        traj.dones.push_back(done ? 1 : 0);
        env_sum[i] += result.outcome.env_reward[i];
        heur_sum[i] += result.outcome.heuristic_bonus[i];
        shaped_sum[i] += shaped;
        if (sink) sink({episode, i, obs[i], actions[i], next_obs[i]});
      }
      if (done) metrics.landmarks_covered_final = result.outcome.landmarks_covered;
      state = std::move(result.state);
      std::swap(obs, next_obs);
    }

    for (int i = 0; i < n; ++i) {
      metrics.env_component += env_sum[i];
      metrics.heuristic_component += heur_sum[i];
      metrics.shaped_component += shaped_sum[i];
      metrics.mean_agent_total += (env_sum[i] + heur_sum[i]) + shaped_sum[i];
    }
    metrics.env_component /= n;
    metrics.heuristic_component /= n;
    metrics.shaped_component /= n;
    metrics.mean_agent_total /= n;
    rollout.episodes.push_back(metrics);
  }
  return rollout;
}

ppo::UpdateBatch make_update_batch(const ppo::AgentTrajectory& traj,
                                   std::span<const double> rewards,
                                   std::span<const double> critic_inputs, int critic_dim,
                                   const ppo::PpoConfig& config) {
  const ppo::AdvantageEstimate est =
      ppo::compute_gae(rewards, traj.values, traj.dones, config.gamma, config.gae_lambda);
  ppo::UpdateBatch b;
  b.obs_dim = traj.obs_dim;
  b.critic_dim = critic_dim;
  b.observations = traj.observations;
  b.critic_inputs.assign(critic_inputs.begin(), critic_inputs.end());
  b.actions = traj.actions;
  b.old_log_probs = traj.log_probs;
  b.advantages = est.advantages;
  b.returns = est.returns;
  return b;
}

namespace {

void require_agents(const Team& team, const ppo::TrajectoryBatch& batch) {
  if (batch.agents.size() != team.agents.size()) {
    throw std::invalid_argument("trajectory batch does not match the team size");
  }
}

ppo::LossReport update_independent_agent(AgentLearner& learner, const ppo::AgentTrajectory& traj,
                                         const ppo::PpoConfig& config) {
  if (!learner.critic) throw std::invalid_argument("independent learner has no critic");
  const std::vector<double> rewards = traj.total_rewards();
  const ppo::UpdateBatch b =
      make_update_batch(traj, rewards, traj.observations, traj.obs_dim, config);
  return ppo::run_update(b, learner.actor.params, learner.actor.optimizer, &learner.critic->params,
                         &learner.critic->optimizer, config);
}

}  // namespace

TeamUpdateReport update_ippo(Team& team, const ppo::TrajectoryBatch& batch,
                             const ppo::PpoConfig& config) {
  require_agents(team, batch);
  TeamUpdateReport report;
  for (std::size_t i = 0; i < team.agents.size(); ++i) {
    report.agents.push_back(update_independent_agent(team.agents[i], batch.agents[i], config));
  }
  return report;
}

TeamUpdateReport update_mappo(Team& team, const ppo::TrajectoryBatch& batch,
                              const ppo::PpoConfig& config) {
  require_agents(team, batch);
  if (!team.shared_critic) throw std::invalid_argument("update_mappo: team has no shared critic");
  const int global_dim = team.shared_critic->params.spec().input_size();
  if (batch.global_dim != global_dim) {
    throw std::invalid_argument("update_mappo: global state width " +
                                std::to_string(batch.global_dim) + " != critic input " +
                                std::to_string(global_dim));
  }
  const std::size_t steps = batch.steps();
  if (batch.global_states.size() != steps * global_dim) {
    throw std::invalid_argument("update_mappo: batch is missing global states");
  }

  TeamUpdateReport report;
  std::vector<double> pooled_inputs;
  std::vector<double> pooled_returns;
  pooled_inputs.reserve(team.agents.size() * batch.global_states.size());
  for (std::size_t i = 0; i < team.agents.size(); ++i) {
    const ppo::AgentTrajectory& traj = batch.agents[i];
    const std::vector<double> rewards = traj.total_rewards();
    // Actors keep learning from local observations; only the critic sees the global state.
    const ppo::UpdateBatch b =
        make_update_batch(traj, rewards, batch.global_states, global_dim, config);
    AgentLearner& learner = team.agents[i];
    report.agents.push_back(ppo::run_update(b, learner.actor.params, learner.actor.optimizer,
                                            nullptr, nullptr, config));
    pooled_inputs.insert(pooled_inputs.end(), batch.global_states.begin(),
                         batch.global_states.end());
    pooled_returns.insert(pooled_returns.end(), b.returns.begin(), b.returns.end());
  }
  report.shared_critic = ppo::train_critic(pooled_inputs, global_dim, pooled_returns,
                                           team.shared_critic->params,
                                           team.shared_critic->optimizer, config);
  return report;
}

TeamUpdateReport update_dmarl(Team& team, const ppo::TrajectoryBatch& batch,
                              const ppo::PpoConfig& config, const ShaperConfig& shaper_config) {
  require_agents(team, batch);
  shaper_config.validate();
  TeamUpdateReport report;
  for (std::size_t i = 0; i < team.agents.size(); ++i) {
    AgentLearner& learner = team.agents[i];
    if (!learner.shaper) throw std::invalid_argument("update_dmarl: agent has no reward shaper");
    const ppo::AgentTrajectory& traj = batch.agents[i];

    std::optional<ShaperGradient> grad;
    if (shaper_config.variant == ShaperVariant::kMetaGradient) {
      // Needs the pre-update actor and its optimizer moments.
      grad = meta_shaper_gradient(learner.actor.params, learner.actor.optimizer,
                                  learner.shaper->params, traj, config, shaper_config);
    }
    report.agents.push_back(update_independent_agent(learner, traj, config));
    if (shaper_config.variant == ShaperVariant::kNaiveJoint) {
      grad = naive_shaper_gradient(learner.actor.params, learner.shaper->params, traj, config,
                                   shaper_config);
    }
    report.shapers.push_back(
        apply_shaper_gradient(*learner.shaper, std::move(*grad), config, shaper_config));
  }
  return report;
}

TrainingRun::TrainingRun(TrainRunConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      seed_(seed),
      env_((config_.validate(), config_.env)),
      team_(make_team(config_, seed)),
      action_rng_(make_rng(seed, 4)) {}

std::vector<EpisodeMetrics> TrainingRun::iterate() {
  const int remaining = config_.episodes - episodes_done_;
  if (remaining <= 0) return {};
  const int n = std::min(config_.episodes_per_update, remaining);
  const double alpha = config_.algorithm == Algorithm::kDmarlRsa ? config_.shaper.alpha : 0.0;
  const std::uint64_t episode_seed = mix_seed(seed_, config_.env.seed);
  Rollout rollout =
      collect_episodes(env_, team_, episodes_done_, n, episode_seed, alpha, action_rng_, sink_);
  if (!config_.freeze_policies) {
    switch (config_.algorithm) {
      case Algorithm::kMappo:
        last_update_ = update_mappo(team_, rollout.batch, config_.ppo);
        break;
      case Algorithm::kIppo:
        last_update_ = update_ippo(team_, rollout.batch, config_.ppo);
        break;
      case Algorithm::kDmarlRsa:
        last_update_ = update_dmarl(team_, rollout.batch, config_.ppo, config_.shaper);
        break;
    }
  }
  episodes_done_ += n;
  return std::move(rollout.episodes);
}

void TrainingRun::run(const EpisodeCallback& on_episode) {
  while (episodes_done_ < config_.episodes) {
    const int first = episodes_done_;
    const auto metrics = iterate();
    for (std::size_t k = 0; k < metrics.size(); ++k) {
      if (on_episode) on_episode(first + static_cast<int>(k), metrics[k]);
    }
  }
}

void TrainingRun::save_checkpoints(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const std::string stem = std::string(to_string(config_.algorithm)) + "_" + std::to_string(seed_);
  for (std::size_t i = 0; i < team_.agents.size(); ++i) {
    const AgentLearner& a = team_.agents[i];
    const std::string prefix = stem + "_" + std::to_string(i) + "_";
    nn::save_checkpoint(dir / (prefix + "actor.ckpt"), a.actor.params);
    if (a.critic) nn::save_checkpoint(dir / (prefix + "critic.ckpt"), a.critic->params);
    if (a.shaper) nn::save_checkpoint(dir / (prefix + "shaper.ckpt"), a.shaper->params);
  }
  if (team_.shared_critic) {
    nn::save_checkpoint(dir / (stem + "_shared_critic.ckpt"), team_.shared_critic->params);
  }
}

}  // namespace marl::train
