#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "marl/trainers.hpp"

using namespace marl;
using train::Algorithm;

namespace {

train::TrainRunConfig small_config(Algorithm algo, int episodes) {
  auto c = train::TrainRunConfig::defaults_for(algo);
  c.episodes = episodes;
  c.seeds = {42};
  return c;
}

std::vector<double> all_params(const train::Team& team) {
  std::vector<double> out;
  auto add = [&](const nn::ParamSet& p) { out.insert(out.end(), p.flat().begin(), p.flat().end()); };
  for (const auto& a : team.agents) {
    add(a.actor.params);
    if (a.critic) add(a.critic->params);
  }
  if (team.shared_critic) add(team.shared_critic->params);
  return out;
}

// One-step two-armed bandit: arm 0 pays 1, arm 1 pays 0.
ppo::AgentTrajectory bandit_trajectory(const nn::ParamSet& actor, int steps, Rng& rng) {
  ppo::AgentTrajectory traj;
  traj.obs_dim = 1;
  for (int t = 0; t < steps; ++t) {
    const double o = 1.0;
    const auto s = train::select_action(actor, std::span<const double>(&o, 1), rng);
    traj.observations.push_back(o);
    traj.next_observations.push_back(0.0);
    traj.actions.push_back(s.action);
    traj.log_probs.push_back(s.log_prob);
    traj.values.push_back(0.0);
    traj.reward_env.push_back(s.action == 0 ? 1.0 : 0.0);
    traj.reward_heuristic.push_back(0.0);
    traj.reward_shaped.push_back(0.0);
    traj.dones.push_back(1);
  }
  return traj;
}

struct BanditSetup {
  nn::ParamSet actor;
  nn::AdamState opt;
  train::Network shaper;
  ppo::AgentTrajectory traj;
  ppo::PpoConfig config;
  train::ShaperConfig shaper_config;
};

// Warm second moments keep the provisional Adam step close to linear in the
// policy gradient, which is the regime the first-order meta-gradient models.
BanditSetup make_bandit(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  nn::ParamSet actor = nn::init_params({{1, 8, 2}}, nn::InitScheme::kXavierUniform, rng);
  nn::ParamSet shaper = nn::init_params({{4, 8, 1}}, nn::InitScheme::kXavierUniform, rng);
  BanditSetup b{actor, nn::AdamState(actor.size()), train::Network(shaper), {}, {}, {}};
  std::fill(b.opt.second_moment.begin(), b.opt.second_moment.end(), 1.0);
  b.opt.step_count = 1000;
  b.traj = bandit_trajectory(b.actor, 64, rng);
  b.config.learning_rate = 0.05;
  b.config.max_grad_norm = 1e9;
  b.config.entropy_coef = 0.0;
  b.shaper_config.lr_scale = 0.02;
  return b;
}

}  // namespace

TEST_SUITE("trainers") {

TEST_CASE("algorithm names round trip") {
  for (auto a : {Algorithm::kMappo, Algorithm::kIppo, Algorithm::kDmarlRsa}) {
    CHECK(train::parse_algorithm(train::to_string(a)) == a);
  }
  CHECK(train::parse_algorithm("DMARL-RSA") == Algorithm::kDmarlRsa);
  CHECK_THROWS_AS(train::parse_algorithm("QMIX"), std::invalid_argument);
  CHECK(train::parse_shaper_variant("naive_joint") == train::ShaperVariant::kNaiveJoint);
  CHECK_THROWS_AS(train::parse_shaper_variant("other"), std::invalid_argument);
}

TEST_CASE("per-algorithm defaults") {
  const auto m = train::TrainRunConfig::defaults_for(Algorithm::kMappo);
  const auto i = train::TrainRunConfig::defaults_for(Algorithm::kIppo);
  const auto d = train::TrainRunConfig::defaults_for(Algorithm::kDmarlRsa);
  CHECK(m.ppo.learning_rate == doctest::Approx(5e-4));
  CHECK(m.ppo.update_epochs == 4);
  CHECK(i.ppo.learning_rate == doctest::Approx(3e-4));
  CHECK(d.ppo.learning_rate == doctest::Approx(3e-4));
  CHECK(d.shaper.alpha == 1.0);
  CHECK(d.shaper.lr_scale == 0.5);
  CHECK(i.episodes == 5000);
  CHECK(i.seeds == std::vector<std::uint64_t>{42, 123, 999});
  CHECK(i.episodes_per_update == 10);
}

TEST_CASE("config validation") {
  auto c = small_config(Algorithm::kIppo, 20);
  CHECK_NOTHROW(c.validate());
  c.episodes = 5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config(Algorithm::kIppo, 20);
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config(Algorithm::kDmarlRsa, 20);
  c.shaper.alpha = -0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("team composition per algorithm") {
  const auto mappo = train::make_team(small_config(Algorithm::kMappo, 10), 1);
  CHECK(mappo.shared_critic.has_value());
  CHECK(mappo.critic_input_dim() == 54);
  CHECK(mappo.shared_critic->params.spec().input_size() == 54);
  for (const auto& a : mappo.agents) {
    CHECK_FALSE(a.critic.has_value());
    CHECK_FALSE(a.shaper.has_value());
    CHECK(a.actor.params.spec().input_size() == 18);
  }

  const auto ippo = train::make_team(small_config(Algorithm::kIppo, 10), 1);
  CHECK_FALSE(ippo.shared_critic.has_value());
  CHECK(ippo.critic_input_dim() == 18);
  for (const auto& a : ippo.agents) {
    CHECK(a.critic.has_value());
    CHECK_FALSE(a.shaper.has_value());
  }

  const auto dmarl = train::make_team(small_config(Algorithm::kDmarlRsa, 10), 1);
  for (const auto& a : dmarl.agents) {
    REQUIRE(a.shaper.has_value());
    CHECK(a.shaper->params.spec() == nn::MlpSpec{{41, 64, 32, 16, 1}});
  }
}

TEST_CASE("describe_networks reports parameter counts") {
  const auto team = train::make_team(small_config(Algorithm::kDmarlRsa, 10), 1);
  const auto info = train::describe_networks(team);
  REQUIRE(info.size() == 9);
  CHECK(info[0].name == "agent0/actor");
  CHECK(info[0].parameters == 5701);
  CHECK(info[1].parameters == 5441);
  CHECK(info[2].parameters == 5313);

  const auto mappo = train::describe_networks(train::make_team(small_config(Algorithm::kMappo, 10), 1));
  REQUIRE(mappo.size() == 4);
  CHECK(mappo.back().name == "shared_critic");
  CHECK(mappo.back().parameters == 7745);
}

TEST_CASE("initialization streams are independent of the shaper") {
  // Actors and critics must not depend on whether a shaper is drawn.
  const auto ippo = train::make_team(small_config(Algorithm::kIppo, 10), 7);
  const auto dmarl = train::make_team(small_config(Algorithm::kDmarlRsa, 10), 7);
  CHECK(all_params(ippo) == all_params(dmarl));
  const auto other = train::make_team(small_config(Algorithm::kIppo, 10), 8);
  CHECK(all_params(ippo) != all_params(other));
}

TEST_CASE("build_global_state concatenates in agent order") {
  std::vector<env::Observation> obs(3, env::Observation(18));
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 18; ++k) obs[i][k] = 100.0 * i + k;
  }
  const auto g = train::build_global_state(obs, 3);
  REQUIRE(g.size() == 54);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 18; ++k) CHECK(g[18 * i + k] == obs[i][k]);
  }
  std::swap(obs[0], obs[2]);
  const auto p = train::build_global_state(obs, 3);
  CHECK(std::equal(p.begin(), p.begin() + 18, g.begin() + 36));
  CHECK(std::equal(p.begin() + 36, p.end(), g.begin()));

  const std::vector<env::Observation> zeros(3, env::Observation(18, 0.0));
  const auto z = train::build_global_state(zeros, 3);
  CHECK(std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; }));
  CHECK_THROWS_AS(train::build_global_state(std::span(obs).first(2), 3), std::invalid_argument);
}

TEST_CASE("shaper input and shaped reward") {
  const std::vector<double> obs(18, 0.5), next(18, -0.5);
  const auto in = train::shaper_input(obs, 3, 5, next);
  REQUIRE(in.size() == 41);
  CHECK(in[0] == 0.5);
  CHECK(in[18 + 3] == 1.0);
  CHECK(in[18] + in[19] + in[20] + in[22] == 0.0);
  CHECK(in[40] == -0.5);
  CHECK_THROWS_AS(train::shaper_input(obs, 5, 5, next), std::out_of_range);

  Rng rng = make_rng(3, 0);
  const auto shaper = nn::init_params(train::shaper_spec(18, 5), nn::InitScheme::kXavierUniform, rng);
  const double raw = nn::forward(shaper, in)[0];
  CHECK(train::shaped_reward(shaper, obs, 3, next, 1.0) == raw);
  CHECK(train::shaped_reward(shaper, obs, 3, next, 0.25) == doctest::Approx(0.25 * raw));
  CHECK(train::shaped_reward(shaper, obs, 3, next, 0.0) == 0.0);
  CHECK(train::shaped_reward(shaper, obs, 3, next, 1.0) ==
        train::shaped_reward(shaper, obs, 3, next, 1.0));

  const nn::ParamSet zero(train::shaper_spec(18, 5));
  CHECK(train::shaped_reward(zero, obs, 3, next, 1.0) == 0.0);
  CHECK_THROWS_AS(train::shaped_reward(shaper, std::span(obs).first(17), 3, next, 1.0),
                  std::invalid_argument);
}

TEST_CASE("collect_episodes records one row per step") {
  const auto config = small_config(Algorithm::kIppo, 10);
  const env::SpreadEnv env(config.env);
  const auto team = train::make_team(config, 5);
  Rng rng = make_rng(5, 4);
  const auto rollout = train::collect_episodes(env, team, 0, 1, 77, 0.0, rng);
  REQUIRE(rollout.batch.agents.size() == 3);
  REQUIRE(rollout.episodes.size() == 1);
  CHECK(rollout.batch.global_dim == 54);
  CHECK(rollout.batch.global_states.size() == 25 * 54);
  for (const auto& traj : rollout.batch.agents) {
    CHECK(traj.size() == 25);
    CHECK(traj.observations.size() == 25 * 18);
    for (int t = 0; t < 25; ++t) CHECK(traj.dones[t] == (t == 24 ? 1 : 0));
    // next_observation(t) is observation(t + 1) within the episode
    for (int t = 0; t + 1 < 25; ++t) {
      const auto a = traj.next_observation(t);
      const auto b = traj.observation(t + 1);
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
  }
}

TEST_CASE("collect_episodes matches a direct environment replay") {
  const auto config = small_config(Algorithm::kIppo, 10);
  const env::SpreadEnv env(config.env);
  const auto team = train::make_team(config, 9);
  Rng rng = make_rng(9, 4);
  const std::uint64_t run_seed = 1234;
  const auto rollout = train::collect_episodes(env, team, 3, 2, run_seed, 0.0, rng);

  for (int e = 0; e < 2; ++e) {
    env::WorldState state = env.reset(mix_seed(run_seed, 3 + e));
    double env_sum = 0.0, heur_sum = 0.0;
    int collisions = 0;
    int covered = 0;
    for (int t = 0; t < 25; ++t) {
      const std::size_t row = static_cast<std::size_t>(e) * 25 + t;
      std::vector<env::ActionId> actions(3);
      for (int i = 0; i < 3; ++i) {
        const auto obs = env.observe(state, i);
        const auto stored = rollout.batch.agents[i].observation(row);
        REQUIRE(std::equal(obs.begin(), obs.end(), stored.begin()));
        actions[i] = rollout.batch.agents[i].actions[row];
      }
      auto result = env.step(state, actions);
      for (int i = 0; i < 3; ++i) {
        CHECK(rollout.batch.agents[i].reward_env[row] == result.outcome.env_reward[i]);
        CHECK(rollout.batch.agents[i].reward_heuristic[row] == result.outcome.heuristic_bonus[i]);
        env_sum += result.outcome.env_reward[i];
        heur_sum += result.outcome.heuristic_bonus[i];
      }
      collisions += result.outcome.colliding_pairs;
      covered = result.outcome.landmarks_covered;
      state = std::move(result.state);
    }
    const auto& m = rollout.episodes[e];
    CHECK(m.env_component == doctest::Approx(env_sum / 3).epsilon(1e-12));
    CHECK(m.heuristic_component == doctest::Approx(heur_sum / 3).epsilon(1e-12));
    CHECK(m.collision_count == collisions);
    CHECK(m.landmarks_covered_final == covered);
    CHECK(m.shaped_component == 0.0);
  }
}

TEST_CASE("collect_episodes is deterministic and decomposes rewards") {
  const auto config = small_config(Algorithm::kDmarlRsa, 10);
  const env::SpreadEnv env(config.env);
  const auto team = train::make_team(config, 11);
  Rng r1 = make_rng(11, 4), r2 = make_rng(11, 4);
  const auto a = train::collect_episodes(env, team, 0, 3, 55, 1.0, r1);
  const auto b = train::collect_episodes(env, team, 0, 3, 55, 1.0, r2);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.batch.agents[i].actions == b.batch.agents[i].actions);
    CHECK(a.batch.agents[i].reward_shaped == b.batch.agents[i].reward_shaped);
  }
  for (const auto& m : a.episodes) {
    CHECK(m.mean_agent_total ==
          doctest::Approx(m.env_component + m.heuristic_component + m.shaped_component)
              .epsilon(1e-12));
    CHECK(m.shaped_component != 0.0);
  }
  // Shaped reward is exactly alpha * R(s, a, s').
  const auto& traj = a.batch.agents[1];
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(traj.reward_shaped[t] == train::shaped_reward(team.agents[1].shaper->params,
                                                        traj.observation(t), traj.actions[t],
                                                        traj.next_observation(t), 1.0));
    CHECK(traj.total_rewards()[t] ==
          doctest::Approx(traj.reward_env[t] + traj.reward_heuristic[t] + traj.reward_shaped[t]));
  }
}

TEST_CASE("extrinsic rewards are identical across algorithms") {
  // Same actors and seeds: env and heuristic rewards must match regardless of
  // the algorithm wrapped around them.
  const auto ippo_cfg = small_config(Algorithm::kIppo, 10);
  const env::SpreadEnv env(ippo_cfg.env);
  const auto ippo = train::make_team(ippo_cfg, 21);
  auto mappo = train::make_team(small_config(Algorithm::kMappo, 10), 21);
  for (int i = 0; i < 3; ++i) mappo.agents[i].actor = ippo.agents[i].actor;
  Rng r1 = make_rng(21, 4), r2 = make_rng(21, 4);
  const auto a = train::collect_episodes(env, ippo, 0, 2, 8, 0.0, r1);
  const auto b = train::collect_episodes(env, mappo, 0, 2, 8, 0.0, r2);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.batch.agents[i].reward_env == b.batch.agents[i].reward_env);
    CHECK(a.batch.agents[i].reward_heuristic == b.batch.agents[i].reward_heuristic);
  }
}

TEST_CASE("transition sink sees every agent step") {
  const auto config = small_config(Algorithm::kIppo, 10);
  const env::SpreadEnv env(config.env);
  const auto team = train::make_team(config, 2);
  Rng rng = make_rng(2, 4);
  int calls = 0;
  int last_episode = -1;
  const auto rollout = train::collect_episodes(
      env, team, 40, 2, 3, 0.0, rng, [&](const train::Transition& tr) {
        ++calls;
        last_episode = tr.episode;
        CHECK(tr.observation.size() == 18);
        CHECK(tr.next_observation.size() == 18);
      });
  CHECK(calls == 2 * 25 * 3);
  CHECK(last_episode == 41);
}

TEST_CASE("update_ippo: one report per agent, identical agents stay identical") {
  auto config = small_config(Algorithm::kIppo, 10);
  const env::SpreadEnv env(config.env);
  auto team = train::make_team(config, 4);
  Rng rng = make_rng(4, 4);
  auto rollout = train::collect_episodes(env, team, 0, 2, 1, 0.0, rng);

  // Give agents 0 and 1 the same networks and the same trajectory.
  team.agents[1] = team.agents[0];
  rollout.batch.agents[1] = rollout.batch.agents[0];
  const auto report = train::update_ippo(team, rollout.batch, config.ppo);
  CHECK(report.agents.size() == 3);
  CHECK_FALSE(report.shared_critic.has_value());
  const auto a0 = team.agents[0].actor.params.flat();
  const auto a1 = team.agents[1].actor.params.flat();
  CHECK(std::equal(a0.begin(), a0.end(), a1.begin()));
  const auto a2 = team.agents[2].actor.params.flat();
  CHECK_FALSE(std::equal(a0.begin(), a0.end(), a2.begin()));
}

TEST_CASE("update_ippo agents are independent") {
  auto config = small_config(Algorithm::kIppo, 10);
  const env::SpreadEnv env(config.env);
  const auto team = train::make_team(config, 6);
  Rng rng = make_rng(6, 4);
  const auto rollout = train::collect_episodes(env, team, 0, 2, 1, 0.0, rng);

  auto full = team;
  train::update_ippo(full, rollout.batch, config.ppo);

  // Updating a one-agent team per agent reproduces the joint update.
  for (int i = 0; i < 3; ++i) {
    train::Team single;
    single.algorithm = Algorithm::kIppo;
    single.agents = {team.agents[i]};
    ppo::TrajectoryBatch b;
    b.agents = {rollout.batch.agents[i]};
    train::update_ippo(single, b, config.ppo);
    const auto x = single.agents[0].actor.params.flat();
    const auto y = full.agents[i].actor.params.flat();
    CHECK(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST_CASE("update_mappo trains the shared critic once") {
  auto config = small_config(Algorithm::kMappo, 10);
  const env::SpreadEnv env(config.env);
  auto team = train::make_team(config, 12);
  Rng rng = make_rng(12, 4);
  const auto rollout = train::collect_episodes(env, team, 0, 2, 1, 0.0, rng);
  const auto critic_before = team.shared_critic->params;
  const auto report = train::update_mappo(team, rollout.batch, config.ppo);
  REQUIRE(report.shared_critic.has_value());
  CHECK(report.shared_critic->epochs.size() == 4);
  CHECK(report.agents.size() == 3);
  CHECK(team.shared_critic->optimizer.step_count == 4);
  CHECK(team.shared_critic->params.flat()[0] != critic_before.flat()[0]);

  auto bad = rollout.batch;
  bad.global_dim = 18;
  CHECK_THROWS_AS(train::update_mappo(team, bad, config.ppo), std::invalid_argument);
  bad = rollout.batch;
  bad.global_states.clear();
  CHECK_THROWS_AS(train::update_mappo(team, bad, config.ppo), std::invalid_argument);
}

TEST_CASE("update_mappo pooled critic loss equals the single-agent loss for identical agents") {
  auto config = small_config(Algorithm::kMappo, 10);
  const env::SpreadEnv env(config.env);
  auto team = train::make_team(config, 13);
  Rng rng = make_rng(13, 4);
  auto rollout = train::collect_episodes(env, team, 0, 1, 1, 0.0, rng);
  for (int i = 1; i < 3; ++i) {
    team.agents[i] = team.agents[0];
    rollout.batch.agents[i] = rollout.batch.agents[0];
  }
  auto single = team;
  single.agents.erase(single.agents.begin() + 1, single.agents.end());
  ppo::TrajectoryBatch single_batch = rollout.batch;
  single_batch.agents.erase(single_batch.agents.begin() + 1, single_batch.agents.end());
  // A one-agent team still sees the 54-wide global state.
  const auto pooled = train::update_mappo(team, rollout.batch, config.ppo);
  const auto alone = train::update_mappo(single, single_batch, config.ppo);
  REQUIRE(pooled.shared_critic.has_value());
  REQUIRE(alone.shared_critic.has_value());
  CHECK(pooled.shared_critic->epochs[0].value_loss ==
        doctest::Approx(alone.shared_critic->epochs[0].value_loss).epsilon(1e-12));
}

TEST_CASE("alpha = 0 reduces DMARL-RSA to IPPO") {
  for (auto variant : {train::ShaperVariant::kMetaGradient, train::ShaperVariant::kNaiveJoint}) {
    CAPTURE(train::to_string(variant));
    auto ippo_cfg = small_config(Algorithm::kIppo, 50);
    auto dmarl_cfg = small_config(Algorithm::kDmarlRsa, 50);
    dmarl_cfg.shaper.alpha = 0.0;
    dmarl_cfg.shaper.variant = variant;
    dmarl_cfg.shaper.output_l2_coef = 0.0;
    train::TrainingRun a(ippo_cfg, 42), b(dmarl_cfg, 42);
    std::vector<train::EpisodeMetrics> ma, mb;
    a.run([&](int, const train::EpisodeMetrics& m) { ma.push_back(m); });
    b.run([&](int, const train::EpisodeMetrics& m) { mb.push_back(m); });
    CHECK(all_params(a.team()) == all_params(b.team()));
    REQUIRE(ma.size() == 50);
    for (std::size_t k = 0; k < ma.size(); ++k) {
      CHECK(ma[k].mean_agent_total == mb[k].mean_agent_total);
    }
  }
}

TEST_CASE("update_dmarl requires shapers") {
  auto config = small_config(Algorithm::kIppo, 10);
  const env::SpreadEnv env(config.env);
  auto team = train::make_team(config, 1);
  Rng rng = make_rng(1, 4);
  const auto rollout = train::collect_episodes(env, team, 0, 1, 1, 0.0, rng);
  CHECK_THROWS_AS(train::update_dmarl(team, rollout.batch, config.ppo, config.shaper),
                  std::invalid_argument);
}

TEST_CASE("meta-gradient matches finite differences with a warm optimizer") {
  auto b = make_bandit(31);
  const auto grad = train::meta_shaper_gradient(b.actor, b.opt, b.shaper.params, b.traj, b.config,
                                                b.shaper_config);
  REQUIRE(grad.gradient.size() == b.shaper.params.size());
  const double norm = nn::global_norm(grad.gradient);
  REQUIRE(norm > 0.0);

  // The gradient is of -J; the directional derivative of J along -g is |g|^2.
  const double eps = 1e-4 / norm;
  auto shifted = [&](double s) {
    nn::ParamSet p = b.shaper.params;
    auto flat = p.mutable_flat();
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= s * grad.gradient[i];
    return train::provisional_extrinsic_surrogate(b.actor, b.opt, p, b.traj, b.config,
                                                  b.shaper_config);
  };
  const double fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
  CHECK(fd == doctest::Approx(norm * norm).epsilon(0.02));
  CHECK(grad.objective ==
        doctest::Approx(train::provisional_extrinsic_surrogate(b.actor, b.opt, b.shaper.params,
                                                               b.traj, b.config, b.shaper_config)));
}

TEST_CASE("meta-gradient shaper step raises the extrinsic surrogate on a bandit") {
  int improved = 0;
  const int trials = 10;
  for (int s = 0; s < trials; ++s) {
    auto b = make_bandit(100 + s);
    const double before = train::provisional_extrinsic_surrogate(
        b.actor, b.opt, b.shaper.params, b.traj, b.config, b.shaper_config);
    auto grad = train::meta_shaper_gradient(b.actor, b.opt, b.shaper.params, b.traj, b.config,
                                            b.shaper_config);
    train::apply_shaper_gradient(b.shaper, std::move(grad), b.config, b.shaper_config);
    const double after = train::provisional_extrinsic_surrogate(
        b.actor, b.opt, b.shaper.params, b.traj, b.config, b.shaper_config);
    if (after > before) ++improved;
  }
  CHECK(improved == trials);
}

TEST_CASE("meta-gradient is zero when alpha is zero") {
  auto b = make_bandit(5);
  b.shaper_config.alpha = 0.0;
  const auto grad = train::meta_shaper_gradient(b.actor, b.opt, b.shaper.params, b.traj, b.config,
                                                b.shaper_config);
  CHECK(nn::global_norm(grad.gradient) == 0.0);
}

TEST_CASE("shaper shape mismatch is rejected") {
  auto b = make_bandit(5);
  Rng rng = make_rng(1, 1);
  const auto wrong = nn::init_params({{5, 4, 1}}, nn::InitScheme::kXavierUniform, rng);
  CHECK_THROWS_AS(train::meta_shaper_gradient(b.actor, b.opt, wrong, b.traj, b.config,
                                              b.shaper_config),
                  std::invalid_argument);
  CHECK_THROWS_AS(train::naive_shaper_gradient(b.actor, wrong, b.traj, b.config, b.shaper_config),
                  std::invalid_argument);
}

TEST_CASE("naive-joint shaper outputs stay bounded over 200 episodes") {
  auto config = small_config(Algorithm::kDmarlRsa, 200);
  config.shaper.variant = train::ShaperVariant::kNaiveJoint;
  train::TrainingRun run(config, 42);
  double max_abs = 0.0;
  while (run.episodes_done() < 200) {
    run.iterate();
    for (const auto& s : run.last_update().shapers) max_abs = std::max(max_abs, s.max_abs_output);
  }
  CHECK(max_abs > 0.0);
  CHECK(max_abs < 10.0);
}

TEST_CASE("training runs are reproducible and frozen runs never update") {
  auto config = small_config(Algorithm::kIppo, 20);
  train::TrainingRun a(config, 3), b(config, 3);
  a.run({});
  b.run({});
  CHECK(all_params(a.team()) == all_params(b.team()));
  CHECK(a.episodes_done() == 20);

  config.freeze_policies = true;
  train::TrainingRun frozen(config, 3);
  const auto initial = all_params(frozen.team());
  frozen.run({});
  CHECK(all_params(frozen.team()) == initial);
}

TEST_CASE("checkpoints are written per network") {
  const auto dir = std::filesystem::temp_directory_path() / "marl_ckpt_test";
  std::filesystem::remove_all(dir);
  auto config = small_config(Algorithm::kDmarlRsa, 10);
  train::TrainingRun run(config, 42);
  run.save_checkpoints(dir);
  const auto actor = nn::load_checkpoint(dir / "DMARL_RSA_42_0_actor.ckpt");
  const auto f1 = actor.flat();
  const auto f2 = run.team().agents[0].actor.params.flat();
  CHECK(std::equal(f1.begin(), f1.end(), f2.begin(), f2.end()));
  CHECK(std::filesystem::exists(dir / "DMARL_RSA_42_2_shaper.ckpt"));
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
