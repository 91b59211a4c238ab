#include "marl/spread_env.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <string>

namespace marl::env {
namespace {

Vec2 action_direction(ActionId action) {
  switch (action) {
    case kNoop: return {0.0, 0.0};
    case kMoveNegX: return {-1.0, 0.0};
    case kMovePosX: return {1.0, 0.0};
    case kMoveNegY: return {0.0, -1.0};
    case kMovePosY: return {0.0, 1.0};
    default:
      throw std::invalid_argument("action id out of range: " + std::to_string(action));
  }
}

// margin * log(1 + exp(x / margin)), evaluated without overflow.
double softplus_scaled(double x, double margin) {
  const double z = x / margin;
  if (z > 30.0) return x;
  return margin * std::log1p(std::exp(z));
}

}  // namespace

void EnvConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("EnvConfig: ") + what);
  };
  require(n_agents >= 1, "n_agents must be >= 1");
  require(n_landmarks >= 1, "n_landmarks must be >= 1");
  require(max_steps >= 1, "max_steps must be >= 1");
  require(dt > 0.0, "dt must be > 0");
  require(damping >= 0.0 && damping < 1.0, "damping must lie in [0, 1)");
  require(agent_radius > 0.0 && landmark_radius > 0.0, "radii must be > 0");
  require(coverage_threshold > 0.0, "coverage_threshold must be > 0");
  require(contact_margin > 0.0, "contact_margin must be > 0");
  require(std::isfinite(accel) && std::isfinite(contact_force), "forces must be finite");
  require(coverage_bonus >= 0.0 && proximity_scale >= 0.0, "heuristic weights must be >= 0");
}

SpreadEnv::SpreadEnv(EnvConfig config) : config_(config) { config_.validate(); }

WorldState SpreadEnv::reset(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  WorldState s;
  s.agent_pos.resize(config_.n_agents);
  s.agent_vel.assign(config_.n_agents, Vec2{});
  s.landmark_pos.resize(config_.n_landmarks);
  for (auto& p : s.agent_pos) {
    p.x = coord(rng);
    p.y = coord(rng);
  }
  for (auto& p : s.landmark_pos) {
    p.x = coord(rng);
    p.y = coord(rng);
  }
  s.step_index = 0;
  return s;
}

void SpreadEnv::check_shape(const WorldState& state) const {
  if (static_cast<int>(state.agent_pos.size()) != config_.n_agents ||
      static_cast<int>(state.agent_vel.size()) != config_.n_agents ||
      static_cast<int>(state.landmark_pos.size()) != config_.n_landmarks) {
    throw std::invalid_argument("WorldState shape does not match EnvConfig");
  }
}

StepResult SpreadEnv::step(const WorldState& state, std::span<const ActionId> actions) const {
  check_shape(state);
  if (state.step_index >= config_.max_steps) {
    throw EpisodeFinished("step() called after the episode reached max_steps");
  }
  const int n = config_.n_agents;
  if (static_cast<int>(actions.size()) != n) {
    throw std::invalid_argument("expected one action per agent");
  }

  std::vector<Vec2> force(n);
  for (int i = 0; i < n; ++i) force[i] = action_direction(actions[i]) * config_.accel;

  const double radius_sum = 2.0 * config_.agent_radius;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const Vec2 delta = state.agent_pos[a] - state.agent_pos[b];
      const double dist = delta.norm();
      if (dist >= radius_sum) continue;
      // Coincident agents are pushed apart along +x.
      const Vec2 axis = dist > 1e-12 ? delta * (1.0 / dist) : Vec2{1.0, 0.0};
      const double magnitude =
          config_.contact_force * softplus_scaled(radius_sum - dist, config_.contact_margin);
      force[a] += axis * magnitude;
      force[b] += axis * -magnitude;
    }
  }

  StepResult result{state, {}};
  WorldState& next = result.state;
  for (int i = 0; i < n; ++i) {
    next.agent_vel[i] = state.agent_vel[i] * (1.0 - config_.damping) + force[i] * config_.dt;
    next.agent_pos[i] = state.agent_pos[i] + next.agent_vel[i] * config_.dt;
  }
  next.step_index = state.step_index + 1;

  StepOutcome& out = result.outcome;
  out.distance_reward = distance_reward(next);
  const std::vector<int> hits = collisions_per_agent(next);
  out.env_reward.resize(n);
  out.collision_penalty.resize(n);
  int hit_total = 0;
  for (int i = 0; i < n; ++i) {
    out.collision_penalty[i] = config_.collision_penalty * hits[i];
    out.env_reward[i] = out.distance_reward + out.collision_penalty[i];
    hit_total += hits[i];
  }
  out.colliding_pairs = hit_total / 2;
  out.landmarks_covered = count_covered_landmarks(next);
  out.heuristic_bonus = heuristic_bonus(next);
  out.done = next.step_index == config_.max_steps;
  return result;
}

Observation SpreadEnv::observe(const WorldState& state, int agent) const {
  Observation obs(observation_size());
  observe_into(state, agent, obs);
  return obs;
}

void SpreadEnv::observe_into(const WorldState& state, int agent, std::span<double> out) const {
  check_shape(state);
  if (agent < 0 || agent >= config_.n_agents) {
    throw std::out_of_range("agent index out of range: " + std::to_string(agent));
  }
  if (static_cast<int>(out.size()) != observation_size()) {
    throw std::invalid_argument("observation buffer has the wrong length");
  }
  const Vec2 self = state.agent_pos[agent];
  std::size_t k = 0;
  out[k++] = state.agent_vel[agent].x;
  out[k++] = state.agent_vel[agent].y;
  out[k++] = self.x;
  out[k++] = self.y;
  for (const Vec2& lm : state.landmark_pos) {
    const Vec2 rel = lm - self;
    out[k++] = rel.x;
    out[k++] = rel.y;
  }
  for (int j = 0; j < config_.n_agents; ++j) {
    if (j == agent) continue;
    const Vec2 rel = state.agent_pos[j] - self;
    out[k++] = rel.x;
    out[k++] = rel.y;
  }
  while (k < out.size()) out[k++] = 0.0;
}

double SpreadEnv::distance_reward(const WorldState& state) const {
  return distance_reward(state, config_.distance_semantics);
}

double SpreadEnv::distance_reward(const WorldState& state, DistanceSemantics semantics) const {
  check_shape(state);
  double total = 0.0;
  if (semantics == DistanceSemantics::kPerLandmarkMinOverAgents) {
    for (const Vec2& lm : state.landmark_pos) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec2& a : state.agent_pos) best = std::min(best, (a - lm).norm());
      total += best;
    }
  } else {
    for (int i = 0; i < config_.n_agents; ++i) total += min_landmark_distance(state, i);
  }
  return -total;
}

double SpreadEnv::min_landmark_distance(const WorldState& state, int agent) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec2& lm : state.landmark_pos) {
    best = std::min(best, (state.agent_pos[agent] - lm).norm());
  }
  return best;
}

int SpreadEnv::count_covered_landmarks(const WorldState& state) const {
  check_shape(state);
  int covered = 0;
  for (const Vec2& lm : state.landmark_pos) {
    for (const Vec2& a : state.agent_pos) {
      if ((a - lm).norm() < config_.coverage_threshold) {
        ++covered;
        break;
      }
    }
  }
  return covered;
}

std::vector<double> SpreadEnv::heuristic_bonus(const WorldState& state) const {
  const double shared = config_.coverage_bonus * count_covered_landmarks(state);
  std::vector<double> bonus(config_.n_agents);
  for (int i = 0; i < config_.n_agents; ++i) {
    const double closeness = std::max(0.0, 1.0 - min_landmark_distance(state, i));
    bonus[i] = shared + config_.proximity_scale * closeness;
  }
  return bonus;
}

std::vector<int> SpreadEnv::collisions_per_agent(const WorldState& state) const {
  check_shape(state);
  const int n = config_.n_agents;
  const double radius_sum = 2.0 * config_.agent_radius;
  std::vector<int> hits(n, 0);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if ((state.agent_pos[a] - state.agent_pos[b]).norm() < radius_sum) {
        ++hits[a];
        ++hits[b];
      }
    }
  }
  return hits;
}

}  // namespace marl::env
