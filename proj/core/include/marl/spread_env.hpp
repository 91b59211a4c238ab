#ifndef MARL_SPREAD_ENV_HPP_
#define MARL_SPREAD_ENV_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace marl::env {

// Discrete movement actions, matching the MPE ordering.
using ActionId = int;
inline constexpr int kNumActions = 5;
inline constexpr ActionId kNoop = 0;
inline constexpr ActionId kMoveNegX = 1;
inline constexpr ActionId kMovePosX = 2;
inline constexpr ActionId kMoveNegY = 3;
inline constexpr ActionId kMovePosY = 4;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double norm() const { return std::hypot(x, y); }
};

enum class DistanceSemantics {
  // -sum over landmarks of the closest agent's distance (simple_spread_v3).
  kPerLandmarkMinOverAgents,
  // -sum over agents of the distance to that agent's closest landmark.
  kPerAgentMinOverLandmarks,
};

struct EnvConfig {
  int n_agents = 3;
  int n_landmarks = 3;
  int max_steps = 25;
  double dt = 0.1;
  double damping = 0.25;
  double accel = 5.0;
  double agent_radius = 0.15;
  double landmark_radius = 0.05;
  double coverage_threshold = 0.1;
  double contact_force = 100.0;
  double contact_margin = 1e-3;
  double collision_penalty = -1.0;
  // Heuristic shaping shared by every algorithm.
  double coverage_bonus = 0.5;
  double proximity_scale = 0.05;
  DistanceSemantics distance_semantics = DistanceSemantics::kPerLandmarkMinOverAgents;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on any violated invariant.
  void validate() const;

  // [self_vel(2), self_pos(2), landmark_rel(2L), other_rel(2(N-1)), comm_pad(2(N-1))]
  int observation_size() const { return 4 + 2 * n_landmarks + 4 * (n_agents - 1); }
};

struct WorldState {
  std::vector<Vec2> agent_pos;
  std::vector<Vec2> agent_vel;
  std::vector<Vec2> landmark_pos;
  int step_index = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

using Observation = std::vector<double>;

struct StepOutcome {
  std::vector<double> env_reward;          // distance term + own collision penalties
  std::vector<double> collision_penalty;   // <= 0
  std::vector<double> heuristic_bonus;     // >= 0
  double distance_reward = 0.0;            // shared team term
  int landmarks_covered = 0;
  int colliding_pairs = 0;
  bool done = false;
};

struct StepResult {
  WorldState state;
  StepOutcome outcome;
};

// Raised when step() is called on a finished episode.
class EpisodeFinished : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Cooperative navigation: N agents should spread over L landmarks while
// avoiding each other. The environment itself is stateless beyond its
// configuration; callers own the WorldState, which makes every operation a
// pure function and instances trivially shareable across threads.
class SpreadEnv {
 public:
  explicit SpreadEnv(EnvConfig config);

  const EnvConfig& config() const { return config_; }
  int observation_size() const { return config_.observation_size(); }

  // Positions i.i.d. uniform over [-1,1]^2 (agents first, then landmarks).
  WorldState reset(std::uint64_t seed) const;

  StepResult step(const WorldState& state, std::span<const ActionId> actions) const;

  Observation observe(const WorldState& state, int agent) const;
  void observe_into(const WorldState& state, int agent, std::span<double> out) const;

  double distance_reward(const WorldState& state) const;
  double distance_reward(const WorldState& state, DistanceSemantics semantics) const;
  int count_covered_landmarks(const WorldState& state) const;
  std::vector<double> heuristic_bonus(const WorldState& state) const;

  // Per-agent count of other agents closer than the summed radii.
  std::vector<int> collisions_per_agent(const WorldState& state) const;

  double min_landmark_distance(const WorldState& state, int agent) const;

 private:
  void check_shape(const WorldState& state) const;

  EnvConfig config_;
};

}  // namespace marl::env

#endif  // MARL_SPREAD_ENV_HPP_
