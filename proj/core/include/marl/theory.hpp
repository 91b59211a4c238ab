#ifndef MARL_THEORY_HPP_
#define MARL_THEORY_HPP_

#include <boost/multiprecision/cpp_int.hpp>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "marl/rng.hpp"

namespace marl::theory {

// Finite MDP with dense [s][a][s'] transition and reward tables.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;
  std::vector<double> reward;
  double gamma = 0.9;

  std::size_t index(int s, int a, int next) const {
    return (static_cast<std::size_t>(s) * n_actions + a) * n_states + next;
  }
  void validate() const;
};

TabularMdp make_mdp(int n_states, int n_actions, double gamma);
TabularMdp random_mdp(int n_states, int n_actions, double gamma, Rng& rng);

struct ValueIterationResult {
  std::vector<double> values;
  std::vector<int> policy;  // greedy, lowest action index wins ties
  int iterations = 0;
};

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = 1e-12,
                                     int max_iterations = 1'000'000);

// Greedy policy w.r.t. Q(s, a) = sum_s' P (R + gamma V). Ties within tie_tol
// of the best value resolve to the lowest index.
std::vector<int> greedy_policy(const TabularMdp& mdp, std::span<const double> values,
                               double tie_tol = 1e-9);

// R'(s, a, s') = R(s, a, s') + gamma * phi(s') - phi(s)
TabularMdp apply_potential_shaping(const TabularMdp& mdp, std::span<const double> phi);

// Normal-form game; joint actions are encoded mixed-radix with player 0 as the
// most significant digit.
struct MatrixGame {
  std::vector<int> actions_per_player;
  std::vector<std::vector<double>> payoff;  // [player][joint index]
  std::vector<std::string> action_names;    // optional, per action index

  int n_players() const { return static_cast<int>(actions_per_player.size()); }
  std::size_t joint_count() const;
  std::vector<int> decode(std::size_t joint) const;
  std::size_t encode(std::span<const int> profile) const;
  void validate() const;
};

struct NashAnalysis {
  std::vector<std::vector<int>> pure_nash;
  std::vector<std::vector<int>> global_optima;
  bool misaligned = false;  // some pure Nash profile is not globally optimal
};

inline constexpr std::size_t kMaxJointActions = 1'000'000;

NashAnalysis nash_vs_global(const MatrixGame& game, double tol = 1e-12);

// Stag (0) / Hare (1): (4,4) (0,3) / (3,0) (3,3).
MatrixGame stag_hunt();

using BigInt = boost::multiprecision::cpp_int;

struct CounterfactualCount {
  BigInt joint_combinations;  // |A|^(n-1)
  BigInt paper_expression;    // 2^(|A|^(n-1))
};

CounterfactualCount counterfactual_count(unsigned action_space_size, unsigned n_agents);

// --- Non-stationarity drift -------------------------------------------------

// Sign-quantizes (three levels, dead zone around zero) the offsets to the
// nearest landmark and the nearest other agent of a spread observation.
struct StateBucketing {
  int n_agents = 3;
  int n_landmarks = 3;
  double dead_zone = 0.1;

  int bucket(std::span<const double> observation) const;
  int bucket_count() const;
};

struct DriftSample {
  int episode = 0;
  int state_bucket = 0;
  int action = 0;
  int next_bucket = 0;
};

struct EpisodeWindow {
  int begin = 0;  // inclusive
  int end = 0;    // exclusive
};

struct DriftCell {
  int state_bucket = 0;
  int action = 0;
  int early_samples = 0;
  int late_samples = 0;
  double tv_distance = 0.0;
};

struct WindowDrift {
  EpisodeWindow early;
  EpisodeWindow late;
  std::vector<DriftCell> cells;      // only cells meeting the sample floor
  std::optional<double> mean_tv;     // empty: insufficient data
};

struct DriftReport {
  std::vector<WindowDrift> pairs;
};

DriftReport nonstationarity_drift(std::span<const DriftSample> log,
                                  std::span<const std::pair<EpisodeWindow, EpisodeWindow>> windows,
                                  int min_samples = 30);

}  // namespace marl::theory

#endif  // MARL_THEORY_HPP_
