#include "marl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

namespace marl::theory {

void TabularMdp::validate() const {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("TabularMdp: empty state/action set");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMdp: gamma must be in (0,1)");
  const std::size_t n = static_cast<std::size_t>(n_states) * n_actions * n_states;
  if (transition.size() != n || reward.size() != n) {
    throw std::invalid_argument("TabularMdp: table sizes do not match the state/action counts");
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double row = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double p = transition[index(s, a, s2)];
        if (p < 0.0) throw std::invalid_argument("TabularMdp: negative transition probability");
        row += p;
      }
      if (std::abs(row - 1.0) > 1e-12) {
        throw std::invalid_argument("TabularMdp: transition row does not sum to 1");
      }
    }
  }
}

TabularMdp make_mdp(int n_states, int n_actions, double gamma) {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("TabularMdp: empty state/action set");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMdp: gamma must be in (0,1)");
  TabularMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  const std::size_t n = static_cast<std::size_t>(n_states) * n_actions * n_states;
  m.transition.assign(n, 0.0);
  m.reward.assign(n, 0.0);
  return m;
}

TabularMdp random_mdp(int n_states, int n_actions, double gamma, Rng& rng) {
  TabularMdp m = make_mdp(n_states, n_actions, gamma);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> rew(-1.0, 1.0);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double total = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double w = unit(rng);
        m.transition[m.index(s, a, s2)] = w;
        total += w;
      }
      // Normalize, then push the rounding residue onto the last entry.
      double acc = 0.0;
      for (int s2 = 0; s2 + 1 < n_states; ++s2) {
        double& p = m.transition[m.index(s, a, s2)];
        p /= total;
        acc += p;
      }
      m.transition[m.index(s, a, n_states - 1)] = 1.0 - acc;
      for (int s2 = 0; s2 < n_states; ++s2) m.reward[m.index(s, a, s2)] = rew(rng);
    }
  }
  return m;
}

namespace {

double q_value(const TabularMdp& mdp, std::span<const double> values, int s, int a) {
  double q = 0.0;
  for (int s2 = 0; s2 < mdp.n_states; ++s2) {
    const std::size_t i = mdp.index(s, a, s2);
    q += mdp.transition[i] * (mdp.reward[i] + mdp.gamma * values[s2]);
  }
  return q;
}

}  // namespace

std::vector<int> greedy_policy(const TabularMdp& mdp, std::span<const double> values,
                               double tie_tol) {
  std::vector<int> policy(mdp.n_states, 0);
  for (int s = 0; s < mdp.n_states; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double q = q_value(mdp, values, s, a);
      if (q > best + tie_tol) {
        best = q;
        policy[s] = a;
      }
    }
  }
  return policy;
}

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol, int max_iterations) {
  mdp.validate();
  ValueIterationResult r;
  r.values.assign(mdp.n_states, 0.0);
  std::vector<double> next(mdp.n_states);
  for (r.iterations = 1; r.iterations <= max_iterations; ++r.iterations) {
    double change = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.n_actions; ++a) best = std::max(best, q_value(mdp, r.values, s, a));
      next[s] = best;
      change = std::max(change, std::abs(best - r.values[s]));
    }
    r.values.swap(next);
    if (change < tol) break;
  }
  if (r.iterations > max_iterations) throw std::runtime_error("value_iteration did not converge");
  r.policy = greedy_policy(mdp, r.values);
  return r;
}

TabularMdp apply_potential_shaping(const TabularMdp& mdp, std::span<const double> phi) {
  if (static_cast<int>(phi.size()) != mdp.n_states) {
    throw std::invalid_argument("potential must have one entry per state");
  }
  for (double v : phi) {
    if (!std::isfinite(v)) throw std::invalid_argument("potential must be finite");
  }
  TabularMdp shaped = mdp;
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        shaped.reward[mdp.index(s, a, s2)] += mdp.gamma * phi[s2] - phi[s];
      }
    }
  }
  return shaped;
}

std::size_t MatrixGame::joint_count() const {
  std::size_t n = 1;
  for (int k : actions_per_player) {
    if (k < 1) throw std::invalid_argument("MatrixGame: every player needs >= 1 action");
    if (n > kMaxJointActions / static_cast<std::size_t>(k)) {
      throw std::invalid_argument("MatrixGame: joint action space exceeds brute-force limit");
    }
    n *= static_cast<std::size_t>(k);
  }
  return n;
}

std::vector<int> MatrixGame::decode(std::size_t joint) const {
  std::vector<int> profile(actions_per_player.size());
  for (std::size_t p = actions_per_player.size(); p-- > 0;) {
    profile[p] = static_cast<int>(joint % actions_per_player[p]);
    joint /= actions_per_player[p];
  }
  return profile;
}

std::size_t MatrixGame::encode(std::span<const int> profile) const {
  std::size_t joint = 0;
  for (std::size_t p = 0; p < actions_per_player.size(); ++p) {
    joint = joint * actions_per_player[p] + profile[p];
  }
  return joint;
}

void MatrixGame::validate() const {
  if (actions_per_player.empty()) throw std::invalid_argument("MatrixGame: no players");
  const std::size_t n = joint_count();
  if (payoff.size() != actions_per_player.size()) {
    throw std::invalid_argument("MatrixGame: need one payoff table per player");
  }
  for (const auto& table : payoff) {
    if (table.size() != n) throw std::invalid_argument("MatrixGame: payoff table has wrong size");
  }
}

NashAnalysis nash_vs_global(const MatrixGame& game, double tol) {
  game.validate();
  const std::size_t joints = game.joint_count();
  const int players = game.n_players();
  NashAnalysis out;

  double best_total = -std::numeric_limits<double>::infinity();
  std::vector<double> totals(joints, 0.0);
  for (std::size_t j = 0; j < joints; ++j) {
    for (int p = 0; p < players; ++p) totals[j] += game.payoff[p][j];
    best_total = std::max(best_total, totals[j]);
  }

  for (std::size_t j = 0; j < joints; ++j) {
    std::vector<int> profile = game.decode(j);
    bool stable = true;
    for (int p = 0; p < players && stable; ++p) {
      const double current = game.payoff[p][j];
      const int own = profile[p];
      for (int dev = 0; dev < game.actions_per_player[p]; ++dev) {
        if (dev == own) continue;
        profile[p] = dev;
        const double deviated = game.payoff[p][game.encode(profile)];
        profile[p] = own;
        if (deviated > current + tol) {
          stable = false;
          break;
        }
      }
    }
    const bool optimal = totals[j] >= best_total - tol;
    if (stable) out.pure_nash.push_back(profile);
    if (optimal) out.global_optima.push_back(profile);
    if (stable && !optimal) out.misaligned = true;
  }
  return out;
}

MatrixGame stag_hunt() {
  MatrixGame g;
  g.actions_per_player = {2, 2};
  // joint index = a0 * 2 + a1 ; 0 = stag, 1 = hare
  g.payoff = {{4.0, 0.0, 3.0, 3.0}, {4.0, 3.0, 0.0, 3.0}};
  g.action_names = {"stag", "hare"};
  return g;
}

CounterfactualCount counterfactual_count(unsigned action_space_size, unsigned n_agents) {
  if (action_space_size < 1 || n_agents < 1) {
    throw std::invalid_argument("counterfactual_count: sizes must be >= 1");
  }
  CounterfactualCount c;
  c.joint_combinations = boost::multiprecision::pow(BigInt(action_space_size), n_agents - 1);
  // 2^k needs k bits; refuse exponents that would not fit in memory.
  constexpr unsigned long kMaxBits = 1ul << 28;
  if (c.joint_combinations > kMaxBits) {
    throw std::overflow_error("counterfactual_count: 2^(|A|^(n-1)) exceeds 2^28 bits");
  }
  c.paper_expression = BigInt(1) << c.joint_combinations.convert_to<unsigned long>();
  return c;
}

namespace {

int quantize(double v, double dead_zone) {
  if (v > dead_zone) return 2;
  if (v < -dead_zone) return 0;
  return 1;
}

// Index of the smallest (dx, dy) pair by Euclidean norm; lowest index on ties.
int nearest_pair(std::span<const double> pairs) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pairs.size() / 2; ++k) {
    const double d = std::hypot(pairs[2 * k], pairs[2 * k + 1]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace

int StateBucketing::bucket(std::span<const double> obs) const {
  const std::size_t landmark_begin = 4;
  const std::size_t other_begin = landmark_begin + 2 * n_landmarks;
  if (obs.size() < other_begin + 2 * static_cast<std::size_t>(n_agents - 1)) {
    throw std::invalid_argument("StateBucketing: observation too short");
  }
  const auto landmarks = obs.subspan(landmark_begin, 2 * n_landmarks);
  const int lm = nearest_pair(landmarks);
  int code = quantize(landmarks[2 * lm], dead_zone);
  code = code * 3 + quantize(landmarks[2 * lm + 1], dead_zone);
  if (n_agents > 1) {
    const auto others = obs.subspan(other_begin, 2 * (n_agents - 1));
    const int o = nearest_pair(others);
    code = code * 3 + quantize(others[2 * o], dead_zone);
    code = code * 3 + quantize(others[2 * o + 1], dead_zone);
  }
  return code;
}

int StateBucketing::bucket_count() const { return n_agents > 1 ? 81 : 9; }

DriftReport nonstationarity_drift(std::span<const DriftSample> log,
                                  std::span<const std::pair<EpisodeWindow, EpisodeWindow>> windows,
                                  int min_samples) {
  using Cell = std::pair<int, int>;                  // (bucket, action)
  using Histogram = std::map<int, int>;              // next bucket -> count
  DriftReport report;
  for (const auto& [early, late] : windows) {
    if (early.begin >= early.end || late.begin >= late.end) {
      throw std::invalid_argument("drift window must be non-empty");
    }
    if (early.end > late.begin && late.end > early.begin) {
      throw std::invalid_argument("drift windows must be disjoint");
    }
    std::map<Cell, Histogram> first, second;
    for (const DriftSample& s : log) {
      if (s.episode >= early.begin && s.episode < early.end) {
        ++first[{s.state_bucket, s.action}][s.next_bucket];
      } else if (s.episode >= late.begin && s.episode < late.end) {
        ++second[{s.state_bucket, s.action}][s.next_bucket];
      }
    }
    WindowDrift wd{early, late, {}, std::nullopt};
    double sum = 0.0;
    for (const auto& [cell, h1] : first) {
      const auto it = second.find(cell);
      if (it == second.end()) continue;
      const Histogram& h2 = it->second;
      int n1 = 0, n2 = 0;
      for (const auto& [_, c] : h1) n1 += c;
      for (const auto& [_, c] : h2) n2 += c;
      if (n1 < min_samples || n2 < min_samples) continue;
      Histogram keys = h1;
      for (const auto& [k, _] : h2) keys[k];
      double tv = 0.0;
      for (const auto& [k, _] : keys) {
        const auto a = h1.find(k);
        const auto b = h2.find(k);
        const double p = a == h1.end() ? 0.0 : static_cast<double>(a->second) / n1;
        const double q = b == h2.end() ? 0.0 : static_cast<double>(b->second) / n2;
        tv += std::abs(p - q);
      }
      tv *= 0.5;
      wd.cells.push_back({cell.first, cell.second, n1, n2, tv});
      sum += tv;
    }
    if (!wd.cells.empty()) wd.mean_tv = sum / static_cast<double>(wd.cells.size());
    report.pairs.push_back(std::move(wd));
  }
  return report;
}

}  // namespace marl::theory
