#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "gae_reference.hpp"
#include "marl/ppo.hpp"

using namespace marl;
using namespace marl::ppo;
using marl::testing::brute_force_gae;

namespace {

UpdateBatch make_batch(const nn::ParamSet& actor, int n, Rng& rng, double adv_value,
                       bool random_adv) {
  UpdateBatch b;
  b.obs_dim = actor.spec().input_size();
  b.critic_dim = b.obs_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < n; ++t) {
    std::vector<double> obs(b.obs_dim);
    for (double& x : obs) x = normal(rng);
    const auto logits = nn::forward(actor, obs);
    const auto s = nn::categorical::sample(logits, rng);
    b.observations.insert(b.observations.end(), obs.begin(), obs.end());
    b.actions.push_back(s.action);
    b.old_log_probs.push_back(s.log_prob);
    b.advantages.push_back(random_adv ? normal(rng) : adv_value);
    b.returns.push_back(normal(rng));
  }
  b.critic_inputs = b.observations;
  return b;
}

}  // namespace

TEST_SUITE("ppo") {

TEST_CASE("gae hand example") {
  const std::vector<double> r = {1.0, 0.0};
  const std::vector<double> v = {0.5, 0.2};
  const std::vector<std::uint8_t> d = {0, 1};
  const auto est = compute_gae(r, v, d, 0.99, 0.95);
  CHECK(est.advantages[0] == doctest::Approx(0.5099).epsilon(1e-12));
  CHECK(est.advantages[1] == doctest::Approx(-0.2).epsilon(1e-12));
  CHECK(est.returns[0] == doctest::Approx(1.0099).epsilon(1e-12));
  CHECK(est.returns[1] == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("gae special cases") {
  Rng rng = make_rng(20, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> r(25), v(25);
  for (auto& x : r) x = normal(rng);
  for (auto& x : v) x = normal(rng);
  std::vector<std::uint8_t> d(25, 0);
  d.back() = 1;

  const auto td = compute_gae(r, v, d, 0.99, 0.0);
  for (std::size_t t = 0; t < 25; ++t) {
    const double next = t + 1 < 25 ? v[t + 1] : 0.0;
    CHECK(td.advantages[t] == doctest::Approx(r[t] + 0.99 * next - v[t]).epsilon(1e-14));
  }
  const auto mc = compute_gae(r, v, d, 1.0, 1.0);
  for (std::size_t t = 0; t < 25; ++t) {
    double ret = 0.0;
    for (std::size_t k = t; k < 25; ++k) ret += r[k];
    CHECK(mc.advantages[t] == doctest::Approx(ret - v[t]).epsilon(1e-12));
  }
  CHECK_THROWS(compute_gae(r, std::vector<double>(24), d, 0.99, 0.95));
}

TEST_CASE("gae matches brute force across episode boundaries") {
  Rng rng = make_rng(21, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 75;
    std::vector<double> r(n), v(n);
    for (auto& x : r) x = normal(rng);
    for (auto& x : v) x = normal(rng);
    std::vector<std::uint8_t> d(n, 0);
    d[24] = d[49] = d[74] = 1;
    const auto est = compute_gae(r, v, d, 0.99, 0.95);
    const auto ref = brute_force_gae(r, v, d, 0.99, 0.95);
    for (std::size_t t = 0; t < n; ++t) CHECK(std::abs(est.advantages[t] - ref[t]) < 1e-10);
  }
}

TEST_CASE("advantage normalization") {
  AdvantageEstimate est;
  est.advantages = {1.0, 2.0, 3.0, 10.0};
  normalize_advantages(est);
  double mean = 0.0, var = 0.0;
  for (double a : est.advantages) mean += a;
  mean /= 4.0;
  for (double a : est.advantages) var += (a - mean) * (a - mean);
  var /= 4.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
  CHECK(est.normalized);

  AdvantageEstimate single;
  single.advantages = {3.5};
  normalize_advantages(single);
  CHECK(single.advantages[0] == 3.5);
  CHECK(!single.normalized);
}

TEST_CASE("normalization and gae vector-jacobian products match finite differences") {
  Rng rng = make_rng(22, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = 30;
  std::vector<double> r(n), v(n), up(n);
  for (auto& x : r) x = normal(rng);
  for (auto& x : v) x = normal(rng);
  for (auto& x : up) x = normal(rng);
  std::vector<std::uint8_t> d(n, 0);
  d[9] = d[29] = 1;

  auto objective = [&](const std::vector<double>& rewards) {
    auto est = compute_gae(rewards, v, d, 0.99, 0.95);
    normalize_advantages(est);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += up[i] * est.advantages[i];
    return s;
  };
  auto est = compute_gae(r, v, d, 0.99, 0.95);
  normalize_advantages(est);
  const auto d_raw = normalization_vjp(est, up);
  const auto d_r = gae_reward_vjp(d_raw, d, 0.99, 0.95);
  const double h = 1e-6;
  for (std::size_t i = 0; i < n; ++i) {
    auto rp = r;
    auto rm = r;
    rp[i] += h;
    rm[i] -= h;
    const double fd = (objective(rp) - objective(rm)) / (2 * h);
    CHECK(d_r[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("clipped policy objective") {
  const auto clipped = policy_objective(std::log(2.0), 0.0, 1.0, 0.2);
  CHECK(clipped.loss == doctest::Approx(-1.2));
  CHECK(clipped.grad_log_prob == 0.0);
  CHECK(clipped.clipped);

  for (double a : {-2.0, -0.5, 0.0, 0.7, 3.0}) {
    const auto anchor = policy_objective(-1.3, -1.3, a, 0.2);
    CHECK(anchor.loss == doctest::Approx(-a));
    CHECK(anchor.ratio == 1.0);
  }

  const auto neg = policy_objective(std::log(0.5), 0.0, -1.0, 0.2);
  CHECK(neg.loss == doctest::Approx(0.8));
  CHECK(neg.grad_log_prob == 0.0);

  // Unclipped branch: gradient of -rho*A with respect to log_prob_new.
  const auto inside = policy_objective(std::log(1.1), 0.0, 2.0, 0.2);
  const double h = 1e-6;
  const double fd = (policy_objective(std::log(1.1) + h, 0.0, 2.0, 0.2).loss -
                     policy_objective(std::log(1.1) - h, 0.0, 2.0, 0.2).loss) /
                    (2 * h);
  CHECK(inside.grad_log_prob == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("value loss") {
  CHECK(value_loss(1.0, 1.0).loss == 0.0);
  CHECK(value_loss(1.0, 0.0).loss == 0.5);
  const double h = 1e-6;
  const double fd = (value_loss(0.3 + h, -0.4).loss - value_loss(0.3 - h, -0.4).loss) / (2 * h);
  CHECK(std::abs(value_loss(0.3, -0.4).grad - fd) < 1e-6);
}

TEST_CASE("run_update with zero learning rate leaves parameters untouched") {
  Rng rng = make_rng(23, 0);
  auto actor = nn::init_params(nn::MlpSpec{{6, 16, 5}}, nn::InitScheme::kOrthogonalGainSqrt2, rng);
  auto critic = nn::init_params(nn::MlpSpec{{6, 16, 1}}, nn::InitScheme::kOrthogonalGainSqrt2, rng);
  const auto batch = make_batch(actor, 40, rng, 0.0, true);
  const auto actor0 = actor;
  const auto critic0 = critic;
  nn::AdamState aopt(actor.size()), copt(critic.size());
  PpoConfig config;
  config.learning_rate = 0.0;
  const auto report = run_update(batch, actor, aopt, &critic, &copt, config);
  CHECK(actor == actor0);
  CHECK(critic == critic0);
  CHECK(report.epochs.size() == 3);
  CHECK(report.value_loss > 0.0);
  CHECK(report.entropy > 0.0);
}

TEST_CASE("first epoch of a fresh batch is unclipped") {
  Rng rng = make_rng(24, 0);
  auto actor = nn::init_params(nn::MlpSpec{{6, 16, 5}}, nn::InitScheme::kOrthogonalGainSqrt2, rng);
  const auto batch = make_batch(actor, 50, rng, 0.0, true);
  nn::AdamState opt(actor.size());
  PpoConfig config;
  config.normalize_advantages = false;
  const auto report = run_update(batch, actor, opt, nullptr, nullptr, config);
  double mean_adv = 0.0;
  for (double a : batch.advantages) mean_adv += a;
  mean_adv /= 50.0;
  CHECK(report.epochs[0].clip_fraction == 0.0);
  CHECK(report.epochs[0].policy_loss == doctest::Approx(-mean_adv).epsilon(1e-10));
  for (const auto& e : report.epochs) {
    CHECK(e.clip_fraction >= 0.0);
    CHECK(e.clip_fraction <= 1.0);
  }
}

TEST_CASE("dominant entropy bonus raises entropy") {
  Rng rng = make_rng(25, 0);
  auto actor = nn::init_params(nn::MlpSpec{{6, 16, 5}}, nn::InitScheme::kOrthogonalGainSqrt2, rng);
  const auto batch = make_batch(actor, 50, rng, 0.0, true);
  auto entropy_of = [&](const nn::ParamSet& p) {
    double h = 0.0;
    for (std::size_t t = 0; t < batch.size(); ++t) {
      h += nn::categorical::entropy(nn::forward(p, batch.observation(t)));
    }
    return h;
  };
  const double before = entropy_of(actor);
  nn::AdamState opt(actor.size());
  PpoConfig config;
  config.entropy_coef = 1e6;
  run_update(batch, actor, opt, nullptr, nullptr, config);
  CHECK(entropy_of(actor) > before);
}

TEST_CASE("single positive-advantage step raises the taken action's probability") {
  Rng rng = make_rng(26, 0);
  auto actor = nn::init_params(nn::MlpSpec{{6, 16, 5}}, nn::InitScheme::kOrthogonalGainSqrt2, rng);
  const auto batch = make_batch(actor, 1, rng, 1.0, false);
  const auto obs = batch.observation(0);
  const double before = nn::categorical::log_prob(nn::forward(actor, obs), batch.actions[0]);
  nn::AdamState opt(actor.size());
  PpoConfig config;
  config.entropy_coef = 0.0;
  run_update(batch, actor, opt, nullptr, nullptr, config);
  CHECK(nn::categorical::log_prob(nn::forward(actor, obs), batch.actions[0]) > before);
}

TEST_CASE("run_update is deterministic and rejects bad input") {
  Rng rng = make_rng(27, 0);
  const auto actor0 =
      nn::init_params(nn::MlpSpec{{6, 16, 5}}, nn::InitScheme::kOrthogonalGainSqrt2, rng);
  const auto batch = make_batch(actor0, 30, rng, 0.0, true);
  auto a1 = actor0;
  auto a2 = actor0;
  nn::AdamState o1(a1.size()), o2(a2.size());
  run_update(batch, a1, o1, nullptr, nullptr, PpoConfig{});
  run_update(batch, a2, o2, nullptr, nullptr, PpoConfig{});
  CHECK(a1 == a2);

  UpdateBatch empty;
  empty.obs_dim = 6;
  CHECK_THROWS(run_update(empty, a1, o1, nullptr, nullptr, PpoConfig{}));

  auto poisoned = batch;
  poisoned.advantages[3] = std::numeric_limits<double>::quiet_NaN();
  PpoConfig raw;
  raw.normalize_advantages = false;
  CHECK_THROWS_AS(run_update(poisoned, a1, o1, nullptr, nullptr, raw), NonFiniteLoss);

  PpoConfig invalid;
  invalid.gamma = 1.5;
  CHECK_THROWS(invalid.validate());
  invalid = PpoConfig{};
  invalid.update_epochs = 0;
  CHECK_THROWS(invalid.validate());
}

TEST_CASE("policy gradient direction is invariant to affine advantage rescaling") {
  Rng rng = make_rng(28, 0);
  const auto actor0 =
      nn::init_params(nn::MlpSpec{{6, 16, 5}}, nn::InitScheme::kOrthogonalGainSqrt2, rng);
  const auto batch = make_batch(actor0, 40, rng, 0.0, true);
  auto scaled = batch;
  for (double& a : scaled.advantages) a = 3.0 * a + 7.0;
  auto a1 = actor0;
  auto a2 = actor0;
  nn::AdamState o1(a1.size()), o2(a2.size());
  PpoConfig config;
  config.update_epochs = 1;
  run_update(batch, a1, o1, nullptr, nullptr, config);
  run_update(scaled, a2, o2, nullptr, nullptr, config);
  for (std::size_t i = 0; i < a1.size(); ++i) {
    CHECK(a1.flat()[i] == doctest::Approx(a2.flat()[i]).epsilon(1e-9));
  }
}

}  // TEST_SUITE
