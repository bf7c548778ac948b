#include <cmath>

#include "doctest.h"

#include "dtsync/actor_critic.hpp"
#include "dtsync/errors.hpp"
#include "dtsync/mlp.hpp"

using namespace dtsync;

namespace {

DeployEnv small_env(std::uint64_t seed, Dynamics dyn = Dynamics::kStatic) {
  TopologyConfig tc;
  return DeployEnv(sample_scenario(seed, tc, WorkloadConfig{}, RadioParams{}), tc, RewardParams{}, dyn);
}

}  // namespace

TEST_SUITE("learner") {

TEST_CASE("mlp gradients match finite differences") {
  Rng rng = make_rng(1);
  Mlp net({4, 6, 5, 2}, rng, 1.0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
  Eigen::MatrixXd w = Eigen::MatrixXd::Random(2, 3);  // loss = sum(w .* out)
  Mlp::Cache cache;
  net.forward(x, &cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params()));
  net.backward(cache, w, grad);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double keep = net.params()(i);
    net.params()(i) = keep + h;
    const double up = (w.array() * net.forward(x).array()).sum();
    net.params()(i) = keep - h;
    const double down = (w.array() * net.forward(x).array()).sum();
    net.params()(i) = keep;
    CHECK(grad(i) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("adam and clipping") {
  Eigen::VectorXd p(2);
  p << 3.0, -2.0;
  Adam opt(2, 0.05);
  for (int i = 0; i < 2000; ++i) opt.step(p, 2.0 * p);
  CHECK(p.norm() < 1e-2);

  Eigen::VectorXd g(3);
  g << 3.0, 4.0, 0.0;
  clip_norm(g, 1.0);
  CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::VectorXd small(1);
  small << 0.5;
  clip_norm(small, 1.0);
  CHECK(small(0) == 0.5);
}

TEST_CASE("learner configuration") {
  LearnerConfig c;
  CHECK_NOTHROW(c.validate());
  c.discount = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = LearnerConfig{};
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = LearnerConfig{};
  c.noise_end = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
}

TEST_CASE("actions are feasible and greedy actions deterministic") {
  const DeployEnv env = small_env(2);
  Rng init = make_rng(5);
  const DeploymentPolicy policy(16, init);
  const auto state = env.initial_state(nearest_baseline(env.scenario()));
  Rng a = make_rng(1), b = make_rng(2);
  const auto ga = policy.act(env, state, 0.0, a), gb = policy.act(env, state, 0.0, b);
  CHECK(ga == gb);
  CHECK(is_feasible(ga, env.scenario().topo));
  DeploymentPolicy::Decisions d;
  const auto noisy = policy.act(env, state, 1.0, a, &d);
  CHECK(is_feasible(noisy, env.scenario().topo));
  CHECK(d.host_choices.size() == env.scenario().topo.num_bs());
  CHECK(d.pair_choices.size() == d.pair_inputs.size());
  CHECK(policy.critic_features(env, state, 0.0).size() == kCriticFeatures);
  CHECK(std::isfinite(policy.value(env, state, 0.5)));
}

TEST_CASE("training is reproducible") {
  LearnerConfig c;
  c.iterations = 40;
  c.seed = 3;
  const DeployEnv env = small_env(4, Dynamics::kFading);
  const auto a = actor_critic_train(env, c);
  const auto b = actor_critic_train(env, c);
  CHECK(a.cost_curve.size() == 40);
  CHECK(a.cost_curve == b.cost_curve);
  CHECK(a.greedy == b.greedy);
  CHECK(is_feasible(a.greedy, env.scenario().topo));
  CHECK(a.greedy_objective == doctest::Approx(deployment_objective(a.greedy, env.scenario())).epsilon(1e-14));
  CHECK(a.greedy_cost == doctest::Approx(env.deployment_cost(a.greedy, env.scenario().topo)).epsilon(1e-14));

  Rng rng = make_rng(8);
  const auto g = greedy_solution(a.policy, env, env.scenario().topo, 3, 4, rng);
  CHECK(is_feasible(g, env.scenario().topo));
}

TEST_CASE("short training improves on the nearest baseline") {
  LearnerConfig c;
  c.iterations = 300;
  c.seed = 1;
  const DeployEnv env = small_env(1);
  const auto r = actor_critic_train(env, c);
  CHECK(r.greedy_objective <= deployment_objective(nearest_baseline(env.scenario()), env.scenario()));
}

}  // TEST_SUITE
