#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "doctest.h"

#include "dtsync/errors.hpp"
#include "dtsync/sched_mdp.hpp"

using namespace dtsync;

namespace {

MdpSpec make_spec(int aoci_cap, int aoi_cap, double p, double q, double C, double w = 1.0) {
  MdpSpec s;
  s.aoci_cap = aoci_cap;
  s.aoi_cap = aoi_cap;
  s.p_tx = p;
  s.content_q = q;
  s.update_cost = C;
  s.weight = w;
  return s;
}

Eigen::MatrixXd dense_chain(const PolicyTable& policy, const MdpSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.num_states());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const AociState s = spec.state(static_cast<std::size_t>(i));
    for (const auto& t : transitions(s, policy.at(s), spec))
      P(i, static_cast<Eigen::Index>(spec.index(t.next))) += t.prob;
  }
  return P;
}

// Long-run cost from (1,1): the distribution of the lazy chain (P + I) / 2
// converges to the Cesaro limit of P, whatever the class structure.
double long_run_cost_oracle(const PolicyTable& policy, const MdpSpec& spec) {
  const Eigen::MatrixXd P = dense_chain(policy, spec);
  const auto n = P.rows();
  const Eigen::MatrixXd lazy = 0.5 * (P + Eigen::MatrixXd::Identity(n, n));
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(n);
  mu(static_cast<Eigen::Index>(spec.index({1, 1}))) = 1.0;
  for (int it = 0; it < 200000; ++it) {
    const Eigen::RowVectorXd next = mu * lazy;
    const double diff = (next - mu).cwiseAbs().sum();
    mu = next;
    if (diff < 1e-15) break;
  }
  double cost = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const AociState s = spec.state(static_cast<std::size_t>(i));
    cost += mu(i) * stage_cost(s, policy.at(s), spec);
  }
  return cost;
}

// Stationary distribution by solving pi (P - I) = 0, sum pi = 1.
Eigen::VectorXd stationary_oracle(const Eigen::MatrixXd& P) {
  const auto n = P.rows();
  Eigen::MatrixXd A(n + 1, n);
  A.topRows(n) = (P - Eigen::MatrixXd::Identity(n, n)).transpose();
  A.row(n).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
  b(n) = 1.0;
  return A.colPivHouseholderQr().solve(b);
}

PolicyTable policy_from_bits(const MdpSpec& spec, unsigned bits) {
  PolicyTable p(spec.aoci_cap, spec.aoi_cap);
  for (std::size_t i = 0; i < spec.num_states(); ++i)
    p.set_index(i, (bits >> i) & 1u ? Action::kUpdate : Action::kIdle);
  return p;
}

double find_prob(const SuccessorList& list, AociState s) {
  for (const auto& t : list)
    if (t.next == s) return t.prob;
  return 0.0;
}

}  // namespace

TEST_SUITE("sched_mdp") {

TEST_CASE("transition branches") {
  const MdpSpec spec = make_spec(10, 10, 0.8, 0.3, 12);
  const auto idle = transitions({3, 2}, Action::kIdle, spec);
  REQUIRE(idle.size() == 1);
  CHECK(idle[0].next == AociState{4, 3});
  CHECK(idle[0].prob == 1.0);

  CHECK(spec.return_prob(2) == doctest::Approx(0.58).epsilon(1e-14));
  const auto upd = transitions({3, 2}, Action::kUpdate, spec);
  REQUIRE(upd.size() == 3);
  CHECK(find_prob(upd, {1, 1}) == doctest::Approx(0.336).epsilon(1e-14));
  CHECK(find_prob(upd, {4, 1}) == doctest::Approx(0.464).epsilon(1e-14));
  CHECK(find_prob(upd, {4, 3}) == doctest::Approx(0.2).epsilon(1e-14));

  const auto corner = transitions({10, 10}, Action::kIdle, spec);
  REQUIRE(corner.size() == 1);
  CHECK(corner[0].next == AociState{10, 10});
  CHECK(corner[0].prob == 1.0);
}

TEST_CASE("transition probabilities close on every state") {
  for (double p : {0.0, 0.3, 0.8, 1.0})
    for (double q : {0.0, 0.1, 0.5, 1.0}) {
      const MdpSpec spec = make_spec(7, 5, p, q, 3);
      for (std::size_t i = 0; i < spec.num_states(); ++i)
        for (Action a : {Action::kIdle, Action::kUpdate}) {
          const auto list = transitions(spec.state(i), a, spec);
          CHECK(list.size() <= 3);
          double sum = 0.0;
          for (const auto& t : list) {
            CHECK(spec.contains(t.next));
            CHECK(t.prob > 0.0);
            sum += t.prob;
          }
          CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
        }
    }
}

TEST_CASE("stage cost") {
  const MdpSpec spec = make_spec(10, 10, 0.8, 0.3, 12, 1);
  CHECK(stage_cost({5, 2}, Action::kIdle, spec) == 5);
  CHECK(stage_cost({5, 2}, Action::kUpdate, spec) == 17);
  CHECK(stage_cost({1, 1}, Action::kUpdate, make_spec(10, 10, 0.8, 0.3, 12, 0)) == 1);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(make_spec(0, 1, 0.5, 0.5, 1).validate(), InvalidParameter);
  CHECK_THROWS_AS(make_spec(3, 4, 0.5, 0.5, 1).validate(), InvalidParameter);
  CHECK_THROWS_AS(make_spec(4, 4, 1.5, 0.5, 1).validate(), InvalidParameter);
  CHECK_THROWS_AS(make_spec(4, 4, 0.5, -0.1, 1).validate(), InvalidParameter);
  CHECK_THROWS_AS(make_spec(4, 4, 0.5, 0.5, -1).validate(), InvalidParameter);
  CHECK_NOTHROW(make_spec(1, 1, 0.5, 0.5, 1).validate());
}

TEST_CASE("policy evaluation") {
  SUBCASE("single state") {
    const MdpSpec spec = make_spec(1, 1, 0.7, 0.4, 5);
    for (Action a : {Action::kIdle, Action::kUpdate}) {
      const auto ev = evaluate_policy(PolicyTable::uniform(spec, a), spec);
      CHECK(ev.gain == doctest::Approx(stage_cost({1, 1}, a, spec)).epsilon(1e-12));
      CHECK(ev.bias[0] == 0.0);
    }
  }
  SUBCASE("all idle absorbs at the caps") {
    const MdpSpec spec = make_spec(12, 9, 0.8, 0.3, 12);
    const auto ev = evaluate_policy(PolicyTable::uniform(spec, Action::kIdle), spec);
    CHECK(ev.gain == doctest::Approx(12.0).epsilon(1e-10));
    CHECK(average_cost_of(PolicyTable::uniform(spec, Action::kIdle), spec) == doctest::Approx(12.0).epsilon(1e-12));
  }
  SUBCASE("zero-wait on a 3x3 space against the stationary distribution") {
    const MdpSpec spec = make_spec(3, 3, 0.8, 0.3, 12);
    const PolicyTable zw = PolicyTable::uniform(spec, Action::kUpdate);
    const Eigen::MatrixXd P = dense_chain(zw, spec);
    const Eigen::VectorXd pi = stationary_oracle(P);
    double oracle = 0.0;
    for (std::size_t i = 0; i < spec.num_states(); ++i)
      oracle += pi(static_cast<Eigen::Index>(i)) * stage_cost(spec.state(i), Action::kUpdate, spec);
    CHECK(std::abs(evaluate_policy(zw, spec).gain - oracle) <= 1e-9);
    CHECK(std::abs(average_cost_of(zw, spec) - oracle) <= 1e-9);
  }
  SUBCASE("Poisson equations hold and all methods agree") {
    const MdpSpec spec = make_spec(20, 15, 0.8, 0.3, 6);
    PolicyTable pol(20, 15);
    for (std::size_t i = 0; i < spec.num_states(); ++i)
      if (spec.state(i).aoci >= 6) pol.set_index(i, Action::kUpdate);
    std::vector<Evaluation> evs;
    for (EvalMethod m : {EvalMethod::kDense, EvalMethod::kSparseDirect, EvalMethod::kSweep}) {
      EvalOptions o;
      o.method = m;
      evs.push_back(evaluate_policy(pol, spec, {1, 1}, o));
    }
    const auto& ev = evs.front();
    for (std::size_t i = 0; i < spec.num_states(); ++i) {
      const AociState s = spec.state(i);
      double rhs = stage_cost(s, pol.at(s), spec);
      for (const auto& t : transitions(s, pol.at(s), spec)) rhs += t.prob * ev.bias[spec.index(t.next)];
      CHECK(std::abs(ev.gain + ev.bias[i] - rhs) <= 1e-9);
    }
    for (const auto& other : evs) {
      CHECK(other.gain == doctest::Approx(ev.gain).epsilon(1e-9));
      for (std::size_t i = 0; i < spec.num_states(); ++i)
        CHECK(std::abs(other.bias[i] - ev.bias[i]) <= 1e-6 * (1.0 + std::abs(ev.bias[i])));
    }
    CHECK(evs.back().entries_per_sweep <= 3 * spec.num_states());
  }
  SUBCASE("a policy with two closed classes is rejected") {
    // Updating only at (1,1) with certain success and change keeps (1,1)
    // closed, while idle drift from elsewhere ends at the caps.
    const MdpSpec spec = make_spec(4, 4, 1.0, 1.0, 0);
    PolicyTable pol(4, 4);
    pol.set({1, 1}, Action::kUpdate);
    CHECK(count_closed_classes(pol, spec) == 2);
    CHECK_THROWS_AS(evaluate_policy(pol, spec), SolverFailure);
    const auto mc = evaluate_multichain(pol, spec);
    CHECK(mc.closed_classes == 2);
    CHECK(mc.gain[spec.index({1, 1})] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mc.gain[spec.index({2, 2})] == doctest::Approx(4.0).epsilon(1e-12));
  }
}

TEST_CASE("improvement") {
  const MdpSpec spec = make_spec(6, 6, 0.8, 0.3, 1000);
  const std::vector<double> zero(spec.num_states(), 0.0);
  const PolicyTable p = improve_policy(zero, spec);
  CHECK(p == PolicyTable::uniform(spec, Action::kIdle));
}

TEST_CASE("relative policy iteration examples") {
  SUBCASE("certain delivery and change, free updates") {
    const MdpSpec spec = make_spec(5, 5, 1.0, 1.0, 0);
    const auto r = relative_policy_iteration(spec);
    CHECK(r.gain == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.policy.at({1, 1}) == Action::kUpdate);
    CHECK(enumerate_policies_oracle(make_spec(4, 4, 1.0, 1.0, 0)).gain == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("prohibitive update cost") {
    const MdpSpec spec = make_spec(4, 4, 0.8, 0.3, 4 * 4 * 4);
    const auto r = relative_policy_iteration(spec);
    CHECK(r.gain == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(r.policy == PolicyTable::uniform(spec, Action::kIdle));
    CHECK(enumerate_policies_oracle(spec).gain == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("4x4 instance against enumeration") {
    const MdpSpec spec = make_spec(4, 4, 0.8, 0.3, 2);
    const auto r = relative_policy_iteration(spec);
    const auto e = enumerate_policies_oracle(spec);
    CHECK(e.policies_evaluated == 65536);
    CHECK(std::abs(r.gain - e.gain) <= 1e-9);
    CHECK(std::abs(average_cost_of(r.policy, spec) - r.gain) <= 1e-9);
  }
  SUBCASE("gain is nonincreasing and the result is a fixed point") {
    for (double q : {0.1, 0.3, 0.7})
      for (double p : {0.5, 0.9}) {
        const MdpSpec spec = make_spec(40, 30, p, q, 12);
        const auto r = relative_policy_iteration(spec);
        for (std::size_t i = 1; i < r.gain_history.size(); ++i)
          CHECK(r.gain_history[i] <= r.gain_history[i - 1] + 1e-9);
        CHECK(improve_policy(r.bias, spec) == r.policy);
        CHECK(r.gain >= 1.0);
        CHECK(r.bias[spec.index({1, 1})] == 0.0);
        CHECK(is_monotone_in_aoci(r.policy));
      }
  }
  SUBCASE("iteration cap") {
    RpiOptions o;
    o.max_iterations = 1;
    CHECK_THROWS_AS(relative_policy_iteration(make_spec(10, 10, 0.8, 0.3, 2), o), NonConvergence);
  }
}

TEST_CASE("threshold shortcut agrees with the argmin") {
  for (double q : {0.1, 0.3, 0.5})
    for (double p : {0.5, 0.8, 1.0}) {
      RpiOptions o;
      o.shortcut = ShortcutMode::kVerify;
      const MdpSpec spec = make_spec(30, 30, p, q, 12);
      const auto verified = relative_policy_iteration(spec, o);
      CHECK(verified.shortcut.shortcut_disagreements == 0);
      o.shortcut = ShortcutMode::kOff;
      const auto plain = relative_policy_iteration(spec, o);
      CHECK(std::abs(verified.gain - plain.gain) <= 1e-9);
      const auto trusted = relative_policy_iteration(spec);
      CHECK(std::abs(trusted.gain - plain.gain) <= 1e-9);
    }
}

TEST_CASE("threshold formula") {
  const MdpSpec half = make_spec(100, 100, 0.8, 0.5, 12, 1);
  CHECK(half.return_prob(2) == doctest::Approx(0.5).epsilon(1e-15));
  REQUIRE(threshold_for(2, half).has_value());
  CHECK(*threshold_for(2, half) == 34);

  const MdpSpec free = make_spec(100, 100, 0.8, 0.3, 0);
  REQUIRE(threshold_for(1, free).has_value());
  CHECK(*threshold_for(1, free) == static_cast<int>(std::ceil(1.0 / (1.0 - free.return_prob(1)))));

  CHECK_FALSE(threshold_for(3, make_spec(100, 100, 0.8, 0.0, 12)).has_value());
  CHECK_FALSE(threshold_for(2, make_spec(20, 20, 0.8, 0.5, 12)).has_value());  // 34 > cap
}

TEST_CASE("value iteration agrees with policy iteration") {
  for (double q : {0.1, 0.3})
    for (double p : {0.5, 1.0}) {
      const MdpSpec spec = make_spec(15, 15, p, q, 12);
      const auto pi = relative_policy_iteration(spec);
      const auto vi = relative_value_iteration(spec);
      CHECK(std::abs(pi.gain - vi.gain) <= 1e-8);
    }
  const MdpSpec one = make_spec(1, 1, 0.5, 0.5, 3);
  CHECK(relative_value_iteration(one).gain == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("enumeration on a 2x2 space") {
  const MdpSpec spec = make_spec(2, 2, 0.7, 0.2, 0.5);
  double best = 1e300;
  for (unsigned bits = 0; bits < 16; ++bits) {
    const PolicyTable p = policy_from_bits(spec, bits);
    const double c = long_run_cost_oracle(p, spec);
    CHECK(std::abs(average_cost_of(p, spec) - c) <= 1e-10);
    best = std::min(best, c);
  }
  const auto e = enumerate_policies_oracle(spec);
  CHECK(e.policies_evaluated == 16);
  CHECK(std::abs(e.gain - best) <= 1e-10);

  const MdpSpec tiny = make_spec(1, 1, 0.5, 0.5, 3);
  const auto t = enumerate_policies_oracle(tiny);
  CHECK(t.gain == 1.0);
  CHECK(t.policy.at({1, 1}) == Action::kIdle);
}

TEST_CASE("average cost of baselines") {
  CHECK(average_cost_of(PolicyTable::uniform(make_spec(5, 5, 1, 1, 12), Action::kUpdate), make_spec(5, 5, 1, 1, 12)) ==
        doctest::Approx(13.0).epsilon(1e-12));
  for (unsigned bits : {0x0u, 0x5u, 0xa5a5u, 0xffffu, 0x1234u}) {
    const MdpSpec spec = make_spec(4, 4, 0.6, 0.35, 3);
    const PolicyTable p = policy_from_bits(spec, bits);
    CHECK(std::abs(average_cost_of(p, spec) - long_run_cost_oracle(p, spec)) <= 1e-9);
  }
}

TEST_CASE("monotonicity check") {
  PolicyTable p(4, 2);
  CHECK(is_monotone_in_aoci(p));
  p.set({3, 1}, Action::kUpdate);
  CHECK_FALSE(is_monotone_in_aoci(p));
  p.set({4, 1}, Action::kUpdate);
  CHECK(is_monotone_in_aoci(p));
}

TEST_CASE("CSV round trips") {
  const MdpSpec spec = make_spec(25, 20, 0.8, 0.3, 12);
  const auto r = relative_policy_iteration(spec);
  std::stringstream policy_csv;
  policy_csv << "# provenance line\n";
  write_policy_csv(policy_csv, r.policy);
  CHECK(read_policy_csv(policy_csv) == r.policy);

  std::stringstream solve_csv;
  write_solve_csv(solve_csv, r, spec);
  const auto [gain, iterations] = read_solve_header(solve_csv);
  CHECK(gain == r.gain);
  CHECK(iterations == r.iterations);
  CHECK(std::abs(gain - average_cost_of(r.policy, spec)) <= 1e-9);

  std::stringstream bad("delta,aoci,action\n1,1,2\n");
  CHECK_THROWS_AS(read_policy_csv(bad), InvalidParameter);
  std::stringstream partial("delta,aoci,action\n1,1,0\n2,2,0\n");
  CHECK_THROWS_AS(read_policy_csv(partial), InvalidParameter);
}

}  // TEST_SUITE
