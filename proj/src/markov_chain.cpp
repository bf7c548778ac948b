#include "dtsync/markov_chain.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <limits>

#include "dtsync/errors.hpp"

namespace dtsync {
namespace {

constexpr std::size_t kDenseLimit = 300;
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

// Iterative Tarjan over the states flagged in `active`.
std::vector<std::vector<std::size_t>> strongly_connected(const MarkovChain& chain,
                                                         const std::vector<char>& active) {
  const std::size_t n = chain.size();
  std::vector<std::size_t> index(n, kNone), low(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> components;
  std::size_t counter = 0;
  struct Frame {
    std::size_t v;
    std::size_t edge;
  };
  std::vector<Frame> call;
  for (std::size_t root = 0; root < n; ++root) {
    if (!active[root] || index[root] != kNone) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      Frame& f = call.back();
      const auto& row = chain.rows[f.v];
      if (f.edge < row.size()) {
        const auto [w, p] = row[f.edge++];
        if (p <= 0.0 || !active[w]) continue;
        if (index[w] == kNone) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const std::size_t v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == index[v]) {
        std::vector<std::size_t> comp;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        components.push_back(std::move(comp));
      }
    }
  }
  return components;
}

std::vector<std::vector<std::size_t>> closed_among(const MarkovChain& chain,
                                                   const std::vector<char>& active) {
  const auto comps = strongly_connected(chain, active);
  std::vector<std::size_t> comp_of(chain.size(), kNone);
  for (std::size_t c = 0; c < comps.size(); ++c)
    for (std::size_t s : comps[c]) comp_of[s] = c;
  std::vector<std::vector<std::size_t>> closed;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    bool leaves = false;
    for (std::size_t s : comps[c]) {
      for (const auto& [t, p] : chain.rows[s]) {
        if (p > 0.0 && comp_of[t] != c) {
          leaves = true;
          break;
        }
      }
      if (leaves) break;
    }
    if (!leaves) closed.push_back(comps[c]);
  }
  std::sort(closed.begin(), closed.end());
  return closed;
}

// Solves A x = b, dense or sparse depending on size. A is given as triplets.
Eigen::VectorXd solve_system(std::size_t n, const std::vector<Eigen::Triplet<double>>& triplets,
                             const Eigen::VectorXd& rhs) {
  if (n <= kDenseLimit) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                              static_cast<Eigen::Index>(n));
    for (const auto& t : triplets) A(t.row(), t.col()) += t.value();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) throw SolverFailure("singular system in chain analysis");
    return lu.solve(rhs);
  }
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  A.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw SolverFailure("sparse factorization failed in chain analysis");
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw SolverFailure("sparse solve failed in chain analysis");
  return x;
}

}  // namespace

std::vector<double> stationary_distribution(const MarkovChain& chain,
                                            const std::vector<std::size_t>& states) {
  const std::size_t m = states.size();
  if (m == 0) return {};
  std::vector<std::size_t> local(chain.size(), kNone);
  for (std::size_t i = 0; i < m; ++i) local[states[i]] = i;
  // pi (P - I) = 0 written as (P^T - I) pi = 0, last equation replaced by
  // sum(pi) = 1.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(4 * m);
  const auto last = static_cast<int>(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto& [t, p] : chain.rows[states[i]]) {
      const std::size_t j = local[t];
      if (j == kNone || p == 0.0 || static_cast<int>(j) == last) continue;
      trip.emplace_back(static_cast<int>(j), static_cast<int>(i), p);
    }
    if (static_cast<int>(i) != last) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), -1.0);
    trip.emplace_back(last, static_cast<int>(i), 1.0);
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  rhs(last) = 1.0;
  const Eigen::VectorXd pi = solve_system(m, trip, rhs);
  return {pi.data(), pi.data() + m};
}

std::vector<std::vector<std::size_t>> closed_classes(const MarkovChain& chain) {
  return closed_among(chain, std::vector<char>(chain.size(), 1));
}

LongRunAnalysis analyze_long_run(const MarkovChain& chain, std::size_t start) {
  const std::size_t n = chain.size();
  if (start >= n) throw InvalidParameter("start state out of range");

  std::vector<char> reach(n, 0);
  std::vector<std::size_t> frontier{start};
  reach[start] = 1;
  while (!frontier.empty()) {
    const std::size_t v = frontier.back();
    frontier.pop_back();
    for (const auto& [t, p] : chain.rows[v]) {
      if (p > 0.0 && !reach[t]) {
        reach[t] = 1;
        frontier.push_back(t);
      }
    }
  }

  LongRunAnalysis out;
  out.recurrent_classes = closed_among(chain, reach);
  const std::size_t classes = out.recurrent_classes.size();
  out.absorption.assign(classes, 0.0);
  out.occupancy.assign(n, 0.0);

  std::vector<std::size_t> class_of(n, kNone);
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t s : out.recurrent_classes[c]) class_of[s] = c;

  if (class_of[start] != kNone) {
    out.absorption[class_of[start]] = 1.0;
  } else if (classes == 1) {
    out.absorption[0] = 1.0;
  } else {
    // Absorption probabilities: (I - P_TT) x_c = P_{T,c} 1.
    std::vector<std::size_t> transient;
    std::vector<std::size_t> local(n, kNone);
    for (std::size_t s = 0; s < n; ++s) {
      if (reach[s] && class_of[s] == kNone) {
        local[s] = transient.size();
        transient.push_back(s);
      }
    }
    const std::size_t m = transient.size();
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                                static_cast<Eigen::Index>(classes));
    for (std::size_t i = 0; i < m; ++i) {
      trip.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
      for (const auto& [t, p] : chain.rows[transient[i]]) {
        if (p == 0.0) continue;
        if (local[t] != kNone) {
          trip.emplace_back(static_cast<int>(i), static_cast<int>(local[t]), -p);
        } else if (class_of[t] != kNone) {
          rhs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(class_of[t])) += p;
        }
      }
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const Eigen::VectorXd x = solve_system(m, trip, rhs.col(static_cast<Eigen::Index>(c)));
      out.absorption[c] = x(static_cast<Eigen::Index>(local[start]));
    }
  }

  for (std::size_t c = 0; c < classes; ++c) {
    if (out.absorption[c] == 0.0) continue;
    const auto& states = out.recurrent_classes[c];
    const std::vector<double> pi = stationary_distribution(chain, states);
    for (std::size_t i = 0; i < states.size(); ++i) {
      out.occupancy[states[i]] += out.absorption[c] * pi[i];
      out.average_cost += out.absorption[c] * pi[i] * chain.cost[states[i]];
    }
  }
  return out;
}

}  // namespace dtsync
