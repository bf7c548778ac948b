#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace dtsync {

// Finite Markov chain with a per-state cost, stored as sparse rows.
struct MarkovChain {
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
  std::vector<double> cost;

  explicit MarkovChain(std::size_t n = 0) : rows(n), cost(n, 0.0) {}
  std::size_t size() const { return rows.size(); }
};

struct LongRunAnalysis {
  double average_cost = 0.0;
  // Closed communicating classes reachable from the start state.
  std::vector<std::vector<std::size_t>> recurrent_classes;
  // Probability of ending in each class when started at `start`.
  std::vector<double> absorption;
  // Long-run occupation frequency of each state (size n).
  std::vector<double> occupancy;
};

// Long-run behaviour of the chain started at `start`: stationary
// distributions of the closed classes weighted by absorption probabilities.
// Handles chains with several recurrent classes.
LongRunAnalysis analyze_long_run(const MarkovChain& chain, std::size_t start);

// Closed communicating classes of the whole chain (every start state).
std::vector<std::vector<std::size_t>> closed_classes(const MarkovChain& chain);

// Stationary distribution of an irreducible sub-chain given by `states`
// (transitions leaving the set are ignored; they must have zero mass).
std::vector<double> stationary_distribution(const MarkovChain& chain,
                                            const std::vector<std::size_t>& states);

}  // namespace dtsync
