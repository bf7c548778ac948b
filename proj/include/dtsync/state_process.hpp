#pragma once

#include <cstdint>

#include "dtsync/rng.hpp"

namespace dtsync {

// Probability that a symmetric two-state chain with per-slot flip
// probability q is in the same state after `slots` steps.
double return_probability(double q, int slots);
double change_probability(double q, int slots);
// P(SNR > threshold) for an exponentially distributed (Rayleigh power) SNR.
double outage_success_probability(double snr_threshold, double mean_snr);

// Binary physical-twin content process. Each replication owns its chain.
class ContentChain {
 public:
  explicit ContentChain(double flip_prob, std::uint8_t initial_state = 0);

  double flip_prob() const { return flip_prob_; }
  std::uint8_t state() const { return state_; }
  double return_probability(int slots) const;

  // Advances one slot and returns the new state.
  std::uint8_t step(Rng& rng);

 private:
  double flip_prob_;
  std::uint8_t state_;
};

std::uint8_t step_content(ContentChain& chain, Rng& rng);

struct DeliveryModel {
  enum class Mode { kFixed, kRayleighOutage };

  Mode mode = Mode::kFixed;
  double p_tx = 1.0;
  double snr_threshold = 0.0;  // outage mode only
  double mean_snr = 1.0;       // outage mode only

  static DeliveryModel fixed(double p_tx);
  static DeliveryModel rayleigh_outage(double snr_threshold, double mean_snr);
  void validate() const;
};

bool draw_delivery(const DeliveryModel& model, Rng& rng);

}  // namespace dtsync
