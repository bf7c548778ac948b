#include "dtsync/state_process.hpp"

#include <cmath>
#include <sstream>

#include "dtsync/errors.hpp"

namespace dtsync {
namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    std::ostringstream msg;
    msg << name << " must lie in [0, 1] (got " << p << ")";
    throw InvalidParameter(msg.str());
  }
}

}  // namespace

double return_probability(double q, int slots) {
  check_probability(q, "flip probability");
  if (slots < 0) throw InvalidParameter("slot count must be non-negative");
  if (slots == 0) return 1.0;
  return 0.5 * (1.0 + std::pow(1.0 - 2.0 * q, slots));
}

double change_probability(double q, int slots) {
  return 1.0 - return_probability(q, slots);
}

double outage_success_probability(double snr_threshold, double mean_snr) {
  if (!(snr_threshold >= 0.0)) throw InvalidParameter("snr_threshold must be >= 0");
  if (!(mean_snr > 0.0)) throw InvalidParameter("mean_snr must be > 0");
  return std::exp(-snr_threshold / mean_snr);
}

ContentChain::ContentChain(double flip_prob, std::uint8_t initial_state)
    : flip_prob_(flip_prob), state_(initial_state ? 1 : 0) {
  check_probability(flip_prob, "flip probability");
}

double ContentChain::return_probability(int slots) const {
  return dtsync::return_probability(flip_prob_, slots);
}

std::uint8_t ContentChain::step(Rng& rng) {
  std::bernoulli_distribution flip(flip_prob_);
  if (flip(rng)) state_ ^= 1;
  return state_;
}

std::uint8_t step_content(ContentChain& chain, Rng& rng) { return chain.step(rng); }

DeliveryModel DeliveryModel::fixed(double p_tx) {
  DeliveryModel m;
  m.mode = Mode::kFixed;
  m.p_tx = p_tx;
  m.validate();
  return m;
}

DeliveryModel DeliveryModel::rayleigh_outage(double snr_threshold, double mean_snr) {
  DeliveryModel m;
  m.mode = Mode::kRayleighOutage;
  m.snr_threshold = snr_threshold;
  m.mean_snr = mean_snr;
  m.p_tx = outage_success_probability(snr_threshold, mean_snr);
  return m;
}

void DeliveryModel::validate() const {
  check_probability(p_tx, "p_tx");
  if (mode == Mode::kRayleighOutage) {
    const double expected = outage_success_probability(snr_threshold, mean_snr);
    if (std::abs(expected - p_tx) > 1e-12)
      throw InvalidParameter("outage-mode p_tx must equal exp(-snr_threshold/mean_snr)");
  }
}

bool draw_delivery(const DeliveryModel& model, Rng& rng) {
  std::bernoulli_distribution success(model.p_tx);
  return success(rng);
}

}  // namespace dtsync
