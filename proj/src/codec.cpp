#include "qsync/codec.hpp"

#include <cmath>
#include <limits>

#include "qsync/errors.hpp"

namespace qsync {

void CoderConfig::validate() const {
  if (!(M0 > 0.0) || !std::isfinite(M0)) throw ConfigError("coder: M0 must be positive");
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("coder: rho must lie in (0, 1]");
  if (!(M_inf >= 0.0 && M_inf < M0)) throw ConfigError("coder: M_inf must lie in [0, M0)");
  if (!(Ts > 0.0) || !std::isfinite(Ts)) throw ConfigError("coder: Ts must be positive");
}

CoderState advance(const CoderState& state, const CoderConfig& cfg) {
  const double next = cfg.rho * (state.M - cfg.M_inf) + cfg.M_inf;
  return {state.k + 1, std::max(next, std::numeric_limits<double>::min())};
}

CoderOutput coder_step(const CoderState& state, const CoderConfig& cfg, double eps) {
  CoderOutput out;
  out.word = Codeword{sign_bit(eps)};
  out.value = state.M * out.word.bit;
  out.overflow = std::abs(eps) > 2.0 * state.M;
  out.next = advance(state, cfg);
  return out;
}

DecoderOutput decoder_step(const CoderState& state, const CoderConfig& cfg, Codeword word) {
  return {state.M * word.bit, advance(state, cfg)};
}

BitBudget bit_budget(const CoderConfig& cfg, double duration) {
  if (!(duration >= 0.0)) throw ConfigError("bit_budget: duration must be non-negative");
  if (!(cfg.Ts > 0.0)) throw ConfigError("bit_budget: Ts must be positive");
  const double ratio = duration / cfg.Ts;
  // Absorb representation error so that e.g. 1000 / 0.04 counts 25000 intervals.
  const double nearest = std::round(ratio);
  const double whole = std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio)
                           ? nearest
                           : std::floor(ratio);
  return {static_cast<std::int64_t>(whole) + 1, 1.0 / cfg.Ts};
}

}  // namespace qsync
