#pragma once

#include <cstdint>

namespace qsync {

/// Zooming schedule M[k] = (M0 - M_inf) rho^k + M_inf sampled every Ts.
/// M_inf = 0 gives the pure geometric schedule.
struct CoderConfig {
  double M0 = 5.0;
  double rho = 1.0;
  double M_inf = 0.0;
  double Ts = 0.04;

  /// Throws ConfigError unless M0 > 0, 0 < rho <= 1, 0 <= M_inf < M0, Ts > 0.
  void validate() const;
};

/// Shared by coder and decoder; both sides advance it identically.
struct CoderState {
  std::int64_t k = 0;
  double M = 0.0;

  static CoderState initial(const CoderConfig& cfg) { return {0, cfg.M0}; }
  friend bool operator==(const CoderState&, const CoderState&) = default;
};

/// One channel symbol: +1 or -1.
struct Codeword {
  int bit = 1;
  friend bool operator==(const Codeword&, const Codeword&) = default;
};

/// sign with sign(0) = +1.
inline int sign_bit(double y) { return y >= 0.0 ? 1 : -1; }

/// Binary quantizer q(y, M) = M sign(y).
inline double quantize(double y, double M) { return M * sign_bit(y); }

/// M_{k+1} = rho (M_k - M_inf) + M_inf, floored at the smallest positive
/// normal double so the range never reaches zero.
CoderState advance(const CoderState& state, const CoderConfig& cfg);

struct CoderOutput {
  Codeword word;
  double value = 0.0;
  CoderState next;
  /// |eps| > 2 M_k: the quantization error bound |eps - value| <= M_k is lost.
  bool overflow = false;
};

CoderOutput coder_step(const CoderState& state, const CoderConfig& cfg, double eps);

struct DecoderOutput {
  double eps_bar = 0.0;
  CoderState next;
};

DecoderOutput decoder_step(const CoderState& state, const CoderConfig& cfg, Codeword word);

struct BitBudget {
  std::int64_t count = 0;  ///< symbols sent over [0, duration], k = 0 included
  double rate = 0.0;       ///< bit/s
};

BitBudget bit_budget(const CoderConfig& cfg, double duration);

}  // namespace qsync
