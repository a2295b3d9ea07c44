#pragma once

#include <cstddef>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "qsync/lurie.hpp"
#include "qsync/passify.hpp"

namespace qsync {

struct GainConstants {
  double a0 = 0.0;  ///< (|C A_K| + |CB| |C|) / sqrt(lambda_min)
  double b0 = 0.0;  ///< |CB| (K + L_phi)
};

/// Euclidean norms throughout. Throws FeasibilityError if lambda_min <= 0.
GainConstants compute_a0_b0(const LurieSystem& sys, const PassificationCertificate& cert,
                            double L_phi);

/// Everything the contraction factor q depends on.
struct ContractionInputs {
  double a0 = 0.0;
  double K = 0.0;
  double L_phi = 0.0;
  double Ts = 0.0;
  double eta = 0.0;
  double eta_prime = 0.0;
  double b0 = 0.0;
  double lambda_min = 0.0;
};

/// Gain a of the comparison inequality:
///   a = Ts a0 (K + L_phi) / ((1 - Ts b0) sqrt(lambda_min)).
double comparison_gain(const ContractionInputs& in);

/// Contraction factor of the sampled comparison system,
///   q = max{ e^{-eta' Ts} + a (1 - e^{-eta' Ts}) / (2 eta'),  a / (2 (eta - eta')) }.
double lemma1_q(double eta, double eta_prime, double a, double Ts);

/// q expressed in the plant constants. Throws FeasibilityError when
/// Ts b0 >= 1, ConfigError unless 0 < eta' < eta.
double theorem_q(const ContractionInputs& in);

/// Small-Ts approximation of theorem_q, exact up to the Ts^2 term of the
/// decay branch (the eta'^2 Ts^2 / 2 contribution is dropped).
double theorem_q_small_ts(const ContractionInputs& in);

/// r = max{ (1 - e^{-eta' Ts}) / (2 eta'),  1 / (2 (eta - eta')) }.
double lemma1_r(double eta, double eta_prime, double Ts);

struct RangeInputs {
  double W0 = 0.0;
  double rho = 0.0;
  double q = 0.0;
  double Ts = 0.0;
  double b0 = 0.0;
  double lambda_min = 0.0;
  double r = 0.0;
  double K = 0.0;
  double L_phi = 0.0;
};

/// Initial coder range that keeps the comparison value on the rho^k W0
/// envelope: M0 = W0 (rho - q)(1 - Ts b0) sqrt(lambda_min) / (r (K + L_phi)).
/// Returns 0 at rho == q. Throws FeasibilityError for rho < q, rho >= 1 or
/// Ts b0 >= 1.
double coder_m0(const RangeInputs& in);

struct ThresholdInputs {
  double K = 0.0;
  double L_phi = 0.0;
  double eta = 0.0;
  double eta_prime = 0.0;
  double lambda_min = 0.0;
  double a0 = 0.0;
  double CB_norm = 0.0;
};

struct TsThreshold {
  double value = 0.0;
  double decay_branch = 0.0;  ///< 2 eta' sqrt(lambda_min) / (a0 (K + L_phi))
  double gap_branch = 0.0;    ///< 2 (eta - eta') sqrt(lambda_min) / (a0 (K + L_phi))
  double gain_branch = 0.0;   ///< 1 / (|CB| (K + L_phi)), i.e. Ts b0 < 1
};

/// First-order sampling-period threshold below which q < 1 and Ts b0 < 1.
TsThreshold ts_threshold(const ThresholdInputs& in);

/// Upper bound q W_k + r b_k for the next sample.
inline double lemma1_step(double W, double b, double q, double r) { return q * W + r * b; }

/// Closed form q^k W0 + r sum_{i<k} b_i q^{k-i-1}. Requires b.size() >= k.
double lemma1_bound(double W0, std::span<const double> b, double q, double r, std::size_t k);

struct OdeCheckReport {
  bool precondition_ok = false;
  bool passed = false;
  double q = 0.0;
  double r = 0.0;
  /// Largest W(t_{k+1}) - (q W(t_k) + r b_k) seen; negative when the bound
  /// holds with room.
  double worst_excess = 0.0;
  std::string message;
};

/// Integrates the worst case of the comparison inequality,
///   dW/dt = -eta W + (a/2) sup_{[t_k, t]} W + b_k / 2,
/// with RK4 at step Ts / substeps and checks the one-step bound at every
/// sample. A precondition failure (q >= 1) is reported, not thrown.
OdeCheckReport lemma1_ode_check(double eta, double eta_prime, double a,
                                std::span<const double> b, double Ts, double W0,
                                std::size_t steps, int substeps = 10000,
                                double slack = 1e-6);

/// All constants of the exponential synchronization bound for one design.
struct TheoremConstants {
  double K = 0.0;
  double L_phi = 0.0;
  double lambda_min = 0.0;
  double a0 = 0.0;
  double b0 = 0.0;
  double eta = 0.0;
  double eta_prime = 0.0;
  double eta0 = 0.0;
  double Ts = 0.0;
  double rho = 0.0;
  double q = 0.0;  ///< NaN when Ts b0 >= 1
  double r = 0.0;
  double W0 = 0.0;
  double M0_bound = 0.0;  ///< NaN unless q <= rho < 1 and Ts b0 < 1
  TsThreshold Ts_max;

  bool ts_b0_ok = false;     ///< Ts b0 < 1
  bool q_rho_ok = false;     ///< q < rho < 1
  bool eta_chain_ok = false; ///< 0 < eta' < eta < eta0
  bool threshold_ok = false; ///< Ts below the first-order threshold

  bool feasible() const { return ts_b0_ok && q_rho_ok && eta_chain_ok; }
};

/// Never throws on infeasibility; the flags carry the verdicts.
TheoremConstants theorem_constants(const LurieSystem& sys, const PassificationCertificate& cert,
                                   double L_phi, double eta_prime, double eta0, double Ts,
                                   double rho, double W0);

struct DesignRecommendation {
  double Ts = 0.0;
  double rho = 0.0;
  double q = 0.0;
  double M0 = 0.0;
};

/// Picks Ts as half the first-order threshold (halved again until q < 1),
/// rho = (1 + q) / 2 and M0 from the range formula.
DesignRecommendation recommend_design(const LurieSystem& sys,
                                      const PassificationCertificate& cert, double L_phi,
                                      double eta_prime, double W0);

/// sqrt(e0^T P e0 / 2).
double default_w0(const Eigen::MatrixXd& P, const Eigen::VectorXd& e0);

}  // namespace qsync
