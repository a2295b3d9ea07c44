#include "qsync/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qsync/errors.hpp"

namespace qsync {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_rates(double eta, double eta_prime) {
  if (!(eta_prime > 0.0 && eta_prime < eta)) {
    throw ConfigError("rates must satisfy 0 < eta' < eta");
  }
}

}  // namespace

GainConstants compute_a0_b0(const LurieSystem& sys, const PassificationCertificate& cert,
                            double L_phi) {
  if (!(cert.lambda_min > 0.0)) {
    throw FeasibilityError("certificate has lambda_min <= 0");
  }
  const Eigen::MatrixXd AK = sys.A() - cert.K * sys.B() * sys.C();
  const double cb = std::abs(sys.CB());
  GainConstants g;
  g.a0 = ((sys.C() * AK).norm() + cb * sys.C().norm()) / std::sqrt(cert.lambda_min);
  g.b0 = cb * (cert.K + L_phi);
  return g;
}

double comparison_gain(const ContractionInputs& in) {
  return in.Ts * in.a0 * (in.K + in.L_phi) /
         ((1.0 - in.Ts * in.b0) * std::sqrt(in.lambda_min));
}

double lemma1_q(double eta, double eta_prime, double a, double Ts) {
  require_rates(eta, eta_prime);
  const double decay = std::exp(-eta_prime * Ts);
  return std::max(decay + a * (1.0 - decay) / (2.0 * eta_prime),
                  a / (2.0 * (eta - eta_prime)));
}

double theorem_q(const ContractionInputs& in) {
  require_rates(in.eta, in.eta_prime);
  if (!(in.Ts > 0.0)) throw ConfigError("theorem_q: Ts must be positive");
  if (!(in.lambda_min > 0.0)) throw ConfigError("theorem_q: lambda_min must be positive");
  if (!(in.Ts * in.b0 < 1.0)) {
    throw FeasibilityError("Ts * b0 >= 1: sampling too slow for the loop gain");
  }
  return lemma1_q(in.eta, in.eta_prime, comparison_gain(in), in.Ts);
}

double theorem_q_small_ts(const ContractionInputs& in) {
  require_rates(in.eta, in.eta_prime);
  const double g = in.a0 * (in.K + in.L_phi) / std::sqrt(in.lambda_min);
  return std::max(1.0 - in.eta_prime * in.Ts + in.Ts * in.Ts * g / 2.0,
                  in.Ts * g / (2.0 * (in.eta - in.eta_prime)));
}

double lemma1_r(double eta, double eta_prime, double Ts) {
  require_rates(eta, eta_prime);
  if (!(Ts > 0.0)) throw ConfigError("lemma1_r: Ts must be positive");
  return std::max((1.0 - std::exp(-eta_prime * Ts)) / (2.0 * eta_prime),
                  1.0 / (2.0 * (eta - eta_prime)));
}

double coder_m0(const RangeInputs& in) {
  if (!(in.Ts * in.b0 < 1.0)) throw FeasibilityError("coder_m0: Ts * b0 >= 1");
  if (in.rho < in.q) throw FeasibilityError("coder_m0: rho must exceed q");
  if (!(in.rho < 1.0)) throw FeasibilityError("coder_m0: rho must be below 1");
  if (!(in.r > 0.0) || !(in.lambda_min > 0.0)) {
    throw ConfigError("coder_m0: r and lambda_min must be positive");
  }
  return in.W0 * (in.rho - in.q) * (1.0 - in.Ts * in.b0) * std::sqrt(in.lambda_min) /
         (in.r * (in.K + in.L_phi));
}

TsThreshold ts_threshold(const ThresholdInputs& in) {
  require_rates(in.eta, in.eta_prime);
  const double gain = in.K + in.L_phi;
  const double root = std::sqrt(in.lambda_min);
  TsThreshold t;
  t.decay_branch = 2.0 * in.eta_prime * root / (in.a0 * gain);
  t.gap_branch = 2.0 * (in.eta - in.eta_prime) * root / (in.a0 * gain);
  t.gain_branch = 1.0 / (in.CB_norm * gain);
  t.value = std::min({t.decay_branch, t.gap_branch, t.gain_branch});
  return t;
}

double lemma1_bound(double W0, std::span<const double> b, double q, double r, std::size_t k) {
  if (b.size() < k) throw ConfigError("lemma1_bound: sequence shorter than k");
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += b[i] * std::pow(q, static_cast<double>(k - i - 1));
  return std::pow(q, static_cast<double>(k)) * W0 + r * sum;
}

OdeCheckReport lemma1_ode_check(double eta, double eta_prime, double a,
                                std::span<const double> b, double Ts, double W0,
                                std::size_t steps, int substeps, double slack) {
  OdeCheckReport report;
  if (!(eta_prime > 0.0 && eta_prime < eta) || !(Ts > 0.0) || !(a >= 0.0) || substeps < 1 ||
      b.size() < steps) {
    report.message = "invalid arguments";
    return report;
  }
  report.q = lemma1_q(eta, eta_prime, a, Ts);
  report.r = lemma1_r(eta, eta_prime, Ts);
  if (!(report.q < 1.0)) {
    report.message = "precondition q < 1 violated";
    return report;
  }
  report.precondition_ok = true;
  report.worst_excess = -std::numeric_limits<double>::infinity();

  const double h = Ts / substeps;
  double W = W0;
  bool ok = true;
  for (std::size_t k = 0; k < steps; ++k) {
    const double Wk = W;
    const double bk = b[k];
    double running_max = W;
    auto rhs = [&](double w) {
      return -eta * w + 0.5 * a * std::max(running_max, w) + 0.5 * bk;
    };
    for (int s = 0; s < substeps; ++s) {
      const double k1 = rhs(W);
      const double k2 = rhs(W + 0.5 * h * k1);
      const double k3 = rhs(W + 0.5 * h * k2);
      const double k4 = rhs(W + h * k3);
      W += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      running_max = std::max(running_max, W);
    }
    const double bound = lemma1_step(Wk, bk, report.q, report.r);
    const double excess = W - bound;
    report.worst_excess = std::max(report.worst_excess, excess);
    if (excess > slack * std::max(1.0, std::abs(bound))) ok = false;
  }
  report.passed = ok;
  report.message = ok ? "one-step bound holds at every sample" : "one-step bound violated";
  return report;
}

TheoremConstants theorem_constants(const LurieSystem& sys, const PassificationCertificate& cert,
                                   double L_phi, double eta_prime, double eta0, double Ts,
                                   double rho, double W0) {
  TheoremConstants tc;
  tc.K = cert.K;
  tc.L_phi = L_phi;
  tc.lambda_min = cert.lambda_min;
  tc.eta = cert.eta;
  tc.eta_prime = eta_prime;
  tc.eta0 = eta0;
  tc.Ts = Ts;
  tc.rho = rho;
  tc.W0 = W0;
  tc.q = kNaN;
  tc.r = kNaN;
  tc.M0_bound = kNaN;

  const GainConstants g = compute_a0_b0(sys, cert, L_phi);
  tc.a0 = g.a0;
  tc.b0 = g.b0;
  tc.eta_chain_ok = eta_prime > 0.0 && eta_prime < tc.eta && tc.eta < eta0;
  tc.ts_b0_ok = Ts * tc.b0 < 1.0;
  if (!(eta_prime > 0.0 && eta_prime < tc.eta)) return tc;

  tc.r = lemma1_r(tc.eta, eta_prime, Ts);
  tc.Ts_max = ts_threshold({.K = tc.K, .L_phi = L_phi, .eta = tc.eta, .eta_prime = eta_prime,
                            .lambda_min = tc.lambda_min, .a0 = tc.a0,
                            .CB_norm = std::abs(sys.CB())});
  tc.threshold_ok = Ts < tc.Ts_max.value;
  if (!tc.ts_b0_ok) return tc;

  tc.q = theorem_q({.a0 = tc.a0, .K = tc.K, .L_phi = L_phi, .Ts = Ts, .eta = tc.eta,
                    .eta_prime = eta_prime, .b0 = tc.b0, .lambda_min = tc.lambda_min});
  tc.q_rho_ok = tc.q < rho && rho < 1.0;
  if (rho >= tc.q && rho < 1.0) {
    tc.M0_bound = coder_m0({.W0 = W0, .rho = rho, .q = tc.q, .Ts = Ts, .b0 = tc.b0,
                            .lambda_min = tc.lambda_min, .r = tc.r, .K = tc.K, .L_phi = L_phi});
  }
  return tc;
}

DesignRecommendation recommend_design(const LurieSystem& sys,
                                      const PassificationCertificate& cert, double L_phi,
                                      double eta_prime, double W0) {
  require_rates(cert.eta, eta_prime);
  const GainConstants g = compute_a0_b0(sys, cert, L_phi);
  const TsThreshold limit =
      ts_threshold({.K = cert.K, .L_phi = L_phi, .eta = cert.eta, .eta_prime = eta_prime,
                    .lambda_min = cert.lambda_min, .a0 = g.a0, .CB_norm = std::abs(sys.CB())});
  DesignRecommendation rec;
  rec.q = std::numeric_limits<double>::infinity();
  rec.Ts = 0.5 * limit.value;
  for (int i = 0; i < 60; ++i, rec.Ts *= 0.5) {
    if (!(rec.Ts * g.b0 < 1.0)) continue;
    rec.q = theorem_q({.a0 = g.a0, .K = cert.K, .L_phi = L_phi, .Ts = rec.Ts, .eta = cert.eta,
                       .eta_prime = eta_prime, .b0 = g.b0, .lambda_min = cert.lambda_min});
    if (rec.q < 1.0) break;
  }
  if (!(rec.q < 1.0)) throw FeasibilityError("no sampling period gives q < 1");
  rec.rho = 0.5 * (1.0 + rec.q);
  rec.M0 = coder_m0({.W0 = W0, .rho = rec.rho, .q = rec.q, .Ts = rec.Ts, .b0 = g.b0,
                     .lambda_min = cert.lambda_min,
                     .r = lemma1_r(cert.eta, eta_prime, rec.Ts), .K = cert.K,
                     .L_phi = L_phi});
  return rec;
}

double default_w0(const Eigen::MatrixXd& P, const Eigen::VectorXd& e0) {
  return std::sqrt(0.5 * e0.dot(P * e0));
}

}  // namespace qsync
