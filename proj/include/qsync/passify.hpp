#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "qsync/lurie.hpp"

namespace qsync {

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

/// Cyclic Jacobi rotations; stops once the off-diagonal Frobenius norm falls
/// below 1e-12 times the norm of the input. Only the symmetric part of S is
/// used.
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& S);

double lambda_min_of(const Eigen::MatrixXd& P);
double lambda_max_of(const Eigen::MatrixXd& P);

/// Witness of P A_K + A_K^T P <= -2 eta P, P B = C^T, A_K = A - B K C.
struct PassificationCertificate {
  Eigen::MatrixXd P;
  double K = 0.0;
  double eta = 0.0;
  double lambda_min = 0.0;
  /// Largest eigenvalue of P A_K + A_K^T P + 2 eta P.
  double residual_lmi = 0.0;
  /// Max-norm of P B - C^T.
  double residual_pb = 0.0;
};

struct VerificationReport {
  bool symmetric = false;
  bool positive_definite = false;
  double lambda_min = 0.0;
  double residual_lmi = 0.0;
  double residual_pb = 0.0;
  bool passed = false;
};

inline constexpr double kDefaultVerifyTolerance = 1e-8;

/// Checks P = P^T (exactly), P > 0, residual_lmi <= tol and residual_pb <= tol.
/// A non-symmetric P fails without any eigenanalysis.
VerificationReport verify_certificate(const LurieSystem& sys, const Eigen::MatrixXd& P,
                                      double K, double eta,
                                      double tol = kDefaultVerifyTolerance);
VerificationReport verify_certificate(const LurieSystem& sys,
                                      const PassificationCertificate& cert,
                                      double tol = kDefaultVerifyTolerance);

struct CertificateSearchOptions {
  int restarts = 32;
  std::uint64_t seed = 20080514;
  /// The search declares feasibility once the objective is at most this.
  double accept_objective = -1e-6;
  int max_evaluations = 4000;
  double verify_tolerance = kDefaultVerifyTolerance;
};

struct CertificateSearch {
  std::optional<PassificationCertificate> certificate;
  /// max(lambda_max(P A_K + A_K^T P + 2 eta P), -lambda_min(P)) at the best
  /// point over all restarts.
  double best_objective = 0.0;
  int best_restart = -1;
  /// Set when no certificate was found.
  std::string advice;
};

/// Searches symmetric P with P B = C^T imposed exactly; the remaining
/// n(n-1)/2 free parameters are tuned by multi-start Nelder-Mead.
/// Throws StructuralInfeasibility when the plant is not HMP.
CertificateSearch find_certificate(const LurieSystem& sys, double K, double eta,
                                   const CertificateSearchOptions& opts = {});

struct GainSearch {
  double K = 0.0;
  CertificateSearch search;
};

/// Doubles K from k_start until a certificate is found or K exceeds k_max.
GainSearch find_gain_by_doubling(const LurieSystem& sys, double eta,
                                 const CertificateSearchOptions& opts = {},
                                 double k_start = 1.0, double k_max = 1e6);

}  // namespace qsync
