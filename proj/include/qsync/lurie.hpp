#pragma once

#include <complex>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace qsync {

/// phi(y) = m0*y + m1*(|y+1| - |y-1|), the Chua characteristic.
struct PiecewiseLinear {
  double m0 = 0.0;
  double m1 = 0.0;
};

/// Arbitrary scalar nonlinearity. The caller supplies its Lipschitz constant.
struct GenericNonlinearity {
  std::string name;
  std::function<double(double)> fn;
  double lipschitz = 0.0;
};

using Nonlinearity = std::variant<PiecewiseLinear, GenericNonlinearity>;

double phi_eval(const PiecewiseLinear& params, double y);
double phi_eval(const Nonlinearity& phi, double y);

/// phi(y) - phi(y - eps). For the piecewise-linear family this is evaluated
/// without cancellation, so it stays accurate when |eps| << |y|.
double phi_increment(const PiecewiseLinear& params, double y, double eps);
double phi_increment(const Nonlinearity& phi, double y, double eps);

/// Exact Lipschitz constant m0 + 2*m1 (slope of the inner segment).
double phi_lipschitz(const PiecewiseLinear& params);
double phi_lipschitz(const Nonlinearity& phi);

/// Single-input single-output Lurie system
///   xdot = A x + B phi(y),  y = C x.
class LurieSystem {
 public:
  LurieSystem(Eigen::MatrixXd A, Eigen::VectorXd B, Eigen::RowVectorXd C,
              Nonlinearity phi);

  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& B() const { return B_; }
  const Eigen::RowVectorXd& C() const { return C_; }
  const Nonlinearity& phi() const { return phi_; }
  int n() const { return static_cast<int>(A_.rows()); }

  double CB() const { return C_.dot(B_); }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd B_;
  Eigen::RowVectorXd C_;
  Nonlinearity phi_;
};

/// Chua circuit in Lurie form. Requires p > 0 and q > 0.
LurieSystem chua_build(double p, double q, double m0, double m1);

/// Real polynomial, coefficients ordered from the highest power down.
struct Polynomial {
  std::vector<double> coeffs;

  /// Degree after dropping leading coefficients that are negligible
  /// relative to the largest one; -1 for the zero polynomial.
  int degree() const;
  std::complex<double> operator()(std::complex<double> x) const;
  /// Copy with negligible leading coefficients removed.
  Polynomial trimmed() const;
};

/// Complex roots of a polynomial of degree >= 1 (companion-matrix
/// eigenvalues polished by Newton steps).
std::vector<std::complex<double>> polynomial_roots(const Polynomial& poly);

/// W(lambda) = num(lambda) / den(lambda); den is monic of degree n.
struct RationalTransfer {
  Polynomial num;
  Polynomial den;

  std::complex<double> operator()(std::complex<double> lambda) const {
    return num(lambda) / den(lambda);
  }
};

/// Characteristic polynomial det(lambda I - A) by Faddeev-LeVerrier.
Polynomial characteristic_polynomial(const Eigen::MatrixXd& A);

RationalTransfer transfer_function(const LurieSystem& sys);
RationalTransfer transfer_function(const Eigen::MatrixXd& A,
                                   const Eigen::VectorXd& B,
                                   const Eigen::RowVectorXd& C);

struct HmpReport {
  bool is_hmp = false;
  /// Minimum distance from the numerator roots to the imaginary axis,
  /// min(-Re root). Negative when some root lies in the right half-plane.
  double eta0 = 0.0;
  int num_degree = -1;
  std::vector<std::complex<double>> numerator_roots;
  std::string diagnostic;
};

/// Hyper-minimum-phase test: numerator of degree n-1, all coefficients
/// strictly positive, all roots in the open left half-plane.
HmpReport hmp_check(const RationalTransfer& tf);

}  // namespace qsync
