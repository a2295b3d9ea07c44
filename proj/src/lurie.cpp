#include "qsync/lurie.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qsync/errors.hpp"

namespace qsync {

namespace {

// |a| - |a - eps|, exact (= +-eps) whenever a and a - eps share a sign.
double abs_increment(double a, double eps) {
  const double b = a - eps;
  if (a >= 0.0 && b >= 0.0) return eps;
  if (a < 0.0 && b < 0.0) return -eps;
  return std::abs(a) - std::abs(b);
}

constexpr double kNegligible = 1e-12;

}  // namespace

double phi_eval(const PiecewiseLinear& params, double y) {
  return params.m0 * y + params.m1 * (std::abs(y + 1.0) - std::abs(y - 1.0));
}

double phi_eval(const Nonlinearity& phi, double y) {
  if (const auto* pwl = std::get_if<PiecewiseLinear>(&phi)) return phi_eval(*pwl, y);
  return std::get<GenericNonlinearity>(phi).fn(y);
}

double phi_increment(const PiecewiseLinear& params, double y, double eps) {
  return params.m0 * eps +
         params.m1 * (abs_increment(y + 1.0, eps) - abs_increment(y - 1.0, eps));
}

double phi_increment(const Nonlinearity& phi, double y, double eps) {
  if (const auto* pwl = std::get_if<PiecewiseLinear>(&phi)) {
    return phi_increment(*pwl, y, eps);
  }
  const auto& fn = std::get<GenericNonlinearity>(phi).fn;
  return fn(y) - fn(y - eps);
}

double phi_lipschitz(const PiecewiseLinear& params) {
  // Inner segment slope m0 + 2 m1 dominates the outer slope m0 when m1 >= 0.
  return std::max(std::abs(params.m0 + 2.0 * params.m1), std::abs(params.m0));
}

double phi_lipschitz(const Nonlinearity& phi) {
  if (const auto* pwl = std::get_if<PiecewiseLinear>(&phi)) return phi_lipschitz(*pwl);
  return std::get<GenericNonlinearity>(phi).lipschitz;
}

LurieSystem::LurieSystem(Eigen::MatrixXd A, Eigen::VectorXd B, Eigen::RowVectorXd C,
                         Nonlinearity phi)
    : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), phi_(std::move(phi)) {
  const auto n = A_.rows();
  if (n < 1 || A_.cols() != n) {
    throw ConfigError("A must be a non-empty square matrix");
  }
  if (B_.size() != n) throw ConfigError("B must have as many rows as A");
  if (C_.size() != n) throw ConfigError("C must have as many columns as A");
  if (!A_.allFinite() || !B_.allFinite() || !C_.allFinite()) {
    throw ConfigError("system matrices must be finite");
  }
  if (const auto* g = std::get_if<GenericNonlinearity>(&phi_); g && !g->fn) {
    throw ConfigError("generic nonlinearity has no function attached");
  }
}

LurieSystem chua_build(double p, double q, double m0, double m1) {
  if (!(p > 0.0) || !(q > 0.0)) {
    throw ConfigError("Chua parameters must satisfy p > 0 and q > 0");
  }
  Eigen::MatrixXd A(3, 3);
  // clang-format off
  A << -p,  p,   0,
        1, -1,   1,
        0, -q,   0;
  // clang-format on
  Eigen::VectorXd B(3);
  B << p, 0, 0;
  Eigen::RowVectorXd C(3);
  C << 1, 0, 0;
  return LurieSystem(std::move(A), std::move(B), std::move(C), PiecewiseLinear{m0, m1});
}

int Polynomial::degree() const {
  double scale = 0.0;
  for (double c : coeffs) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return -1;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (std::abs(coeffs[i]) > kNegligible * scale) {
      return static_cast<int>(coeffs.size() - 1 - i);
    }
  }
  return -1;
}

Polynomial Polynomial::trimmed() const {
  const int d = degree();
  if (d < 0) return Polynomial{};
  return Polynomial{std::vector<double>(coeffs.end() - (d + 1), coeffs.end())};
}

std::complex<double> Polynomial::operator()(std::complex<double> x) const {
  std::complex<double> acc = 0.0;
  for (double c : coeffs) acc = acc * x + c;
  return acc;
}

std::vector<std::complex<double>> polynomial_roots(const Polynomial& poly) {
  const Polynomial p = poly.trimmed();
  const int d = static_cast<int>(p.coeffs.size()) - 1;
  if (d < 1) return {};
  const double lead = p.coeffs.front();
  if (d == 1) return {std::complex<double>(-p.coeffs[1] / lead, 0.0)};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < d; ++j) companion(0, j) = -p.coeffs[j + 1] / lead;
  for (int i = 1; i < d; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<std::complex<double>> roots(solver.eigenvalues().data(),
                                          solver.eigenvalues().data() + d);

  // Newton polish against the original coefficients.
  for (auto& r : roots) {
    for (int it = 0; it < 4; ++it) {
      std::complex<double> f = 0.0, df = 0.0;
      for (double c : p.coeffs) {
        df = df * r + f;
        f = f * r + c;
      }
      if (std::abs(df) == 0.0) break;
      const auto step = f / df;
      if (!std::isfinite(step.real()) || !std::isfinite(step.imag())) break;
      r -= step;
      if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(r))) break;
    }
  }
  std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return roots;
}

Polynomial characteristic_polynomial(const Eigen::MatrixXd& A) {
  return transfer_function(A, Eigen::VectorXd::Zero(A.rows()),
                           Eigen::RowVectorXd::Zero(A.cols()))
      .den;
}

RationalTransfer transfer_function(const Eigen::MatrixXd& A, const Eigen::VectorXd& B,
                                   const Eigen::RowVectorXd& C) {
  const auto n = A.rows();
  if (n < 1 || A.cols() != n || B.size() != n || C.size() != n) {
    throw ConfigError("transfer_function: inconsistent dimensions");
  }
  // Faddeev-LeVerrier: M_k = A M_{k-1} + c_{n-k+1} I, c_{n-k} = -tr(A M_k)/k,
  // adj(lambda I - A) = sum_k M_k lambda^{n-k}.
  RationalTransfer tf;
  tf.den.coeffs.assign(n + 1, 0.0);
  tf.num.coeffs.assign(n, 0.0);
  tf.den.coeffs[0] = 1.0;

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    M = A * M + tf.den.coeffs[k - 1] * I;
    tf.num.coeffs[k - 1] = C * M * B;
    tf.den.coeffs[k] = -(A * M).trace() / static_cast<double>(k);
  }
  return tf;
}

RationalTransfer transfer_function(const LurieSystem& sys) {
  return transfer_function(sys.A(), sys.B(), sys.C());
}

HmpReport hmp_check(const RationalTransfer& tf) {
  HmpReport report;
  const int n = static_cast<int>(tf.den.coeffs.size()) - 1;
  report.num_degree = tf.num.degree();
  if (report.num_degree < 0) {
    report.diagnostic = "numerator is identically zero";
    return report;
  }
  const Polynomial num = tf.num.trimmed();
  report.numerator_roots = polynomial_roots(num);
  if (!report.numerator_roots.empty()) {
    report.eta0 = std::numeric_limits<double>::infinity();
    for (const auto& r : report.numerator_roots) {
      report.eta0 = std::min(report.eta0, -r.real());
    }
  } else {
    // Constant numerator: no finite roots, the stability degree is unbounded.
    report.eta0 = std::numeric_limits<double>::infinity();
  }

  if (report.num_degree != n - 1) {
    report.diagnostic = "numerator degree " + std::to_string(report.num_degree) +
                        " differs from n-1 = " + std::to_string(n - 1);
    return report;
  }
  for (double c : num.coeffs) {
    if (!(c > 0.0)) {
      report.diagnostic = "numerator has a non-positive coefficient";
      return report;
    }
  }
  if (!(report.eta0 > 0.0)) {
    report.diagnostic = "numerator is not Hurwitz";
    return report;
  }
  report.is_hmp = true;
  return report;
}

}  // namespace qsync
