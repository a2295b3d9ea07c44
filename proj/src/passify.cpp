#include "qsync/passify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "qsync/errors.hpp"

namespace qsync {

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols()) throw ConfigError("jacobi_eigen: matrix must be square");
  const Eigen::Index n = S.rows();
  Eigen::MatrixXd a = 0.5 * (S + S.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double threshold = 1e-12 * a.norm();

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < 100 && off_norm() > threshold; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        // Symmetric Schur 2x2 rotation.
        const double tau = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });
  SymmetricEigen out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

double lambda_min_of(const Eigen::MatrixXd& P) { return jacobi_eigen(P).values(0); }

double lambda_max_of(const Eigen::MatrixXd& P) {
  const auto values = jacobi_eigen(P).values;
  return values(values.size() - 1);
}

namespace {

Eigen::MatrixXd closed_loop(const LurieSystem& sys, double K) {
  return sys.A() - K * sys.B() * sys.C();
}

Eigen::MatrixXd lmi_matrix(const Eigen::MatrixXd& P, const Eigen::MatrixXd& AK, double eta) {
  return P * AK + AK.transpose() * P + 2.0 * eta * P;
}

// P = particular + sum_i z_i basis[i], every P satisfying P B = C^T.
struct AffineFamily {
  Eigen::MatrixXd particular;
  std::vector<Eigen::MatrixXd> basis;

  Eigen::MatrixXd at(const Eigen::VectorXd& z) const {
    Eigen::MatrixXd P = particular;
    for (std::size_t i = 0; i < basis.size(); ++i) P += z(static_cast<Eigen::Index>(i)) * basis[i];
    return P;
  }
};

AffineFamily solve_pb_constraint(const LurieSystem& sys) {
  const int n = sys.n();
  std::vector<std::pair<int, int>> vars;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) vars.emplace_back(i, j);
  const auto m = static_cast<Eigen::Index>(vars.size());

  // Row r of G: (P B)_r as a linear function of the upper-triangular entries.
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index v = 0; v < m; ++v) {
    const auto [i, j] = vars[static_cast<std::size_t>(v)];
    G(i, v) += sys.B()(j);
    if (i != j) G(j, v) += sys.B()(i);
  }
  const Eigen::VectorXd rhs = sys.C().transpose();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeFullU | Eigen::ComputeFullV);
  svd.setThreshold(1e-12);
  const Eigen::VectorXd particular = svd.solve(rhs);
  if ((G * particular - rhs).lpNorm<Eigen::Infinity>() > 1e-10 * std::max(1.0, rhs.norm())) {
    throw StructuralInfeasibility("P B = C^T has no symmetric solution");
  }
  const auto rank = svd.rank();

  auto unpack = [&](const Eigen::VectorXd& vec) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index v = 0; v < m; ++v) {
      const auto [i, j] = vars[static_cast<std::size_t>(v)];
      P(i, j) = vec(v);
      P(j, i) = vec(v);
    }
    return P;
  };

  AffineFamily family;
  family.particular = unpack(particular);
  for (Eigen::Index k = rank; k < m; ++k) family.basis.push_back(unpack(svd.matrixV().col(k)));
  return family;
}

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
};

template <class F>
MinimizeResult nelder_mead(const F& f, Eigen::VectorXd x0, double step, int max_evals,
                           double stop_below) {
  const Eigen::Index d = x0.size();
  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> values;
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    return f(x);
  };

  auto rebuild = [&](const Eigen::VectorXd& center, double h) {
    simplex.assign(1, center);
    values.assign(1, eval(center));
    for (Eigen::Index i = 0; i < d; ++i) {
      Eigen::VectorXd x = center;
      x(i) += h;
      simplex.push_back(x);
      values.push_back(eval(x));
    }
  };
  rebuild(x0, step);

  std::vector<std::size_t> order(simplex.size());
  for (int round = 0; round < 3; ++round) {
    while (evals < max_evals) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
      const std::size_t best = order.front(), worst = order.back(),
                        second = order[order.size() - 2];
      const double spread = values[worst] - values[best];
      double size = 0.0;
      for (const auto& x : simplex) size = std::max(size, (x - simplex[best]).lpNorm<Eigen::Infinity>());
      if (spread <= 1e-14 * (1.0 + std::abs(values[best])) && size <= 1e-10 * (1.0 + simplex[best].norm())) break;

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
      for (std::size_t i = 0; i < simplex.size(); ++i)
        if (i != worst) centroid += simplex[i];
      centroid /= static_cast<double>(d);

      const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
      const double fr = eval(reflected);
      if (fr < values[best]) {
        const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
        const double fe = eval(expanded);
        if (fe < fr) {
          simplex[worst] = expanded;
          values[worst] = fe;
        } else {
          simplex[worst] = reflected;
          values[worst] = fr;
        }
      } else if (fr < values[second]) {
        simplex[worst] = reflected;
        values[worst] = fr;
      } else {
        const bool outside = fr < values[worst];
        const Eigen::VectorXd contracted =
            outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                    : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
        const double fc = eval(contracted);
        if (fc < std::min(fr, values[worst])) {
          simplex[worst] = contracted;
          values[worst] = fc;
        } else {
          for (std::size_t i = 0; i < simplex.size(); ++i) {
            if (i == best) continue;
            simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
            values[i] = eval(simplex[i]);
          }
        }
      }
    }
    // Restart the simplex around the incumbent; plain Nelder-Mead stalls on
    // the kinks of a max-of-eigenvalues objective.
    const auto best_it = std::min_element(values.begin(), values.end());
    const Eigen::VectorXd incumbent = simplex[static_cast<std::size_t>(best_it - values.begin())];
    if (*best_it <= stop_below && round > 0) break;
    if (evals >= max_evals) break;
    rebuild(incumbent, std::max(1e-3 * step, 0.05 * incumbent.norm()));
  }
  const auto best_it = std::min_element(values.begin(), values.end());
  return {simplex[static_cast<std::size_t>(best_it - values.begin())], *best_it};
}

}  // namespace

VerificationReport verify_certificate(const LurieSystem& sys, const Eigen::MatrixXd& P,
                                      double K, double eta, double tol) {
  if (P.rows() != sys.n() || P.cols() != sys.n()) {
    throw ConfigError("verify_certificate: P has the wrong dimensions");
  }
  if (!(tol > 0.0)) throw ConfigError("verify_certificate: tolerance must be positive");
  VerificationReport report;
  report.symmetric = (P == P.transpose());
  if (!report.symmetric) return report;

  report.lambda_min = lambda_min_of(P);
  report.positive_definite = report.lambda_min > 0.0;
  report.residual_lmi = lambda_max_of(lmi_matrix(P, closed_loop(sys, K), eta));
  report.residual_pb = (P * sys.B() - sys.C().transpose()).lpNorm<Eigen::Infinity>();
  report.passed = report.positive_definite && eta > 0.0 && report.residual_lmi <= tol &&
                  report.residual_pb <= tol;
  return report;
}

VerificationReport verify_certificate(const LurieSystem& sys,
                                      const PassificationCertificate& cert, double tol) {
  return verify_certificate(sys, cert.P, cert.K, cert.eta, tol);
}

CertificateSearch find_certificate(const LurieSystem& sys, double K, double eta,
                                   const CertificateSearchOptions& opts) {
  if (!(eta > 0.0)) throw ConfigError("find_certificate: eta must be positive");
  if (!std::isfinite(K)) throw ConfigError("find_certificate: K must be finite");
  const HmpReport hmp = hmp_check(transfer_function(sys));
  if (!hmp.is_hmp) {
    throw StructuralInfeasibility("plant is not hyper-minimum-phase (" + hmp.diagnostic +
                                  "); no passifying gain exists");
  }

  const AffineFamily family = solve_pb_constraint(sys);
  const Eigen::MatrixXd AK = closed_loop(sys, K);
  auto objective = [&](const Eigen::VectorXd& z) {
    const Eigen::MatrixXd P = family.at(z);
    return std::max(lambda_max_of(lmi_matrix(P, AK, eta)), -lambda_min_of(P));
  };

  const auto d = static_cast<Eigen::Index>(family.basis.size());
  const double scale = std::max(family.particular.norm(), 1e-3);
  constexpr double kScales[] = {1.0, 10.0, 100.0, 0.1};

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  CertificateSearch result;
  result.best_objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_z;
  const int restarts = d == 0 ? 1 : std::max(1, opts.restarts);
  for (int r = 0; r < restarts; ++r) {
    const double s = scale * kScales[r % 4];
    Eigen::VectorXd z0(d);
    for (Eigen::Index i = 0; i < d; ++i) z0(i) = s * normal(rng);
    MinimizeResult local;
    if (d == 0) {
      local = {z0, objective(z0)};
    } else {
      local = nelder_mead(objective, z0, s, opts.max_evaluations, opts.accept_objective);
    }
    if (local.value < result.best_objective) {
      result.best_objective = local.value;
      result.best_restart = r;
      best_z = local.x;
    }
  }

  if (result.best_objective <= opts.accept_objective) {
    PassificationCertificate cert;
    cert.P = family.at(best_z);
    cert.P = 0.5 * (cert.P + cert.P.transpose()).eval();
    cert.K = K;
    cert.eta = eta;
    const auto check = verify_certificate(sys, cert.P, K, eta, opts.verify_tolerance);
    cert.lambda_min = check.lambda_min;
    cert.residual_lmi = check.residual_lmi;
    cert.residual_pb = check.residual_pb;
    if (check.passed) {
      result.certificate = std::move(cert);
      return result;
    }
  }

  std::ostringstream advice;
  advice.precision(17);
  advice << "no certificate for K = " << K << ", eta = " << eta
         << " (best objective " << result.best_objective << "); ";
  if (eta >= hmp.eta0) {
    advice << "eta must stay below the numerator stability degree eta0 = " << hmp.eta0;
  } else {
    advice << "increase K: for an HMP plant every sufficiently large gain is passifying";
  }
  result.advice = advice.str();
  return result;
}

GainSearch find_gain_by_doubling(const LurieSystem& sys, double eta,
                                 const CertificateSearchOptions& opts, double k_start,
                                 double k_max) {
  if (!(k_start > 0.0)) throw ConfigError("find_gain_by_doubling: k_start must be positive");
  GainSearch out;
  for (double K = k_start; K <= k_max; K *= 2.0) {
    out.K = K;
    out.search = find_certificate(sys, K, eta, opts);
    if (out.search.certificate) return out;
  }
  return out;
}

}  // namespace qsync
