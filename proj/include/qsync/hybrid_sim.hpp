#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qsync/codec.hpp"
#include "qsync/lurie.hpp"

namespace qsync {

/// Integration step used when none is configured: Ts / N with
/// N = max(min_substeps, ceil(Ts / max_dt)), so that Ts / dt is an integer.
double default_dt(double Ts, double max_dt = 0.002, int min_substeps = 20);

struct SimConfig {
  LurieSystem sys;
  double K = 0.0;
  CoderConfig coder;
  Eigen::VectorXd x0;
  Eigen::VectorXd z0;
  double t_fin = 0.0;
  double dt = 0.0;
  /// Integration steps between trace rows. Rows at t = 0 and at the final
  /// step are always recorded.
  int record_stride = 10;
  double divergence_limit = 1e6;

  /// Throws ConfigError on inconsistent dimensions, non-positive t_fin/dt, or
  /// a sampling period that is not an integer multiple of dt.
  void validate() const;
  /// Ts / dt.
  std::int64_t steps_per_sample() const;
  std::int64_t total_steps() const;
};

/// One recorded instant. z is reported as x - e; the error e is integrated
/// directly so that it stays resolvable far below the rounding level of x.
struct TraceRow {
  double t = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd z;
  Eigen::VectorXd e;
  double eps = 0.0;      ///< C e(t)
  double eps_bar = 0.0;  ///< held decoder output
  double u = 0.0;
  double delta_q = 0.0;  ///< C e(t_k) - eps_bar[k]
  double delta_s = 0.0;  ///< C e(t) - C e(t_k)
  double delta = 0.0;    ///< eps(t) - eps_bar(t)
  double M_k = 0.0;
  int bit = 1;
  bool overflow = false;
};

/// One channel use at t_k = k Ts.
struct SampleRecord {
  std::int64_t k = 0;
  double t = 0.0;
  int bit = 1;
  double M_k = 0.0;
  double eps = 0.0;
  double eps_bar = 0.0;
  double e_norm = 0.0;
  bool overflow = false;
};

class SimObserver {
 public:
  virtual ~SimObserver() = default;
  virtual void on_sample(const SampleRecord&) {}
  virtual void on_row(const TraceRow&) {}
};

struct SimStatus {
  bool diverged = false;
  double divergence_time = std::numeric_limits<double>::quiet_NaN();
  std::int64_t steps = 0;
  std::int64_t samples = 0;
};

/// Fixed-step RK4 of master and error dynamics with the sampled binary
/// coder, lossless channel, decoder and zero-order hold in the loop.
/// The observer sees every sample and every recorded row in time order.
SimStatus simulate(const SimConfig& cfg, SimObserver& observer);

struct SimTrace {
  std::vector<TraceRow> rows;
  std::vector<SampleRecord> samples;
  SimStatus status;
  double t_fin = 0.0;
};

SimTrace run_simulation(const SimConfig& cfg, bool keep_samples = true);

/// Running Q = max_{t >= 0.8 t_fin} |e| / max_t |x| over recorded rows.
class QAccumulator {
 public:
  explicit QAccumulator(double t_fin) : t_fin_(t_fin) {}
  void add(double t, double x_norm, double e_norm);
  void add(const TraceRow& row) { add(row.t, row.x.norm(), row.e.norm()); }
  /// Throws ConfigError if the master never left the origin.
  double value() const;

 private:
  double t_fin_;
  double max_x_ = 0.0;
  double max_e_tail_ = 0.0;
};

double metric_q(const SimTrace& trace);

/// First recorded time after which |e| stays below band until the end;
/// +inf when the last row is still outside the band.
double transient_time(const SimTrace& trace, double band = 0.1);

/// Online form of the sampled exponential bound |e[k]| <= 2 rho^k M0 + tol.
class EnvelopeChecker : public SimObserver {
 public:
  EnvelopeChecker(double rho, double M0, double tol, bool keep_series);
  void on_sample(const SampleRecord& s) override;

  bool satisfied() const { return violations_ == 0; }
  std::int64_t violations() const { return violations_; }
  std::int64_t first_violation() const { return first_violation_; }
  /// Largest |e[k]| / (2 rho^k M0).
  double worst_ratio() const { return worst_ratio_; }

  std::vector<double> eps_k;
  std::vector<double> e_k;
  std::vector<double> bound;

 private:
  double rho_, M0_, tol_;
  bool keep_;
  std::int64_t violations_ = 0;
  std::int64_t first_violation_ = -1;
  double worst_ratio_ = 0.0;
};

struct Metrics {
  double Q = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> eps_k_series;
  std::vector<double> e_k_series;
  std::vector<double> bound_series;
  bool bound_satisfied = false;
  double transient_time = std::numeric_limits<double>::quiet_NaN();
};

/// Fills the sample series and the bound verdict; Q and transient_time are
/// left unset.
Metrics check_envelope(const SimTrace& trace, double rho, double M0, double tol);

struct SweepSettings {
  /// When set, each run uses rho = exp(-eta Ts); otherwise base.coder.rho.
  std::optional<double> rho_decay_rate;
  double max_dt = 0.002;
  int min_substeps = 20;
  double bound_tol_rel = 1e-6;
  int threads = 1;
};

struct SweepRow {
  double R = 0.0;
  double Ts = 0.0;
  double rho = 0.0;
  double Q = 0.0;  ///< +inf when the run diverged
  bool bound_satisfied = false;
  bool diverged = false;
};

/// SimConfig for one transmission rate R (Ts = 1/R, dt re-derived).
SimConfig config_for_rate(const SimConfig& base, double R, const SweepSettings& settings);

/// Independent runs, one per rate, sorted by R regardless of input order or
/// thread count.
std::vector<SweepRow> sweep_rate(const SimConfig& base, std::span<const double> rates,
                                 const SweepSettings& settings);

}  // namespace qsync
