#include "qsync/hybrid_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "qsync/errors.hpp"

namespace qsync {

double default_dt(double Ts, double max_dt, int min_substeps) {
  if (!(Ts > 0.0) || !(max_dt > 0.0)) throw ConfigError("default_dt: Ts and max_dt must be positive");
  const auto n = std::max<double>(min_substeps, std::ceil(Ts / max_dt - 1e-9));
  return Ts / n;
}

std::int64_t SimConfig::steps_per_sample() const {
  return static_cast<std::int64_t>(std::llround(coder.Ts / dt));
}

std::int64_t SimConfig::total_steps() const {
  return static_cast<std::int64_t>(std::ceil(t_fin / dt - 1e-9));
}

void SimConfig::validate() const {
  coder.validate();
  const auto n = sys.n();
  if (x0.size() != n || z0.size() != n) throw ConfigError("initial states must have length n");
  if (!x0.allFinite() || !z0.allFinite()) throw ConfigError("initial states must be finite");
  if (!(t_fin > 0.0)) throw ConfigError("t_fin must be positive");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!std::isfinite(K)) throw ConfigError("K must be finite");
  if (record_stride < 1) throw ConfigError("record_stride must be at least 1");
  const double ratio = coder.Ts / dt;
  if (ratio < 0.5 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
    throw ConfigError("Ts / dt must be a positive integer");
  }
}

namespace {

// Master x and error e = x - z stacked as s = [x; e].
class CoupledLurie {
 public:
  explicit CoupledLurie(const LurieSystem& sys)
      : n_(static_cast<std::size_t>(sys.n())),
        A_(n_ * n_),
        B_(sys.B().data(), sys.B().data() + n_),
        C_(sys.C().data(), sys.C().data() + n_),
        phi_(sys.phi()) {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        A_[i * n_ + j] = sys.A()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    pwl_ = std::get_if<PiecewiseLinear>(&phi_);
  }

  std::size_t n() const { return n_; }

  double output(const double* v) const {
    double y = 0.0;
    for (std::size_t j = 0; j < n_; ++j) y += C_[j] * v[j];
    return y;
  }

  void rhs(const double* s, double u, double* ds) const {
    const double* x = s;
    const double* e = s + n_;
    const double y = output(x);
    const double eps = output(e);
    const double nl = pwl_ ? phi_eval(*pwl_, y) : phi_eval(phi_, y);
    const double inc = pwl_ ? phi_increment(*pwl_, y, eps) : phi_increment(phi_, y, eps);
    for (std::size_t i = 0; i < n_; ++i) {
      double ax = 0.0, ae = 0.0;
      const double* row = &A_[i * n_];
      for (std::size_t j = 0; j < n_; ++j) {
        ax += row[j] * x[j];
        ae += row[j] * e[j];
      }
      ds[i] = ax + B_[i] * nl;
      ds[n_ + i] = ae + B_[i] * (inc - u);
    }
  }

 private:
  std::size_t n_;
  std::vector<double> A_, B_, C_;
  Nonlinearity phi_;
  const PiecewiseLinear* pwl_ = nullptr;
};

double norm_of(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace

SimStatus simulate(const SimConfig& cfg, SimObserver& observer) {
  cfg.validate();
  const CoupledLurie plant(cfg.sys);
  const std::size_t n = plant.n();
  const std::size_t dim = 2 * n;

  std::vector<double> s(dim), k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    s[i] = cfg.x0(ii);
    s[n + i] = cfg.x0(ii) - cfg.z0(ii);
  }

  const std::int64_t per_sample = cfg.steps_per_sample();
  const std::int64_t total = cfg.total_steps();
  const double dt = cfg.dt;

  CoderState coder = CoderState::initial(cfg.coder);
  CoderState decoder = CoderState::initial(cfg.coder);
  SampleRecord held;
  double u = 0.0;

  auto emit_row = [&](double t) {
    TraceRow row;
    row.t = t;
    row.x = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(n));
    row.e = Eigen::Map<const Eigen::VectorXd>(s.data() + n, static_cast<Eigen::Index>(n));
    row.z = row.x - row.e;
    row.eps = plant.output(s.data() + n);
    row.eps_bar = held.eps_bar;
    row.u = u;
    row.delta_q = held.eps - held.eps_bar;
    row.delta_s = row.eps - held.eps;
    row.delta = row.eps - row.eps_bar;
    row.M_k = held.M_k;
    row.bit = held.bit;
    row.overflow = held.overflow;
    observer.on_row(row);
  };

  SimStatus status;
  for (std::int64_t i = 0;; ++i) {
    const double t = static_cast<double>(i) * dt;
    if (i % per_sample == 0) {
      const double eps = plant.output(s.data() + n);
      const CoderOutput sent = coder_step(coder, cfg.coder, eps);
      const DecoderOutput received = decoder_step(decoder, cfg.coder, sent.word);
      held.k = coder.k;
      held.t = static_cast<double>(coder.k) * cfg.coder.Ts;
      held.bit = sent.word.bit;
      held.M_k = coder.M;
      held.eps = eps;
      held.eps_bar = received.eps_bar;
      held.e_norm = norm_of(s.data() + n, n);
      held.overflow = sent.overflow;
      coder = sent.next;
      decoder = received.next;
      u = cfg.K * held.eps_bar;
      ++status.samples;
      observer.on_sample(held);
    }
    if (i % cfg.record_stride == 0 || i == total) emit_row(t);
    if (i == total) break;

    plant.rhs(s.data(), u, k1.data());
    for (std::size_t j = 0; j < dim; ++j) tmp[j] = s[j] + 0.5 * dt * k1[j];
    plant.rhs(tmp.data(), u, k2.data());
    for (std::size_t j = 0; j < dim; ++j) tmp[j] = s[j] + 0.5 * dt * k2[j];
    plant.rhs(tmp.data(), u, k3.data());
    for (std::size_t j = 0; j < dim; ++j) tmp[j] = s[j] + dt * k3[j];
    plant.rhs(tmp.data(), u, k4.data());
    for (std::size_t j = 0; j < dim; ++j) {
      s[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
    ++status.steps;

    bool finite = true;
    for (double v : s) finite = finite && std::isfinite(v);
    double z_norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) z_norm += (s[j] - s[n + j]) * (s[j] - s[n + j]);
    if (!finite || norm_of(s.data(), n) > cfg.divergence_limit ||
        std::sqrt(z_norm) > cfg.divergence_limit) {
      status.diverged = true;
      status.divergence_time = static_cast<double>(i + 1) * dt;
      break;
    }
  }
  return status;
}

namespace {

class TraceRecorder : public SimObserver {
 public:
  TraceRecorder(SimTrace& trace, bool keep_samples) : trace_(trace), keep_(keep_samples) {}
  void on_sample(const SampleRecord& s) override {
    if (keep_) trace_.samples.push_back(s);
  }
  void on_row(const TraceRow& row) override { trace_.rows.push_back(row); }

 private:
  SimTrace& trace_;
  bool keep_;
};

}  // namespace

SimTrace run_simulation(const SimConfig& cfg, bool keep_samples) {
  SimTrace trace;
  trace.t_fin = cfg.t_fin;
  TraceRecorder recorder(trace, keep_samples);
  trace.status = simulate(cfg, recorder);
  return trace;
}

void QAccumulator::add(double t, double x_norm, double e_norm) {
  max_x_ = std::max(max_x_, x_norm);
  if (t >= 0.8 * t_fin_ - 1e-9 * t_fin_) max_e_tail_ = std::max(max_e_tail_, e_norm);
}

double QAccumulator::value() const {
  if (!(max_x_ > 0.0)) throw ConfigError("Q is undefined for an all-zero master trajectory");
  return max_e_tail_ / max_x_;
}

double metric_q(const SimTrace& trace) {
  QAccumulator acc(trace.t_fin);
  for (const auto& row : trace.rows) acc.add(row);
  return acc.value();
}

double transient_time(const SimTrace& trace, double band) {
  if (trace.rows.empty()) return std::numeric_limits<double>::infinity();
  double settled = 0.0;
  for (std::size_t i = trace.rows.size(); i-- > 0;) {
    if (!(trace.rows[i].e.norm() < band)) {
      if (i + 1 == trace.rows.size()) return std::numeric_limits<double>::infinity();
      settled = trace.rows[i + 1].t;
      break;
    }
  }
  return settled;
}

EnvelopeChecker::EnvelopeChecker(double rho, double M0, double tol, bool keep_series)
    : rho_(rho), M0_(M0), tol_(tol), keep_(keep_series) {}

void EnvelopeChecker::on_sample(const SampleRecord& s) {
  const double envelope = 2.0 * std::pow(rho_, static_cast<double>(s.k)) * M0_;
  if (keep_) {
    eps_k.push_back(std::abs(s.eps));
    e_k.push_back(s.e_norm);
    bound.push_back(envelope);
  }
  if (envelope > 0.0) worst_ratio_ = std::max(worst_ratio_, s.e_norm / envelope);
  if (!(s.e_norm <= envelope + tol_)) {
    if (violations_ == 0) first_violation_ = s.k;
    ++violations_;
  }
}

Metrics check_envelope(const SimTrace& trace, double rho, double M0, double tol) {
  EnvelopeChecker checker(rho, M0, tol, true);
  for (const auto& s : trace.samples) checker.on_sample(s);
  Metrics m;
  m.eps_k_series = std::move(checker.eps_k);
  m.e_k_series = std::move(checker.e_k);
  m.bound_series = std::move(checker.bound);
  m.bound_satisfied = checker.satisfied();
  return m;
}

SimConfig config_for_rate(const SimConfig& base, double R, const SweepSettings& settings) {
  if (!(R > 0.0)) throw ConfigError("transmission rate must be positive");
  SimConfig cfg = base;
  cfg.coder.Ts = 1.0 / R;
  if (settings.rho_decay_rate) cfg.coder.rho = std::exp(-*settings.rho_decay_rate * cfg.coder.Ts);
  cfg.dt = default_dt(cfg.coder.Ts, settings.max_dt, settings.min_substeps);
  return cfg;
}

namespace {

class SweepObserver : public SimObserver {
 public:
  SweepObserver(double t_fin, double rho, double M0, double tol)
      : q_(t_fin), bound_(rho, M0, tol, false) {}
  void on_sample(const SampleRecord& s) override { bound_.on_sample(s); }
  void on_row(const TraceRow& row) override { q_.add(row); }

  QAccumulator q_;
  EnvelopeChecker bound_;
};

SweepRow run_rate(const SimConfig& base, double R, const SweepSettings& settings) {
  const SimConfig cfg = config_for_rate(base, R, settings);
  SweepObserver obs(cfg.t_fin, cfg.coder.rho, cfg.coder.M0,
                    settings.bound_tol_rel * cfg.coder.M0);
  const SimStatus status = simulate(cfg, obs);
  SweepRow row;
  row.R = R;
  row.Ts = cfg.coder.Ts;
  row.rho = cfg.coder.rho;
  row.diverged = status.diverged;
  row.Q = status.diverged ? std::numeric_limits<double>::infinity() : obs.q_.value();
  row.bound_satisfied = !status.diverged && obs.bound_.satisfied();
  return row;
}

}  // namespace

std::vector<SweepRow> sweep_rate(const SimConfig& base, std::span<const double> rates,
                                 const SweepSettings& settings) {
  std::vector<double> sorted(rates.begin(), rates.end());
  std::sort(sorted.begin(), sorted.end());
  for (double R : sorted) {
    if (!(R > 0.0) || !std::isfinite(R)) throw ConfigError("transmission rates must be positive");
  }
  std::vector<SweepRow> rows(sorted.size());
  std::vector<std::exception_ptr> errors(sorted.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < sorted.size(); i = next++) {
      try {
        rows[i] = run_rate(base, sorted[i], settings);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(settings.threads, static_cast<int>(sorted.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
  return rows;
}

}  // namespace qsync
