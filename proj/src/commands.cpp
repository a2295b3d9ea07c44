#include "qsync/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "qsync/errors.hpp"
#include "qsync/svg.hpp"

namespace qsync {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

void Report::add(std::string key, double value) { entries_.emplace_back(std::move(key), format_double(value)); }
void Report::add(std::string key, bool value) { entries_.emplace_back(std::move(key), value ? "true" : "false"); }
void Report::add(std::string key, long long value) { entries_.emplace_back(std::move(key), std::to_string(value)); }
void Report::add(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }

std::string Report::str() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_report(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find(" = ");
    if (pos == std::string::npos) continue;
    out.emplace_back(line.substr(0, pos), line.substr(pos + 3));
  }
  return out;
}

std::string certificate_to_text(const PassificationCertificate& cert) {
  std::string out = fmt::format("n = {}\n", cert.P.rows());
  out += fmt::format("K = {:a}\n", cert.K);
  out += fmt::format("eta = {:a}\n", cert.eta);
  out += fmt::format("lambda_min = {:a}\n", cert.lambda_min);
  out += fmt::format("residual_lmi = {:a}\n", cert.residual_lmi);
  out += fmt::format("residual_pb = {:a}\n", cert.residual_pb);
  for (Eigen::Index i = 0; i < cert.P.rows(); ++i)
    for (Eigen::Index j = 0; j < cert.P.cols(); ++j)
      out += fmt::format("P.{}.{} = {:a}\n", i, j, cert.P(i, j));
  return out;
}

PassificationCertificate certificate_from_text(std::string_view text) {
  const auto entries = parse_report(text);
  auto value = [&](const std::string& key) -> double {
    for (const auto& [k, v] : entries) {
      if (k == key) {
        char* end = nullptr;
        const double d = std::strtod(v.c_str(), &end);
        if (end == v.c_str()) throw ConfigError("certificate: malformed value for " + key);
        return d;
      }
    }
    throw ConfigError("certificate: missing key " + key);
  };
  const double n_raw = value("n");
  if (!(n_raw >= 1.0) || n_raw != std::floor(n_raw)) throw ConfigError("certificate: bad n");
  const auto n = static_cast<Eigen::Index>(n_raw);
  PassificationCertificate cert;
  cert.K = value("K");
  cert.eta = value("eta");
  cert.lambda_min = value("lambda_min");
  cert.residual_lmi = value("residual_lmi");
  cert.residual_pb = value("residual_pb");
  cert.P.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cert.P(i, j) = value(fmt::format("P.{}.{}", i, j));
  return cert;
}

void write_trace_csv(std::ostream& os, const SimTrace& trace) {
  const Eigen::Index n = trace.rows.empty() ? 0 : trace.rows.front().x.size();
  std::string line = "t";
  for (const char* prefix : {"x", "z", "e"})
    for (Eigen::Index i = 1; i <= n; ++i) line += fmt::format(",{}{}", prefix, i);
  line += ",eps,eps_bar,u,delta_q,delta_s,delta,M_k,bit,overflow\n";
  os << line;
  for (const auto& r : trace.rows) {
    line = format_double(r.t);
    for (const Eigen::VectorXd* v : {&r.x, &r.z, &r.e})
      for (Eigen::Index i = 0; i < n; ++i) line += "," + format_double((*v)(i));
    for (double d : {r.eps, r.eps_bar, r.u, r.delta_q, r.delta_s, r.delta, r.M_k}) {
      line += "," + format_double(d);
    }
    line += fmt::format(",{},{}\n", r.bit, r.overflow ? 1 : 0);
    os << line;
  }
}

namespace {

constexpr const char* kBitstreamHeader = "k,t,bit,M_k,eps,eps_bar\n";

std::string bitstream_line(const SampleRecord& s) {
  return fmt::format("{},{},{},{},{},{}\n", s.k, format_double(s.t), s.bit, format_double(s.M_k),
                     format_double(s.eps), format_double(s.eps_bar));
}

}  // namespace

void write_bitstream_csv(std::ostream& os, const SimTrace& trace) {
  os << kBitstreamHeader;
  for (const auto& s : trace.samples) os << bitstream_line(s);
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "R,Ts,rho,Q,bound_satisfied\n";
  for (const auto& r : rows) {
    os << fmt::format("{},{},{},{},{}\n", format_double(r.R), format_double(r.Ts),
                      format_double(r.rho), format_double(r.Q), r.bound_satisfied ? 1 : 0);
  }
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << content;
}

std::filesystem::path prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string());
  return dir;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + format_double(v[i]);
  return out;
}

void add_transfer(Report& r, const RationalTransfer& tf, const HmpReport& hmp) {
  r.add("tf.num", join(tf.num.coeffs));
  r.add("tf.den", join(tf.den.coeffs));
  r.add("hmp", hmp.is_hmp);
  r.add("hmp.eta0", hmp.eta0);
  r.add("hmp.num_degree", hmp.num_degree);
  for (std::size_t i = 0; i < hmp.numerator_roots.size(); ++i) {
    r.add(fmt::format("hmp.root.{}.re", i), hmp.numerator_roots[i].real());
    r.add(fmt::format("hmp.root.{}.im", i), hmp.numerator_roots[i].imag());
  }
  if (!hmp.diagnostic.empty()) r.add("hmp.diagnostic", hmp.diagnostic);
}

}  // namespace

DesignOutcome run_design(const ExperimentConfig& cfg) {
  const LurieSystem sys = build_system(cfg);
  DesignOutcome d;
  d.hmp = hmp_check(transfer_function(sys));
  d.L_phi = phi_lipschitz(sys.phi());
  d.eta_prime = resolved_eta_prime(cfg);
  d.search = find_certificate(sys, cfg.control.K, cfg.control.eta);
  if (!d.search.certificate) return d;

  const auto& cert = *d.search.certificate;
  const double W0 = cfg.control.W0.value_or(
      default_w0(cert.P, initial_master(cfg) - initial_slave(cfg)));
  double rho = 1.0;
  if (cfg.coder.rho_rule == kRhoRuleExp) {
    rho = std::exp(-cfg.control.eta * cfg.coder.Ts);
  } else if (cfg.coder.rho_rule == kRhoRuleFixed) {
    rho = cfg.coder.rho.value_or(1.0);
  }
  if (cfg.coder.rho_rule == kRhoRuleTheorem) {
    // rho follows q at the configured Ts when that q is admissible.
    const auto probe = theorem_constants(sys, cert, d.L_phi, d.eta_prime, d.hmp.eta0,
                                         cfg.coder.Ts, 1.0, W0);
    rho = std::isfinite(probe.q) && probe.q < 1.0 ? 0.5 * (1.0 + probe.q) : 1.0;
  }
  d.constants = theorem_constants(sys, cert, d.L_phi, d.eta_prime, d.hmp.eta0, cfg.coder.Ts, rho, W0);
  try {
    d.recommendation = recommend_design(sys, cert, d.L_phi, d.eta_prime, W0);
  } catch (const FeasibilityError&) {
  }
  return d;
}

CoderConfig resolve_coder(const ExperimentConfig& cfg) {
  if (cfg.coder.rho_rule != kRhoRuleTheorem) return build_coder(cfg);
  const DesignOutcome d = run_design(cfg);
  if (!d.constants) throw FeasibilityError(d.search.advice);
  const auto& tc = *d.constants;
  if (!tc.feasible() || !std::isfinite(tc.M0_bound) || !(tc.M0_bound > 0.0)) {
    throw FeasibilityError("the configured Ts does not satisfy the theorem conditions");
  }
  CoderConfig coder{tc.M0_bound, tc.rho, 0.0, cfg.coder.Ts};
  coder.validate();
  return coder;
}

int cmd_model_check(const ExperimentConfig& cfg, CommandContext& ctx) {
  const LurieSystem sys = build_system(cfg);
  const RationalTransfer tf = transfer_function(sys);
  const HmpReport hmp = hmp_check(tf);
  Report r;
  r.add("system.n", sys.n());
  r.add("system.CB", sys.CB());
  add_transfer(r, tf, hmp);
  r.add("phi.m0", cfg.system.m0);
  r.add("phi.m1", cfg.system.m1);
  r.add("phi.lipschitz", phi_lipschitz(sys.phi()));
  ctx.out << r.str();
  if (ctx.out_dir) write_file(prepare_dir(*ctx.out_dir) / "model_check.txt", r.str());
  return kExitOk;
}

int cmd_design(const ExperimentConfig& cfg, CommandContext& ctx) {
  Report r;
  DesignOutcome d;
  try {
    d = run_design(cfg);
  } catch (const StructuralInfeasibility& e) {
    r.add("certificate.found", false);
    r.add("certificate.advice", e.what());
    ctx.out << r.str();
    return kExitInfeasible;
  }
  r.add("control.K", cfg.control.K);
  r.add("control.eta", cfg.control.eta);
  r.add("control.eta_prime", d.eta_prime);
  r.add("hmp.eta0", d.hmp.eta0);
  r.add("phi.lipschitz", d.L_phi);
  r.add("certificate.found", d.search.certificate.has_value());
  r.add("certificate.best_objective", d.search.best_objective);
  r.add("certificate.best_restart", d.search.best_restart);
  if (!d.search.certificate) {
    r.add("certificate.advice", d.search.advice);
    ctx.out << r.str();
    if (ctx.out_dir) write_file(prepare_dir(*ctx.out_dir) / "design.txt", r.str());
    return kExitInfeasible;
  }
  const auto& cert = *d.search.certificate;
  for (Eigen::Index i = 0; i < cert.P.rows(); ++i)
    for (Eigen::Index j = 0; j < cert.P.cols(); ++j)
      r.add(fmt::format("certificate.P.{}.{}", i, j), cert.P(i, j));
  r.add("certificate.lambda_min", cert.lambda_min);
  r.add("certificate.residual_lmi", cert.residual_lmi);
  r.add("certificate.residual_pb", cert.residual_pb);

  const auto& tc = *d.constants;
  r.add("theorem.W0", tc.W0);
  r.add("theorem.a0", tc.a0);
  r.add("theorem.b0", tc.b0);
  r.add("theorem.Ts", tc.Ts);
  r.add("theorem.rho", tc.rho);
  r.add("theorem.q", tc.q);
  r.add("theorem.r", tc.r);
  r.add("theorem.M0_bound", tc.M0_bound);
  r.add("theorem.Ts_max", tc.Ts_max.value);
  r.add("theorem.Ts_max.decay_branch", tc.Ts_max.decay_branch);
  r.add("theorem.Ts_max.gap_branch", tc.Ts_max.gap_branch);
  r.add("theorem.Ts_max.gain_branch", tc.Ts_max.gain_branch);
  r.add("verdict.ts_b0_lt_1", tc.ts_b0_ok);
  r.add("verdict.q_lt_rho_lt_1", tc.q_rho_ok);
  r.add("verdict.eta_chain", tc.eta_chain_ok);
  r.add("verdict.contraction_conditions", tc.feasible());
  r.add("verdict.ts_below_threshold", tc.threshold_ok);
  if (cfg.coder.rho_rule == kRhoRuleExp) {
    // The exp(-eta Ts) schedule ignores q; flag when it violates q < rho.
    r.add("verdict.rho_rule_conflict", !(tc.q < tc.rho));
  }
  if (d.recommendation) {
    r.add("recommend.Ts", d.recommendation->Ts);
    r.add("recommend.rate_bps", 1.0 / d.recommendation->Ts);
    r.add("recommend.rho", d.recommendation->rho);
    r.add("recommend.q", d.recommendation->q);
    r.add("recommend.M0", d.recommendation->M0);
  }
  ctx.out << r.str();
  if (ctx.out_dir) {
    const auto dir = prepare_dir(*ctx.out_dir);
    write_file(dir / "design.txt", r.str());
    write_file(dir / "certificate.txt", certificate_to_text(cert));
  }
  return kExitOk;
}

namespace {

// Streams samples instead of storing them: runs at small Ts produce tens of
// millions of channel uses.
class SimulateObserver : public SimObserver {
 public:
  SimulateObserver(SimTrace& trace, const CoderConfig& coder, std::int64_t expected_samples,
                   std::ostream* bitstream)
      : trace_(trace),
        bitstream_(bitstream),
        bound_(coder.rho, coder.M0, 1e-6 * coder.M0, false),
        stride_(std::max<std::int64_t>(1, expected_samples / 4000)) {}

  void on_row(const TraceRow& row) override { trace_.rows.push_back(row); }

  void on_sample(const SampleRecord& s) override {
    bound_.on_sample(s);
    overflows_ += s.overflow ? 1 : 0;
    if (bitstream_) *bitstream_ << bitstream_line(s);
    if (s.k % stride_ == 0) {
      plot_t_.push_back(s.t);
      plot_e_.push_back(s.e_norm);
      plot_k_.push_back(s.k);
    }
  }

  const EnvelopeChecker& bound() const { return bound_; }
  long long overflows() const { return overflows_; }
  const std::vector<double>& plot_t() const { return plot_t_; }
  const std::vector<double>& plot_e() const { return plot_e_; }
  const std::vector<std::int64_t>& plot_k() const { return plot_k_; }

 private:
  SimTrace& trace_;
  std::ostream* bitstream_;
  EnvelopeChecker bound_;
  std::int64_t stride_;
  long long overflows_ = 0;
  std::vector<double> plot_t_, plot_e_;
  std::vector<std::int64_t> plot_k_;
};

}  // namespace

int cmd_simulate(const ExperimentConfig& cfg, CommandContext& ctx) {
  const CoderConfig coder = resolve_coder(cfg);
  const SimConfig sim = build_sim_config(cfg, coder);

  std::optional<std::filesystem::path> dir;
  if (ctx.out_dir) dir = prepare_dir(*ctx.out_dir);
  std::ofstream bitstream;
  if (dir && cfg.output.emit_bitstream) {
    bitstream.open(*dir / "bitstream.csv", std::ios::binary);
    if (!bitstream) throw ConfigError("cannot write " + (*dir / "bitstream.csv").string());
    bitstream << kBitstreamHeader;
  }

  SimTrace trace;
  trace.t_fin = sim.t_fin;
  const auto expected = bit_budget(coder, sim.t_fin).count;
  SimulateObserver obs(trace, coder, expected, bitstream.is_open() ? &bitstream : nullptr);
  trace.status = simulate(sim, obs);
  if (bitstream.is_open()) bitstream.close();

  Report r;
  r.add("run.K", sim.K);
  r.add("run.Ts", coder.Ts);
  r.add("run.rate_bps", bit_budget(coder, sim.t_fin).rate);
  r.add("run.rho", coder.rho);
  r.add("run.M0", coder.M0);
  r.add("run.M_inf", coder.M_inf);
  r.add("run.dt", sim.dt);
  r.add("run.t_fin", sim.t_fin);
  r.add("run.samples", static_cast<long long>(trace.status.samples));
  r.add("run.diverged", trace.status.diverged);
  if (trace.status.diverged) r.add("run.divergence_time", trace.status.divergence_time);

  r.add("metrics.overflow_count", obs.overflows());
  double q_value = std::numeric_limits<double>::quiet_NaN();
  try {
    q_value = metric_q(trace);
  } catch (const ConfigError&) {
  }
  r.add("metrics.Q", q_value);
  r.add("metrics.transient_time", transient_time(trace, cfg.sim.transient_band));
  r.add("metrics.transient_band", cfg.sim.transient_band);
  r.add("metrics.final_e_norm", trace.rows.empty() ? 0.0 : trace.rows.back().e.norm());
  if (cfg.sim.check_bound) {
    r.add("metrics.bound_satisfied", obs.bound().satisfied() && !trace.status.diverged);
    r.add("metrics.bound_violations", static_cast<long long>(obs.bound().violations()));
    r.add("metrics.bound_worst_ratio", obs.bound().worst_ratio());
  }
  ctx.out << r.str();

  if (dir) {
    {
      std::ofstream f(*dir / "trace.csv", std::ios::binary);
      write_trace_csv(f, trace);
    }
    write_file(*dir / "metrics.txt", r.str());
    if (ctx.svg && !trace.rows.empty()) {
      const Eigen::Index idx = trace.rows.front().x.size() >= 2 ? 1 : 0;
      PlotSeries xs{fmt::format("x{}", idx + 1), {}, {}, "#1f77b4", true};
      PlotSeries zs{fmt::format("z{}", idx + 1), {}, {}, "#2ca02c", false};
      PlotSeries es{fmt::format("e{}", idx + 1), {}, {}, "#d62728", false};
      for (const auto& row : trace.rows) {
        for (auto* s : {&xs, &zs, &es}) s->x.push_back(row.t);
        xs.y.push_back(row.x(idx));
        zs.y.push_back(row.z(idx));
        es.y.push_back(row.e(idx));
      }
      const std::vector<PlotSeries> states{xs, zs, es};
      write_file(*dir / "states.svg",
                 render_svg({"Master, slave and synchronization error", "t, s", "state"}, states));

      PlotSeries ek{"|e[k]|", obs.plot_t(), obs.plot_e(), "#d62728", false};
      PlotSeries env{"2 rho^k M0", obs.plot_t(), {}, "#333333", true};
      for (const auto k : obs.plot_k()) {
        env.y.push_back(2.0 * std::pow(coder.rho, static_cast<double>(k)) * coder.M0);
      }
      PlotSpec spec{"Sampled error against the exponential envelope", "t, s", "norm"};
      spec.log_y = true;
      const std::vector<PlotSeries> env_series{ek, env};
      write_file(*dir / "envelope.svg", render_svg(spec, env_series));
    }
  }
  return trace.status.diverged ? kExitDiverged : kExitOk;
}

int cmd_sweep(const ExperimentConfig& cfg, CommandContext& ctx) {
  if (cfg.sweep.rates.empty()) throw ConfigError("sweep.rates must not be empty");
  if (cfg.coder.rho_rule == kRhoRuleTheorem) {
    throw ConfigError("sweep supports the 'exp(-eta*Ts)' and 'fixed' rho rules only");
  }
  const SimConfig base = build_sim_config(cfg, build_coder(cfg));
  SweepSettings settings;
  if (cfg.coder.rho_rule == kRhoRuleExp) settings.rho_decay_rate = cfg.control.eta;
  settings.threads = cfg.sweep.threads;
  const auto rows = sweep_rate(base, cfg.sweep.rates, settings);

  long long diverged = 0;
  for (const auto& row : rows) diverged += row.diverged ? 1 : 0;
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  ctx.out << csv.str();
  if (diverged > 0) ctx.err << "warning: " << diverged << " run(s) diverged; Q recorded as inf\n";

  if (ctx.out_dir) {
    const auto dir = prepare_dir(*ctx.out_dir);
    write_file(dir / "sweep.csv", csv.str());
    if (ctx.svg) {
      PlotSeries qs{"Q", {}, {}, "#1f77b4", false};
      for (const auto& row : rows) {
        qs.x.push_back(row.R);
        qs.y.push_back(row.Q);
      }
      PlotSpec spec{"Normalized synchronization error against transmission rate",
                    "R, bit/s", "Q"};
      spec.log_y = true;
      const std::vector<PlotSeries> series{qs};
      write_file(dir / "sweep.svg", render_svg(spec, series));
    }
  }
  return kExitOk;
}

}  // namespace qsync
