#include "qsync/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "qsync/errors.hpp"

namespace qsync {

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"system", {"p", "q", "A", "B", "C", "m0", "m1"}},
      {"control", {"K", "eta", "eta_prime", "W0"}},
      {"coder", {"M0", "rho_rule", "rho", "M_inf", "Ts"}},
      {"sim", {"x0", "z0", "t_fin", "dt", "record_stride", "transient_band", "check_bound"}},
      {"sweep", {"rates", "threads"}},
      {"output", {"dir", "emit_svg", "emit_bitstream"}},
  };
  return keys;
}

template <class T>
T read(const YAML::Node& block, const std::string& where, const std::string& key) {
  try {
    return block[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(fmt::format("{}.{}: malformed value", where, key));
  }
}

template <class T>
void read_into(const YAML::Node& block, const std::string& where, const std::string& key, T& out) {
  if (block[key]) out = read<T>(block, where, key);
}

template <class T>
void read_into(const YAML::Node& block, const std::string& where, const std::string& key,
               std::optional<T>& out) {
  if (block[key]) out = read<T>(block, where, key);
}

void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' is not of the form block.key=value");
  }
  const std::string block = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override '" + assignment + "': " + e.what());
  }
  if (!root[block]) root[block] = YAML::Node(YAML::NodeType::Map);
  YAML::Node target = root[block];
  target[key] = value;
}

ExperimentConfig from_yaml(const YAML::Node& root) {
  if (root && !root.IsNull() && !root.IsMap()) throw ConfigError("config root must be a mapping");
  for (const auto& entry : root) {
    const auto name = entry.first.as<std::string>();
    const auto it = schema().find(name);
    if (it == schema().end()) throw ConfigError("unknown config block '" + name + "'");
    if (!entry.second.IsMap()) throw ConfigError("config block '" + name + "' must be a mapping");
    for (const auto& kv : entry.second) {
      const auto key = kv.first.as<std::string>();
      if (!it->second.count(key)) throw ConfigError("unknown key '" + name + "." + key + "'");
    }
  }

  ExperimentConfig cfg;
  if (const auto s = root["system"]) {
    // An explicit block replaces the default Chua parameters entirely.
    cfg.system.p.reset();
    cfg.system.q.reset();
    read_into(s, "system", "p", cfg.system.p);
    read_into(s, "system", "q", cfg.system.q);
    read_into(s, "system", "A", cfg.system.A);
    read_into(s, "system", "B", cfg.system.B);
    read_into(s, "system", "C", cfg.system.C);
    read_into(s, "system", "m0", cfg.system.m0);
    read_into(s, "system", "m1", cfg.system.m1);
  }
  if (const auto c = root["control"]) {
    read_into(c, "control", "K", cfg.control.K);
    read_into(c, "control", "eta", cfg.control.eta);
    read_into(c, "control", "eta_prime", cfg.control.eta_prime);
    read_into(c, "control", "W0", cfg.control.W0);
  }
  if (const auto c = root["coder"]) {
    read_into(c, "coder", "M0", cfg.coder.M0);
    read_into(c, "coder", "rho_rule", cfg.coder.rho_rule);
    read_into(c, "coder", "rho", cfg.coder.rho);
    read_into(c, "coder", "M_inf", cfg.coder.M_inf);
    read_into(c, "coder", "Ts", cfg.coder.Ts);
  }
  if (const auto s = root["sim"]) {
    read_into(s, "sim", "x0", cfg.sim.x0);
    read_into(s, "sim", "z0", cfg.sim.z0);
    read_into(s, "sim", "t_fin", cfg.sim.t_fin);
    read_into(s, "sim", "dt", cfg.sim.dt);
    read_into(s, "sim", "record_stride", cfg.sim.record_stride);
    read_into(s, "sim", "transient_band", cfg.sim.transient_band);
    read_into(s, "sim", "check_bound", cfg.sim.check_bound);
  }
  if (const auto s = root["sweep"]) {
    read_into(s, "sweep", "rates", cfg.sweep.rates);
    read_into(s, "sweep", "threads", cfg.sweep.threads);
  }
  if (const auto o = root["output"]) {
    read_into(o, "output", "dir", cfg.output.dir);
    read_into(o, "output", "emit_svg", cfg.output.emit_svg);
    read_into(o, "output", "emit_bitstream", cfg.output.emit_bitstream);
  }
  return cfg;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

LurieSystem build_system(const ExperimentConfig& cfg) {
  const auto& s = cfg.system;
  const bool chua = s.p || s.q;
  const bool explicit_matrices = s.A || s.B || s.C;
  if (chua == explicit_matrices) {
    throw ConfigError("system: give either Chua parameters (p, q) or matrices (A, B, C)");
  }
  if (chua) {
    if (!s.p || !s.q) throw ConfigError("system: both p and q are required");
    return chua_build(*s.p, *s.q, s.m0, s.m1);
  }
  if (!s.A || !s.B || !s.C) throw ConfigError("system: A, B and C are all required");
  const auto n = static_cast<Eigen::Index>(s.A->size());
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = (*s.A)[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != n) throw ConfigError("system.A must be square");
    for (Eigen::Index j = 0; j < n; ++j) A(i, j) = row[static_cast<std::size_t>(j)];
  }
  return LurieSystem(A, to_vector(*s.B), to_vector(*s.C).transpose(),
                     PiecewiseLinear{s.m0, s.m1});
}

double resolved_eta_prime(const ExperimentConfig& cfg) {
  return cfg.control.eta_prime.value_or(0.5 * cfg.control.eta);
}

Eigen::VectorXd initial_master(const ExperimentConfig& cfg) { return to_vector(cfg.sim.x0); }

Eigen::VectorXd initial_slave(const ExperimentConfig& cfg) {
  if (cfg.sim.z0) return to_vector(*cfg.sim.z0);
  return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.sim.x0.size()));
}

CoderConfig build_coder(const ExperimentConfig& cfg) {
  CoderConfig coder{cfg.coder.M0, 1.0, cfg.coder.M_inf, cfg.coder.Ts};
  if (cfg.coder.rho_rule == kRhoRuleExp) {
    coder.rho = std::exp(-cfg.control.eta * cfg.coder.Ts);
  } else if (cfg.coder.rho_rule == kRhoRuleFixed) {
    if (!cfg.coder.rho) throw ConfigError("coder.rho is required by rho_rule 'fixed'");
    coder.rho = *cfg.coder.rho;
  } else if (cfg.coder.rho_rule == kRhoRuleTheorem) {
    throw ConfigError("coder: rho_rule 'theorem' is resolved by the design chain");
  } else {
    throw ConfigError("coder.rho_rule must be one of 'exp(-eta*Ts)', 'fixed', 'theorem'");
  }
  coder.validate();
  return coder;
}

SimConfig build_sim_config(const ExperimentConfig& cfg, const CoderConfig& coder) {
  SimConfig sim{build_system(cfg), cfg.control.K, coder, initial_master(cfg),
                initial_slave(cfg), cfg.sim.t_fin,
                cfg.sim.dt.value_or(default_dt(coder.Ts)), cfg.sim.record_stride};
  sim.validate();
  return sim;
}

void validate_config(const ExperimentConfig& cfg) {
  const LurieSystem sys = build_system(cfg);
  const auto n = static_cast<std::size_t>(sys.n());
  if (cfg.sim.x0.size() != n) throw ConfigError("sim.x0 must have length n");
  if (cfg.sim.z0 && cfg.sim.z0->size() != n) throw ConfigError("sim.z0 must have length n");
  if (!(cfg.control.eta > 0.0)) throw ConfigError("control.eta must be positive");
  if (cfg.control.eta_prime &&
      !(*cfg.control.eta_prime > 0.0 && *cfg.control.eta_prime < cfg.control.eta)) {
    throw ConfigError("control.eta_prime must lie in (0, eta)");
  }
  if (cfg.control.W0 && !(*cfg.control.W0 > 0.0)) throw ConfigError("control.W0 must be positive");
  if (!(cfg.sim.transient_band > 0.0)) throw ConfigError("sim.transient_band must be positive");
  if (cfg.sweep.threads < 1) throw ConfigError("sweep.threads must be at least 1");
  for (double R : cfg.sweep.rates) {
    if (!(R > 0.0) || !std::isfinite(R)) throw ConfigError("sweep.rates must be positive");
  }
  if (cfg.coder.rho_rule == kRhoRuleTheorem) {
    // Only the schedule-independent parts can be checked without a certificate.
    CoderConfig probe{cfg.coder.M0, 0.5, cfg.coder.M_inf, cfg.coder.Ts};
    probe.validate();
    if (cfg.sim.dt) build_sim_config(cfg, probe);
  } else {
    build_sim_config(cfg, build_coder(cfg));
  }
}

ExperimentConfig parse_config(std::string_view text, std::span<const std::string> overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  for (const auto& o : overrides) apply_override(root, o);
  ExperimentConfig cfg = from_yaml(root);
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;

  out << YAML::Key << "system" << YAML::Value << YAML::BeginMap;
  if (cfg.system.p) out << YAML::Key << "p" << YAML::Value << *cfg.system.p;
  if (cfg.system.q) out << YAML::Key << "q" << YAML::Value << *cfg.system.q;
  if (cfg.system.A) {
    out << YAML::Key << "A" << YAML::Value << YAML::BeginSeq;
    for (const auto& row : *cfg.system.A) out << YAML::Flow << row;
    out << YAML::EndSeq;
  }
  if (cfg.system.B) out << YAML::Key << "B" << YAML::Value << YAML::Flow << *cfg.system.B;
  if (cfg.system.C) out << YAML::Key << "C" << YAML::Value << YAML::Flow << *cfg.system.C;
  out << YAML::Key << "m0" << YAML::Value << cfg.system.m0;
  out << YAML::Key << "m1" << YAML::Value << cfg.system.m1;
  out << YAML::EndMap;

  out << YAML::Key << "control" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "K" << YAML::Value << cfg.control.K;
  out << YAML::Key << "eta" << YAML::Value << cfg.control.eta;
  if (cfg.control.eta_prime) out << YAML::Key << "eta_prime" << YAML::Value << *cfg.control.eta_prime;
  if (cfg.control.W0) out << YAML::Key << "W0" << YAML::Value << *cfg.control.W0;
  out << YAML::EndMap;

  out << YAML::Key << "coder" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "M0" << YAML::Value << cfg.coder.M0;
  out << YAML::Key << "rho_rule" << YAML::Value << YAML::DoubleQuoted << cfg.coder.rho_rule;
  if (cfg.coder.rho) out << YAML::Key << "rho" << YAML::Value << *cfg.coder.rho;
  out << YAML::Key << "M_inf" << YAML::Value << cfg.coder.M_inf;
  out << YAML::Key << "Ts" << YAML::Value << cfg.coder.Ts;
  out << YAML::EndMap;

  out << YAML::Key << "sim" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "x0" << YAML::Value << YAML::Flow << cfg.sim.x0;
  if (cfg.sim.z0) out << YAML::Key << "z0" << YAML::Value << YAML::Flow << *cfg.sim.z0;
  out << YAML::Key << "t_fin" << YAML::Value << cfg.sim.t_fin;
  if (cfg.sim.dt) out << YAML::Key << "dt" << YAML::Value << *cfg.sim.dt;
  out << YAML::Key << "record_stride" << YAML::Value << cfg.sim.record_stride;
  out << YAML::Key << "transient_band" << YAML::Value << cfg.sim.transient_band;
  out << YAML::Key << "check_bound" << YAML::Value << cfg.sim.check_bound;
  out << YAML::EndMap;

  out << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rates" << YAML::Value << YAML::Flow << cfg.sweep.rates;
  out << YAML::Key << "threads" << YAML::Value << cfg.sweep.threads;
  out << YAML::EndMap;

  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "dir" << YAML::Value << YAML::DoubleQuoted << cfg.output.dir;
  out << YAML::Key << "emit_svg" << YAML::Value << cfg.output.emit_svg;
  out << YAML::Key << "emit_bitstream" << YAML::Value << cfg.output.emit_bitstream;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace qsync
