#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qsync/codec.hpp"
#include "qsync/hybrid_sim.hpp"
#include "qsync/lurie.hpp"

namespace qsync {

inline constexpr std::string_view kRhoRuleExp = "exp(-eta*Ts)";
inline constexpr std::string_view kRhoRuleFixed = "fixed";
inline constexpr std::string_view kRhoRuleTheorem = "theorem";

/// Either Chua parameters (p, q) or explicit (A, B, C); m0, m1 always.
struct SystemBlock {
  std::optional<double> p = 10.0;
  std::optional<double> q = 15.6;
  std::optional<std::vector<std::vector<double>>> A;
  std::optional<std::vector<double>> B;
  std::optional<std::vector<double>> C;
  double m0 = 0.33;
  double m1 = 0.945;
  bool operator==(const SystemBlock&) const = default;
};

struct ControlBlock {
  double K = 10.0;
  double eta = 0.3;
  std::optional<double> eta_prime;  ///< defaults to eta / 2
  std::optional<double> W0;         ///< defaults to sqrt(e0^T P e0 / 2)
  bool operator==(const ControlBlock&) const = default;
};

struct CoderBlock {
  double M0 = 5.0;
  std::string rho_rule{kRhoRuleExp};
  std::optional<double> rho;  ///< required by the "fixed" rule
  double M_inf = 0.0;
  double Ts = 0.04;
  bool operator==(const CoderBlock&) const = default;
};

struct SimBlock {
  std::vector<double> x0{3.0, -1.0, 0.3};
  std::optional<std::vector<double>> z0;  ///< defaults to the origin
  double t_fin = 1000.0;
  std::optional<double> dt;  ///< defaults to default_dt(Ts)
  int record_stride = 10;
  double transient_band = 0.1;
  bool check_bound = false;
  bool operator==(const SimBlock&) const = default;
};

struct SweepBlock {
  std::vector<double> rates{10.0, 12.5, 15.0, 17.5, 20.0, 22.5, 25.0, 27.5, 30.0,
                            32.5, 35.0, 37.5, 40.0, 42.5, 45.0, 47.5, 50.0};
  int threads = 1;
  bool operator==(const SweepBlock&) const = default;
};

struct OutputBlock {
  std::string dir = "out";
  bool emit_svg = false;
  bool emit_bitstream = true;
  bool operator==(const OutputBlock&) const = default;
};

/// A complete experiment. Defaults reproduce the Chua synchronization run
/// at 25 bit/s.
struct ExperimentConfig {
  SystemBlock system;
  ControlBlock control;
  CoderBlock coder;
  SimBlock sim;
  SweepBlock sweep;
  OutputBlock output;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig default_config();

/// Parses YAML text, applies "block.key=value" overrides, and validates.
/// Unknown blocks or keys are errors. Throws ConfigError.
ExperimentConfig parse_config(std::string_view text,
                              std::span<const std::string> overrides = {});
ExperimentConfig load_config(const std::string& path,
                             std::span<const std::string> overrides = {});

std::string serialize_config(const ExperimentConfig& cfg);

/// Re-checks every invariant; throws ConfigError naming the offending field.
void validate_config(const ExperimentConfig& cfg);

LurieSystem build_system(const ExperimentConfig& cfg);
double resolved_eta_prime(const ExperimentConfig& cfg);
Eigen::VectorXd initial_master(const ExperimentConfig& cfg);
Eigen::VectorXd initial_slave(const ExperimentConfig& cfg);

/// Coder config for the "exp(-eta*Ts)" and "fixed" rules. The "theorem" rule
/// needs a certificate and is resolved by the design chain instead.
CoderConfig build_coder(const ExperimentConfig& cfg);

/// SimConfig with the given coder; dt resolved from the config or default_dt.
SimConfig build_sim_config(const ExperimentConfig& cfg, const CoderConfig& coder);

}  // namespace qsync
