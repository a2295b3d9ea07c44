#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qsync/bounds.hpp"
#include "qsync/config.hpp"
#include "qsync/hybrid_sim.hpp"
#include "qsync/passify.hpp"

namespace qsync {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitInfeasible = 3,
  kExitDiverged = 4,
};

/// Full-precision decimal ("%.17g"), with "inf", "-inf" and "nan".
std::string format_double(double v);

/// Flat "key = value" report, one entry per line, in insertion order.
class Report {
 public:
  void add(std::string key, double value);
  void add(std::string key, bool value);
  void add(std::string key, long long value);
  void add(std::string key, int value) { add(std::move(key), static_cast<long long>(value)); }
  void add(std::string key, std::string value);
  void add(std::string key, const char* value) { add(std::move(key), std::string(value)); }

  std::string str() const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Parses "key = value" lines back into pairs.
std::vector<std::pair<std::string, std::string>> parse_report(std::string_view text);

/// Certificate as "key = value" lines with hexadecimal floats; parsing the
/// text restores every field bit for bit.
std::string certificate_to_text(const PassificationCertificate& cert);
PassificationCertificate certificate_from_text(std::string_view text);

void write_trace_csv(std::ostream& os, const SimTrace& trace);
void write_bitstream_csv(std::ostream& os, const SimTrace& trace);
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows);

/// Certificate, theorem constants and recommendation for a configuration.
struct DesignOutcome {
  HmpReport hmp;
  double L_phi = 0.0;
  double eta_prime = 0.0;
  CertificateSearch search;
  std::optional<TheoremConstants> constants;
  std::optional<DesignRecommendation> recommendation;
};

/// Throws StructuralInfeasibility for non-HMP plants. A failed certificate
/// search is reported through search.advice with constants left empty.
DesignOutcome run_design(const ExperimentConfig& cfg);

/// Coder for the configured rho rule; the "theorem" rule runs the design
/// chain and throws FeasibilityError when it cannot be satisfied.
CoderConfig resolve_coder(const ExperimentConfig& cfg);

struct CommandContext {
  std::ostream& out;
  std::ostream& err;
  /// Directory for artifacts; nothing is written when empty.
  std::optional<std::filesystem::path> out_dir;
  bool svg = false;
};

int cmd_model_check(const ExperimentConfig& cfg, CommandContext& ctx);
int cmd_design(const ExperimentConfig& cfg, CommandContext& ctx);
int cmd_simulate(const ExperimentConfig& cfg, CommandContext& ctx);
int cmd_sweep(const ExperimentConfig& cfg, CommandContext& ctx);

}  // namespace qsync
