#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <yaml-cpp/exceptions.h>

#include "qsync/commands.hpp"
#include "qsync/errors.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  bool svg = false;
  int threads = 0;
};

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("-c,--config", opts.config, "YAML experiment file (defaults when omitted)");
  sub->add_option("--set", opts.overrides, "Override a key, e.g. --set coder.Ts=0.02")
      ->take_all()
      ->allow_extra_args(false);
  sub->add_option("-o,--out", opts.out, "Artifact directory (overrides output.dir)");
  sub->add_flag("--svg", opts.svg, "Write SVG plots into the output directory");
  sub->add_option("--threads", opts.threads, "Worker threads for sweeps")->check(CLI::Range(1, 1024));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized master-slave synchronization of Lurie systems over a one-bit channel"};
  app.require_subcommand(1);

  CommonOptions opts;
  using Command = int (*)(const qsync::ExperimentConfig&, qsync::CommandContext&);
  const std::vector<std::pair<std::string, std::pair<std::string, Command>>> commands = {
      {"model-check", {"Transfer function and minimum-phase check", qsync::cmd_model_check}},
      {"design", {"Passification certificate, theorem constants and rate recommendation",
                  qsync::cmd_design}},
      {"simulate", {"Closed-loop run with the one-bit coder", qsync::cmd_simulate}},
      {"sweep", {"Normalized error over a list of transmission rates", qsync::cmd_sweep}},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    add_common(sub, opts);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : qsync::kExitConfig;
  }

  try {
    qsync::ExperimentConfig cfg = opts.config.empty()
                                      ? qsync::parse_config("", opts.overrides)
                                      : qsync::load_config(opts.config, opts.overrides);
    if (opts.threads > 0) cfg.sweep.threads = opts.threads;
    if (!opts.out.empty()) cfg.output.dir = opts.out;
    const bool svg = opts.svg || cfg.output.emit_svg;
    qsync::CommandContext ctx{std::cout, std::cerr, std::filesystem::path(cfg.output.dir), svg};

    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i]->parsed()) return commands[i].second.second(cfg, ctx);
    }
  } catch (const qsync::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return qsync::kExitConfig;
  } catch (const YAML::Exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return qsync::kExitConfig;
  } catch (const qsync::FeasibilityError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return qsync::kExitInfeasible;
  }
  return qsync::kExitConfig;
}
