#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qsync/commands.hpp"
#include "qsync/errors.hpp"

namespace qsync {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("qsync_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string value_of(const std::string& report, const std::string& key) {
  for (const auto& [k, v] : parse_report(report))
    if (k == key) return v;
  return {};
}

struct Captured {
  int code = 0;
  std::string out;
  std::string err;
};

template <class Command>
Captured run(Command cmd, const ExperimentConfig& cfg, std::optional<fs::path> dir = {},
             bool svg = false) {
  std::ostringstream out, err;
  CommandContext ctx{out, err, std::move(dir), svg};
  Captured c;
  c.code = cmd(cfg, ctx);
  c.out = out.str();
  c.err = err.str();
  return c;
}

ExperimentConfig short_run(double t_fin) {
  auto cfg = default_config();
  cfg.sim.t_fin = t_fin;
  return cfg;
}

int cli(const std::string& args) {
  const std::string command = std::string(QSYNC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(FormatDouble, FullPrecisionAndSpecialValues) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(25.0), "25");
  EXPECT_EQ(format_double(INFINITY), "inf");
  EXPECT_EQ(format_double(-INFINITY), "-inf");
  EXPECT_EQ(format_double(NAN), "nan");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Report, ParsesBackInOrder) {
  Report r;
  r.add("a", 1.5);
  r.add("b", true);
  r.add("c", 7);
  r.add("d", "text with = sign");
  const auto entries = parse_report(r.str());
  ASSERT_EQ(entries.size(), 4u);
  EXPECT_EQ(entries[0].second, "1.5");
  EXPECT_EQ(entries[1].second, "true");
  EXPECT_EQ(entries[2].second, "7");
  EXPECT_EQ(entries[3].second, "text with = sign");
}

TEST(CertificateText, RoundTripsBitForBit) {
  const auto search = find_certificate(chua_build(10.0, 15.6, 0.33, 0.945), 10.0, 0.3);
  ASSERT_TRUE(search.certificate);
  const auto& cert = *search.certificate;
  const auto back = certificate_from_text(certificate_to_text(cert));
  EXPECT_EQ(back.P, cert.P);
  EXPECT_EQ(back.K, cert.K);
  EXPECT_EQ(back.eta, cert.eta);
  EXPECT_EQ(back.lambda_min, cert.lambda_min);
  EXPECT_EQ(back.residual_lmi, cert.residual_lmi);
  EXPECT_THROW(certificate_from_text("n = 2\nK = 1\n"), ConfigError);
}

TEST(ModelCheck, ChuaReport) {
  const auto c = run(cmd_model_check, default_config());
  EXPECT_EQ(c.code, kExitOk);
  EXPECT_EQ(value_of(c.out, "hmp"), "true");
  EXPECT_EQ(value_of(c.out, "tf.num"), "10 10 156");
  EXPECT_EQ(value_of(c.out, "tf.den"), "1 11 15.6 156");
  EXPECT_NEAR(std::stod(value_of(c.out, "hmp.eta0")), 0.5, 1e-12);
}

TEST(ModelCheck, ExplicitMatricesGiveIdenticalReport) {
  const auto explicit_cfg = parse_config(R"(
system:
  A: [[-10, 10, 0], [1, -1, 1], [0, -15.6, 0]]
  B: [10, 0, 0]
  C: [1, 0, 0]
)");
  EXPECT_EQ(run(cmd_model_check, explicit_cfg).out, run(cmd_model_check, default_config()).out);
}

TEST(Design, ReportsGainConstantsAndIsReproducible) {
  TempDir dir;
  const auto a = run(cmd_design, default_config(), dir.path());
  EXPECT_EQ(a.code, kExitOk);
  EXPECT_EQ(value_of(a.out, "certificate.found"), "true");
  EXPECT_NEAR(std::stod(value_of(a.out, "theorem.b0")), 122.2, 1e-12);
  EXPECT_NEAR(std::stod(value_of(a.out, "theorem.Ts_max.gain_branch")), 1.0 / 122.2, 1e-15);
  EXPECT_EQ(value_of(a.out, "verdict.contraction_conditions"), "false");
  EXPECT_EQ(value_of(a.out, "verdict.rho_rule_conflict"), "true");
  EXPECT_FALSE(value_of(a.out, "recommend.Ts").empty());
  EXPECT_TRUE(fs::exists(dir.path() / "certificate.txt"));
  const auto cert = certificate_from_text(slurp(dir.path() / "certificate.txt"));
  EXPECT_TRUE(verify_certificate(chua_build(10.0, 15.6, 0.33, 0.945), cert).passed);

  const auto b = run(cmd_design, default_config());
  EXPECT_EQ(a.out, b.out);
}

TEST(Design, ZeroGainNeverCrashes) {
  auto cfg = default_config();
  cfg.control.K = 0.0;
  const auto c = run(cmd_design, cfg);
  EXPECT_TRUE(c.code == kExitOk || c.code == kExitInfeasible);
  if (c.code == kExitInfeasible) EXPECT_FALSE(value_of(c.out, "certificate.advice").empty());
}

TEST(Design, NonMinimumPhasePlantIsInfeasible) {
  const auto cfg = parse_config(R"(
system: {A: [[0, 1, 0], [0, 0, 1], [-1, -3, -3]], B: [0, 0, 1], C: [-2, 1, 1]}
)");
  EXPECT_EQ(run(cmd_design, cfg).code, kExitInfeasible);
}

TEST(Simulate, WritesArtifactsDeterministically) {
  TempDir one, two;
  const auto cfg = short_run(30.0);
  const auto a = run(cmd_simulate, cfg, one.path(), true);
  const auto b = run(cmd_simulate, cfg, two.path(), true);
  EXPECT_EQ(a.code, kExitOk);
  EXPECT_EQ(a.out, b.out);
  for (const char* name : {"trace.csv", "bitstream.csv", "metrics.txt", "states.svg", "envelope.svg"}) {
    ASSERT_TRUE(fs::exists(one.path() / name)) << name;
    EXPECT_EQ(slurp(one.path() / name), slurp(two.path() / name)) << name;
  }
  const auto trace = slurp(one.path() / "trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')),
            "t,x1,x2,x3,z1,z2,z3,e1,e2,e3,eps,eps_bar,u,delta_q,delta_s,delta,M_k,bit,overflow");
  const auto bits = slurp(one.path() / "bitstream.csv");
  EXPECT_EQ(bits.substr(0, bits.find('\n')), "k,t,bit,M_k,eps,eps_bar");
  EXPECT_EQ(std::count(bits.begin(), bits.end(), '\n'), 1 + 751);
  EXPECT_EQ(value_of(a.out, "run.rate_bps"), "25");
}

TEST(Simulate, SynchronizedOpenLoopHasZeroQ) {
  auto cfg = short_run(20.0);
  cfg.control.K = 0.0;
  cfg.sim.z0 = cfg.sim.x0;
  cfg.coder.M0 = 1e-9;
  const auto c = run(cmd_simulate, cfg);
  EXPECT_EQ(c.code, kExitOk);
  EXPECT_EQ(std::stod(value_of(c.out, "metrics.Q")), 0.0);
}

TEST(Simulate, DivergenceHasItsOwnExitCode) {
  const auto cfg = parse_config(R"(
system: {A: [[1]], B: [1], C: [1], m0: 0, m1: 0}
control: {K: 0}
sim: {x0: [1], t_fin: 50}
)");
  const auto c = run(cmd_simulate, cfg);
  EXPECT_EQ(c.code, kExitDiverged);
  EXPECT_EQ(value_of(c.out, "run.diverged"), "true");
}

TEST(Simulate, TheoremRuleNeedsAnAdmissibleSamplingPeriod) {
  auto cfg = short_run(1.0);
  cfg.coder.rho_rule = std::string(kRhoRuleTheorem);
  EXPECT_THROW(resolve_coder(cfg), FeasibilityError);

  const auto design = run_design(cfg);
  ASSERT_TRUE(design.recommendation);
  cfg.coder.Ts = design.recommendation->Ts;
  cfg.sim.dt = cfg.coder.Ts;
  const auto coder = resolve_coder(cfg);
  EXPECT_LT(coder.rho, 1.0);
  EXPECT_GT(coder.M0, 0.0);
}

TEST(Sweep, ThreadCountDoesNotChangeOutput) {
  TempDir one, two;
  auto cfg = short_run(20.0);
  cfg.sweep.rates = {25.0, 10.0, 50.0};
  const auto a = run(cmd_sweep, cfg, one.path(), true);
  cfg.sweep.threads = 3;
  const auto b = run(cmd_sweep, cfg, two.path(), true);
  EXPECT_EQ(a.code, kExitOk);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(one.path() / "sweep.csv"), slurp(two.path() / "sweep.csv"));
  EXPECT_TRUE(fs::exists(one.path() / "sweep.svg"));
  EXPECT_EQ(a.out.substr(0, a.out.find('\n')), "R,Ts,rho,Q,bound_satisfied");
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("model-check"), kExitOk);
  EXPECT_EQ(cli("model-check --set system.p=-1"), kExitConfig);
  EXPECT_EQ(cli("model-check --config /nonexistent.yaml"), kExitConfig);
  EXPECT_EQ(cli("model-check --set coder.unknown=1"), kExitConfig);
  EXPECT_EQ(cli("frobnicate"), kExitConfig);
  EXPECT_EQ(cli("design --set control.eta=0.6"), kExitInfeasible);
  EXPECT_EQ(cli("simulate --set coder.rho_rule=theorem --set sim.t_fin=1"), kExitInfeasible);

  TempDir dir;
  const auto unstable = dir.path() / "unstable.yaml";
  std::ofstream(unstable) << "system: {A: [[1]], B: [1], C: [1]}\ncontrol: {K: 0}\n"
                             "sim: {x0: [1], t_fin: 50}\n";
  EXPECT_EQ(cli("simulate --config " + unstable.string()), kExitDiverged);
}

TEST(Cli, ConfigFileAndOverrides) {
  TempDir dir;
  const auto cfg_path = dir.path() / "exp.yaml";
  {
    auto cfg = short_run(5.0);
    std::ofstream(cfg_path) << serialize_config(cfg);
  }
  const auto out = dir.path() / "run";
  EXPECT_EQ(cli("simulate --config " + cfg_path.string() + " --set coder.Ts=0.02 --out " +
                out.string()),
            kExitOk);
  EXPECT_EQ(value_of(slurp(out / "metrics.txt"), "run.rate_bps"), "50");
}

}  // namespace
}  // namespace qsync
