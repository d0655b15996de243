#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string g_cli;  // path to the command-line binary, from argv[1]
int g_run_counter = 0;

struct RunResult {
  int code = -1;
  std::string out;
};

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

RunResult run_cli(const std::string& args) {
  fs::path log = fs::path(testing::TempDir()) / ("cli_log_" + std::to_string(g_run_counter++));
  std::string cmd = "\"" + g_cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(log);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::path(testing::TempDir()) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_config(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

int count_lines(const std::string& text) {
  int lines = 0;
  for (char ch : text) {
    if (ch == '\n') ++lines;
  }
  return lines;
}

}  // namespace

TEST(Cli, ReportsVersion) {
  RunResult r = run_cli("--version");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("backstep 1.0.0"), std::string::npos);
}

TEST(Cli, SolveKernelZeroProfileWritesZeroKernel) {
  fs::path out = fresh_dir("cli_zero_kernel");
  RunResult r = run_cli("solve-kernel --lambda-preset zero --grid 21 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;

  std::string csv = read_file(out / "kernel.csv");
  EXPECT_EQ(count_lines(csv), 1 + 21 * 22 / 2);
  std::istringstream rows(csv);
  std::string line;
  std::getline(rows, line);
  EXPECT_EQ(line, "i,j,x,y,k");
  while (std::getline(rows, line)) {
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0") << line;
  }

  auto res = nlohmann::json::parse(read_file(out / "residuals.json"));
  EXPECT_DOUBLE_EQ(res.at("pde_residual_sup").get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(res.at("lambda_bar").get<double>(), 0.0);

  auto run = nlohmann::json::parse(read_file(out / "run.json"));
  EXPECT_EQ(run.at("tool_version").get<std::string>(), "backstep 1.0.0");
  EXPECT_EQ(run.at("command").get<std::string>(), "solve-kernel");
}

TEST(Cli, SolveKernelIsByteDeterministic) {
  fs::path a = fresh_dir("cli_det_a");
  fs::path b = fresh_dir("cli_det_b");
  std::string args = "solve-kernel --lambda-preset gamma5 --method integral --grid 31 --out ";
  ASSERT_EQ(run_cli(args + a.string()).code, 0);
  ASSERT_EQ(run_cli(args + b.string()).code, 0);
  EXPECT_EQ(read_file(a / "kernel.csv"), read_file(b / "kernel.csv"));
  EXPECT_EQ(read_file(a / "residuals.json"), read_file(b / "residuals.json"));
  auto res = nlohmann::json::parse(read_file(a / "residuals.json"));
  EXPECT_EQ(res.at("method").get<std::string>(), "integral");
}

TEST(Cli, SolveKernelReadsLambdaFiles) {
  fs::path dir = fresh_dir("cli_lambda_file");
  fs::path lam = dir / "lambda.txt";
  {
    std::ofstream f(lam);
    for (int i = 0; i < 21; ++i) f << "2.0\n";
  }
  RunResult ok = run_cli("solve-kernel --lambda-file " + lam.string() + " --grid 21 --out " +
                         (dir / "out").string());
  EXPECT_EQ(ok.code, 0) << ok.out;

  RunResult wrong = run_cli("solve-kernel --lambda-file " + lam.string() + " --grid 31 --out " +
                            (dir / "bad").string());
  EXPECT_EQ(wrong.code, 2);
  RunResult both = run_cli("solve-kernel --lambda-preset zero --lambda-file " + lam.string() +
                           " --grid 21 --out " + (dir / "both").string());
  EXPECT_EQ(both.code, 2);
  RunResult neither = run_cli("solve-kernel --grid 21 --out " + (dir / "none").string());
  EXPECT_EQ(neither.code, 2);
}

TEST(Cli, RejectsUnknownFlagsAndConfigKeys) {
  fs::path dir = fresh_dir("cli_bad_input");
  EXPECT_EQ(run_cli("solve-kernel --nope --out " + dir.string()).code, 2);
  EXPECT_EQ(run_cli("frobnicate").code, 2);

  fs::path bad = dir / "bad.json";
  write_config(bad, R"({"simulation": {"bogus": 1}})");
  RunResult r = run_cli("simulate --preset closedloop-gamma5 --config " + bad.string() +
                        " --out " + (dir / "out").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("unknown config key"), std::string::npos);

  fs::path skew = dir / "skew.json";
  write_config(skew, R"({"schema_version": 2})");
  EXPECT_EQ(run_cli("simulate --preset closedloop-gamma5 --config " + skew.string() + " --out " +
                    (dir / "out2").string())
                .code,
            2);

  fs::path garbled = dir / "garbled.json";
  write_config(garbled, "{not json");
  EXPECT_EQ(run_cli("simulate --preset closedloop-gamma5 --config " + garbled.string() +
                    " --out " + (dir / "out3").string())
                .code,
            2);
}

TEST(Cli, MissingDataDirectoryExitsWithIoCode) {
  fs::path dir = fresh_dir("cli_missing_data");
  RunResult r = run_cli("train --data " + (dir / "nowhere").string() + " --out-model " +
                        (dir / "model").string());
  EXPECT_EQ(r.code, 4);
}

TEST(Cli, AnalyzeSelfTestPrintsCertificateValues) {
  RunResult r = run_cli("analyze --self-test");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("M(0,0) = 1"), std::string::npos);
  EXPECT_NE(r.out.find("epsilon_star_0"), std::string::npos);

  fs::path out = fresh_dir("cli_self_test");
  ASSERT_EQ(run_cli("analyze --self-test --out " + out.string()).code, 0);
  auto j = nlohmann::json::parse(read_file(out / "stability.json"));
  EXPECT_DOUBLE_EQ(j.at("overshoot_M_0_0").get<double>(), 1.0);
  EXPECT_TRUE(j.at("vacuous_at_50").get<bool>());
}

TEST(Cli, SimulateClosedLoopWritesTraceAndCertificate) {
  fs::path dir = fresh_dir("cli_sim_closed");
  fs::path cfg = dir / "tiny.json";
  write_config(cfg, R"({
    "simulation": {"n_points": 41, "dt": 1e-3, "T": 0.01, "snapshot_stride": 5}
  })");
  RunResult r = run_cli("simulate --preset closedloop-gamma5 --config " + cfg.string() +
                        " --out " + (dir / "out").string());
  ASSERT_EQ(r.code, 0) << r.out;

  std::string trace = read_file(dir / "out" / "trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "t,l2_norm,control");
  EXPECT_EQ(count_lines(trace), 1 + 11);  // T/dt + 1 samples
  EXPECT_EQ(count_lines(read_file(dir / "out" / "snapshots.csv")), 1 + 3);

  auto summary = nlohmann::json::parse(read_file(dir / "out" / "summary.json"));
  EXPECT_EQ(summary.at("mode").get<std::string>(), "closed");
  EXPECT_GT(summary.at("l2_ratio").get<double>(), 0.0);
  ASSERT_TRUE(summary.contains("certificate"));
  EXPECT_EQ(summary.at("certificate").at("envelope_violations").get<long>(), 0);

  auto run = nlohmann::json::parse(read_file(dir / "out" / "run.json"));
  EXPECT_EQ(run.at("config").at("simulation").at("n_points").get<int>(), 41);
  EXPECT_EQ(run.at("command").get<std::string>(), "simulate");
}

TEST(Cli, SimulateObserverTracksErrorSeries) {
  fs::path dir = fresh_dir("cli_sim_observer");
  fs::path cfg = dir / "tiny.json";
  write_config(cfg, R"({
    "simulation": {"n_points": 41, "dt": 1e-3, "T": 0.01, "snapshot_stride": 5}
  })");
  RunResult r = run_cli("simulate --preset observer-c20 --config " + cfg.string() + " --out " +
                        (dir / "out").string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::string trace = read_file(dir / "out" / "trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "t,l2_norm,control,err_norm");
  EXPECT_TRUE(fs::exists(dir / "out" / "est_snapshots.csv"));
  auto summary = nlohmann::json::parse(read_file(dir / "out" / "summary.json"));
  EXPECT_GT(summary.at("err_initial").get<double>(), 0.0);
  EXPECT_TRUE(summary.contains("certificate"));
}

TEST(Cli, PipelineRunsEndToEnd) {
  fs::path dir = fresh_dir("cli_pipeline");
  fs::path data = dir / "data";
  fs::path model = dir / "model";

  RunResult gen = run_cli("gen-data --out " + data.string() + " --n 3 --grid 11 --c 5 --seed 1");
  ASSERT_EQ(gen.code, 0) << gen.out;
  EXPECT_NE(gen.out.find("samples 3 grid 11"), std::string::npos);
  EXPECT_TRUE(fs::exists(data / "manifest.json"));
  EXPECT_TRUE(fs::exists(data / "data.bin"));

  fs::path cfg = dir / "train.json";
  write_config(cfg, R"({
    "training": {"epochs": 2, "batch_size": 2},
    "model": {"branch_hidden": [8], "trunk_hidden": [8], "p": 4}
  })");
  RunResult tr = run_cli("train --data " + data.string() + " --config " + cfg.string() +
                         " --out-model " + model.string());
  ASSERT_EQ(tr.code, 0) << tr.out;
  EXPECT_NE(tr.out.find("trained 2 epochs"), std::string::npos);
  EXPECT_TRUE(fs::exists(model / "model.json"));
  EXPECT_TRUE(fs::exists(model / "model.bin"));
  EXPECT_TRUE(fs::exists(model / "optim.bin"));
  EXPECT_EQ(count_lines(read_file(model / "loss.csv")), 1 + 3);  // untrained row + 2 epochs

  RunResult more = run_cli("train --data " + data.string() + " --config " + cfg.string() +
                           " --out-model " + model.string() + " --resume");
  ASSERT_EQ(more.code, 0) << more.out;

  RunResult an = run_cli("analyze --model " + model.string() + " --data " + data.string() +
                         " --out " + (dir / "analysis").string());
  ASSERT_EQ(an.code, 0) << an.out;
  EXPECT_NE(an.out.find("held-out 1 samples"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "analysis" / "epsilons.csv"));
  auto stab = nlohmann::json::parse(read_file(dir / "analysis" / "stability.json"));
  EXPECT_TRUE(stab.contains("vacuous_bound"));

  fs::path sim_cfg = dir / "sim.json";
  write_config(sim_cfg, R"({"simulation": {"n_points": 41, "dt": 1e-3, "T": 0.01}})");
  RunResult sim = run_cli("simulate --mode closed --lambda-preset gamma5c20 --gain operator:" +
                          model.string() + " --config " + sim_cfg.string() + " --out " +
                          (dir / "sim").string());
  ASSERT_EQ(sim.code, 0) << sim.out;
  auto summary = nlohmann::json::parse(read_file(dir / "sim" / "summary.json"));
  EXPECT_EQ(summary.at("gain").get<std::string>(), "operator:" + model.string());
  EXPECT_GT(summary.at("certificate").at("epsilon").get<double>(), 0.0);

  RunResult bench = run_cli("bench --model " + model.string() +
                            " --grid-list 11,15 --samples 20 --reps 1 --out " +
                            (dir / "bench").string());
  ASSERT_EQ(bench.code, 0) << bench.out;
  auto bj = nlohmann::json::parse(read_file(dir / "bench" / "bench.json"));
  ASSERT_TRUE(bj.contains("per_grid"));
  EXPECT_EQ(bj.at("per_grid").size(), 2u);
  EXPECT_TRUE(bj.contains("solver_exponent"));
}

TEST(Cli, SimulateValidatesModeAndPreset) {
  fs::path dir = fresh_dir("cli_sim_validate");
  EXPECT_EQ(run_cli("simulate --preset nope --out " + dir.string()).code, 2);
  EXPECT_EQ(run_cli("simulate --out " + dir.string()).code, 2);
  EXPECT_EQ(run_cli("simulate --mode closed --lambda-preset gamma5 --gain what:x --out " +
                    dir.string())
                .code,
            2);
}

int main(int argc, char** argv) {
  testing::InitGoogleTest(&argc, argv);
  if (argc > 1) g_cli = argv[1];
  if (g_cli.empty()) {
    std::fprintf(stderr, "usage: cli_test <path-to-cli-binary>\n");
    return 1;
  }
  return RUN_ALL_TESTS();
}
