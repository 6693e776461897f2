#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dpa/dpa.hpp"

namespace fs = std::filesystem;

namespace dpa {
namespace {

std::string g_cli;

struct CliResult {
  int code = -1;
  std::string out, err;
};

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("dpa_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args, const std::string& env = "") {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = env + (env.empty() ? "" : " ") + quote(g_cli) + " " + args + " > " + quote(out) + " 2> " +
                            quote(err);
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  /// Small noisy data set in `name`/ with gt.txt and models/.
  fs::path synth(const std::string& name, int scenes = 3) {
    const fs::path d = dir_ / name;
    const auto r = run("synth --scenes " + std::to_string(scenes) + " --seed 7 --noise-rot 0.1 --kappa 10 --outliers 0.1 --out " +
                       quote(d));
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }

  fs::path dir_;
};

TEST_F(Cli, SynthWritesScenesGroundTruthAndModels) {
  const fs::path d = dir_ / "d";
  const auto r = run("synth --scenes 5 --seed 7 --noise-rot 0.1 --out " + quote(d) + " --gt " + quote(d / "gt.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  for (int i = 0; i < 5; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04d.dpm", i);
    EXPECT_NO_THROW(io::read_dpm(d / name)) << name;
  }
  EXPECT_FALSE(fs::exists(d / "scene_0005.dpm"));
  const auto gts = io::read_poses(d / "gt.txt");
  EXPECT_GE(gts.size(), 5u);
  for (int cls = 1; cls <= 5; ++cls) EXPECT_TRUE(fs::exists(d / "models" / (std::to_string(cls) + ".xyz")));
  std::size_t lines = 0;
  for (char c : r.out) lines += c == '\n';
  EXPECT_EQ(lines, 5u);
  EXPECT_EQ(r.out.rfind("scene=0 ", 0), 0u);
}

TEST_F(Cli, SynthIsDeterministicAcrossRunsAndJobs) {
  const auto a = run("synth --scenes 4 --seed 3 --noise-rot 0.2 --noise-dir 0.05 --out " + quote(dir_ / "a"));
  const auto b = run("synth --scenes 4 --seed 3 --noise-rot 0.2 --noise-dir 0.05 --jobs 4 --out " + quote(dir_ / "b"));
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(a.out, b.out);
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "a")) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / fs::relative(e.path(), dir_ / "a"))) << e.path();
  }
  const auto c = run("synth --scenes 4 --seed 4 --noise-rot 0.2 --out " + quote(dir_ / "c"));
  EXPECT_NE(slurp(dir_ / "a" / "scene_0000.dpm"), slurp(dir_ / "c" / "scene_0000.dpm"));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("synth --scenes 0 --out " + quote(dir_ / "x")).code, 2);
  EXPECT_EQ(run("synth --scenes 2 --out " + quote(dir_ / "x") + " --bogus").code, 2);
  EXPECT_EQ(run("synth --scenes 2 --out " + quote(dir_ / "x") + " --outliers 1").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, AggregateIsDeterministicAndParallelSafe) {
  const fs::path d = synth("d", 4);
  const std::string base = "aggregate --in " + quote(d) + " --method wransac:0.2 --seed 1 --out ";
  ASSERT_EQ(run(base + quote(dir_ / "p1.txt")).code, 0);
  ASSERT_EQ(run(base + quote(dir_ / "p2.txt")).code, 0);
  ASSERT_EQ(run(base + quote(dir_ / "p3.txt") + " --jobs 3").code, 0);
  const std::string p1 = slurp(dir_ / "p1.txt");
  EXPECT_FALSE(p1.empty());
  EXPECT_EQ(p1, slurp(dir_ / "p2.txt"));
  EXPECT_EQ(p1, slurp(dir_ / "p3.txt"));
  ASSERT_EQ(run("aggregate --in " + quote(d) + " --method wransac:0.2 --seed 2 --out " + quote(dir_ / "p4.txt")).code, 0);
  EXPECT_EQ(io::read_poses(dir_ / "p4.txt").size(), io::read_poses(dir_ / "p1.txt").size());
}

TEST_F(Cli, AggregateMatchesLibraryComposition) {
  const fs::path d = synth("d", 2);
  ASSERT_EQ(run("aggregate --in " + quote(d / "scene_0000.dpm") + " " + quote(d / "scene_0001.dpm") +
                " --method pruned:0.75 --out " + quote(dir_ / "p.txt"))
                .code,
            0);
  std::vector<PoseRecord> expected;
  for (int i = 0; i < 2; ++i) {
    const auto dpm = io::read_dpm(d / ("scene_000" + std::to_string(i) + ".dpm"));
    PipelineConfig cfg;
    cfg.method = Pruned{0.75, Weighting::Norm};
    for (const auto& p : estimate_poses(dpm, cfg, derive_seed(0, static_cast<std::uint64_t>(i))).poses)
      expected.push_back({i, p});
  }
  EXPECT_EQ(slurp(dir_ / "p.txt"), io::format_poses(expected));
}

TEST_F(Cli, AggregateRejectsBadMethodsAndInputs) {
  const fs::path d = synth("d", 1);
  for (const char* m : {"ransac:5", "pruned:", "pruned:1.5", "markley:bogus", "average", "wransac:0"}) {
    EXPECT_EQ(run("aggregate --in " + quote(d) + " --method " + m + " --out " + quote(dir_ / "p.txt")).code, 2) << m;
  }
  EXPECT_FALSE(fs::exists(dir_ / "p.txt"));
  EXPECT_EQ(run("aggregate --in " + quote(dir_ / "missing.dpm") + " --out " + quote(dir_ / "p.txt")).code, 3);

  // One truncated input: the run fails and no pose file appears.
  fs::copy_file(d / "scene_0000.dpm", dir_ / "scene_0001.dpm");
  const std::string bytes = slurp(d / "scene_0000.dpm");
  std::ofstream(dir_ / "scene_0002.dpm", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_EQ(run("aggregate --in " + quote(dir_ / "scene_0001.dpm") + " " + quote(dir_ / "scene_0002.dpm") + " --out " +
                quote(dir_ / "p.txt"))
                .code,
            3);
  EXPECT_FALSE(fs::exists(dir_ / "p.txt"));
}

TEST_F(Cli, EmptyObjectIsReportedAndOmitted) {
  SceneConfig cfg;
  cfg.models = default_models(0);
  cfg.min_objects = cfg.max_objects = 2;
  const Scene scene = sample_scene(cfg, 11);
  DensePredictionMap dpm = render_dense(scene);
  const int dropped = scene.objects[0].pose.class_id;
  for (int r = 0; r < dpm.height(); ++r)
    for (int c = 0; c < dpm.width(); ++c)
      if (dpm.label(r, c) == dropped) dpm.set_quaternion(r, c, {0, 0, 0, 0});
  io::write_dpm(dpm, dir_ / "scene_0003.dpm");

  const auto r = run("aggregate --in " + quote(dir_ / "scene_0003.dpm") + " --out " + quote(dir_ / "p.txt"));
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("omitted"), std::string::npos) << r.err;
  const auto poses = io::read_poses(dir_ / "p.txt");
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_EQ(poses[0].scene_id, 3);
  EXPECT_EQ(poses[0].pose.class_id, scene.objects[1].pose.class_id);
}

TEST_F(Cli, EvaluatePerfectAndOffsetPredictions) {
  const fs::path d = synth("d", 3);
  const auto gts = io::read_poses(d / "gt.txt");
  const std::string common = " --gt " + quote(d / "gt.txt") + " --models " + quote(d / "models") + " --format kv";

  const auto perfect = run("evaluate --pred " + quote(d / "gt.txt") + common);
  ASSERT_EQ(perfect.code, 0) << perfect.err;
  EXPECT_NE(perfect.out.find("class=ALL auc_p=100.0 auc_s=100.0"), std::string::npos) << perfect.out;

  auto shifted = gts;
  for (auto& r : shifted) r.pose.t.x += 0.05;
  io::write_poses(shifted, dir_ / "shifted.txt");
  const auto offset = run("evaluate --pred " + quote(dir_ / "shifted.txt") + common);
  ASSERT_EQ(offset.code, 0);
  const auto pos = offset.out.find("class=ALL auc_p=");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_NEAR(std::stod(offset.out.substr(pos + 16)), 50.0, 0.5);

  const auto table = run("evaluate --pred " + quote(d / "gt.txt") + " --gt " + quote(d / "gt.txt") + " --models " +
                         quote(d / "models"));
  EXPECT_EQ(table.code, 0);
  EXPECT_NE(table.out.find("ALL"), std::string::npos);
}

TEST_F(Cli, EvaluateErrors) {
  const fs::path d = synth("d", 3);
  fs::copy(d / "models", dir_ / "partial");
  const int cls = io::read_poses(d / "gt.txt").front().pose.class_id;
  fs::remove(dir_ / "partial" / (std::to_string(cls) + ".xyz"));
  const std::string args = "evaluate --pred " + quote(d / "gt.txt") + " --gt " + quote(d / "gt.txt");
  EXPECT_EQ(run(args + " --models " + quote(dir_ / "partial")).code, 5);
  EXPECT_EQ(run(args + " --models " + quote(d / "models") + " --sym 1,x").code, 2);
  EXPECT_EQ(run(args + " --models " + quote(d / "models") + " --format json").code, 2);
  EXPECT_EQ(run("evaluate --pred " + quote(dir_ / "none.txt") + " --gt " + quote(d / "gt.txt") + " --models " +
                quote(d / "models"))
                .code,
            3);
  std::ofstream(dir_ / "bad.txt") << "scene=0 class=1 q=1,0,0,0 conf=1\n";
  EXPECT_EQ(run("evaluate --pred " + quote(dir_ / "bad.txt") + " --gt " + quote(d / "gt.txt") + " --models " +
                quote(d / "models"))
                .code,
            3);
}

TEST_F(Cli, EvaluateSymOverride) {
  const fs::path d = synth("d", 3);
  const std::string args = "evaluate --pred " + quote(d / "gt.txt") + " --gt " + quote(d / "gt.txt") + " --models " +
                           quote(d / "models") + " --format kv";
  const auto none = run(args + " --sym ''");
  ASSERT_EQ(none.code, 0) << none.err;
  EXPECT_NE(none.out.find("sym_auc_s=nan"), std::string::npos) << none.out;
}

TEST_F(Cli, LossCheck) {
  const auto q = run("losscheck --loss qloss --grad-check --trials 1000");
  ASSERT_EQ(q.code, 0) << q.out;
  const auto pos = q.out.find("max_grad_rel_err=");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(q.out.substr(pos + 17)), 1e-4);

  const auto sm = run("losscheck --loss smloss --trials 20");
  EXPECT_EQ(sm.code, 0);
  EXPECT_NE(sm.out.find("ring_branch=sloss"), std::string::npos) << sm.out;

  EXPECT_EQ(run("losscheck --loss bogus").code, 2);
  EXPECT_EQ(run("losscheck --loss qloss --trials 0").code, 2);
}

double median_of(const std::string& out, const std::string& stage) {
  const std::string key = "stage=" + stage + " median_ms=";
  const auto pos = out.find(key);
  return pos == std::string::npos ? -1 : std::stod(out.substr(pos + key.size()));
}

TEST_F(Cli, BenchReportsStagesAndRejectsZeroIters) {
  const fs::path d = synth("d", 1);
  const std::string in = " --in " + quote(d / "scene_0000.dpm");
  const auto naive = run("bench" + in + " --method naive --iters 50");
  ASSERT_EQ(naive.code, 0) << naive.err;
  for (const char* stage : {"load", "hough", "aggregate"}) EXPECT_GT(median_of(naive.out, stage), 0) << stage;
  const auto wr = run("bench" + in + " --method wransac:0.2 --iters 50");
  ASSERT_EQ(wr.code, 0);
  EXPECT_GE(median_of(wr.out, "aggregate"), median_of(naive.out, "aggregate"));

  EXPECT_EQ(run("bench" + in + " --iters 0").code, 2);
  EXPECT_EQ(run("bench --in " + quote(dir_ / "none.dpm")).code, 3);
}

TEST_F(Cli, LogLevelOnlyAffectsErrorStream) {
  const fs::path d = synth("d", 2);
  const std::string args = "aggregate --in " + quote(d) + " --out " + quote(dir_ / "p.txt");
  const auto quiet = run(args, "DPA_LOG=error");
  const auto loud = run(args, "DPA_LOG=debug");
  ASSERT_EQ(quiet.code, 0);
  ASSERT_EQ(loud.code, 0);
  EXPECT_EQ(quiet.out, loud.out);
  EXPECT_TRUE(quiet.err.empty()) << quiet.err;
  EXPECT_NE(loud.err.find("info"), std::string::npos);
}

}  // namespace
}  // namespace dpa

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path to dpa binary>\n");
    return 2;
  }
  dpa::g_cli = fs::absolute(argv[1]).string();
  return RUN_ALL_TESTS();
}
