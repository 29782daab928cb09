#include "doctest.h"

#include <fstream>
#include <sstream>

#include "har/cli.hpp"
#include "har/csv.hpp"
#include "har/pipeline.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace har;
using har::testing::code_of;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "har");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const char* kTinyConfig =
    "# small and quick\n"
    "epochs = 2\n"
    "batch_size = 16\n"
    "block_widths = 8,8,8\n"
    "max_lr = 0.05\n"
    "seed = 3\n";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({}).code == cli::kExitUsage);
  const auto bad = run({"synth"});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(bad.err.find("--out") != std::string::npos);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("runtime errors exit with 1 and name the file") {
  const auto dir = har::testing::scratch_dir("cli_missing");
  const auto r = run({"evaluate", "--manifest", (dir / "manifest.csv").string(), "--checkpoint",
                      (dir / "nope.ckpt").string(), "--out", (dir / "eval").string()});
  CHECK(r.code == cli::kExitRuntime);
  CHECK(r.err.find("nope.ckpt") != std::string::npos);

  const auto r2 = run({"split", "--manifest", (dir / "absent.csv").string(), "--out", (dir / "f.csv").string()});
  CHECK(r2.code == cli::kExitRuntime);
  CHECK(r2.err.find("absent.csv") != std::string::npos);

  const auto r3 = run({"train", "--set", "colour=blue", "--manifest", "x"});
  CHECK(r3.code == cli::kExitRuntime);
  CHECK(r3.err.find("colour") != std::string::npos);
}

TEST_CASE("config text round trip") {
  auto cfg = parse_config_text(kTinyConfig);
  CHECK(cfg.train.epochs == 2);
  CHECK(cfg.model.block_widths == std::vector<int>{8, 8, 8});
  cfg.set("folds", "kfold");
  cfg.set("kfold_k", "3");
  cfg.set("filter", "max-confidence");
  cfg.set("metric_mode", "per-subject");
  cfg.set("manifest", "/data/m.csv");
  const auto text = serialize_config(cfg);
  const auto back = parse_config_text(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.folds == FoldKind::KFold);
  CHECK(back.kfold_k == 3);
  CHECK(back.filter == FilterVariant::MaxConfidence);
  CHECK(back.metric_mode == MetricMode::PerSubject);

  CHECK(code_of([] { parse_config_text("colour = blue\n"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { parse_config_text("epochs = many\n"); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([] { parse_config_text("epochs\n"); }) == ErrorCode::InvalidConfig);
  const auto rel = parse_config_text("manifest = data/m.csv\n", "/base");
  CHECK(rel.manifest == fs::path("/base/data/m.csv"));
}

TEST_CASE("end to end through the command line") {
  const auto dir = har::testing::scratch_dir("cli_e2e");
  const auto data = dir / "data";
  REQUIRE(run({"synth", "--out", data.string(), "--subjects", "5", "--per-class", "1", "--duration", "20",
               "--seed", "11", "--groups", "A,B"})
              .code == 0);
  const auto manifest = (data / "manifest.csv").string();
  REQUIRE(fs::exists(manifest));
  {
    std::ofstream(dir / "tiny.cfg") << kTinyConfig;
  }
  const auto cfg = (dir / "tiny.cfg").string();
  const auto out = (dir / "run").string();

  REQUIRE(run({"split", "--config", cfg, "--manifest", manifest, "--out", (dir / "folds.csv").string()}).code == 0);
  const auto tr = run({"train", "--config", cfg, "--manifest", manifest, "--folds-file", (dir / "folds.csv").string(),
                       "--out", out});
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  CHECK(tr.out.find("fold 0") != std::string::npos);
  const auto ckpt = (dir / "run" / "model.ckpt").string();
  REQUIRE(fs::exists(ckpt));
  CHECK(fs::exists(dir / "run" / "report.csv"));
  CHECK(fs::exists(dir / "run" / "run.cfg"));

  const auto preds = (dir / "preds.csv").string();
  REQUIRE(run({"predict", "--config", cfg, "--manifest", manifest, "--checkpoint", ckpt, "--out", preds}).code == 0);
  CHECK(slurp(preds).rfind(kPredictionsHeader, 0) == 0);

  const auto from_file = run({"evaluate", "--config", cfg, "--manifest", manifest, "--predictions", preds, "--out",
                              (dir / "eval_file").string(), "--gait"});
  const auto in_proc = run({"evaluate", "--config", cfg, "--manifest", manifest, "--checkpoint", ckpt, "--out",
                            (dir / "eval_proc").string(), "--gait"});
  REQUIRE(from_file.code == 0);
  REQUIRE(in_proc.code == 0);
  CHECK(from_file.out == in_proc.out);
  CHECK(from_file.out.find("gait accuracy") != std::string::npos);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(dir / "eval_file")) {
    CHECK(slurp(e.path()) == slurp(dir / "eval_proc" / e.path().filename()));
    ++compared;
  }
  CHECK(compared >= 8);
  CHECK(slurp(dir / "eval_file" / "metrics_activity.csv").rfind("metric,class,value,undefined\n", 0) == 0);

  const auto raw = run({"evaluate", "--config", cfg, "--manifest", manifest, "--predictions", preds, "--out",
                        (dir / "eval_raw").string(), "--raw", "--metric-mode", "per-subject"});
  CHECK(raw.code == 0);

  const auto bouts_dir = dir / "bouts";
  REQUIRE(run({"bouts", "--config", cfg, "--manifest", manifest, "--predictions", preds, "--out", bouts_dir.string()})
              .code == 0);
  CHECK(slurp(bouts_dir / "bouts.csv").rfind("recording_id,group,t_start,t_end,duration\n", 0) == 0);
  const auto summary = parse_subject_summary_csv(slurp(bouts_dir / "subject_means.csv"));
  CHECK(summary.size() == 5);

  // stats on a summary with known means
  const auto sfile = dir / "summary.csv";
  {
    std::ofstream(sfile) << "subject_id,group_tag,gait_bouts,mean_duration\n"
                            "s1,A,3,10\ns2,A,2,11\ns3,A,4,12\ns4,B,5,2\ns5,B,6,3\ns6,B,2,4\n";
  }
  const auto st = run({"stats", "--summary", sfile.string(), "--pair", "A:B", "--method", "exact"});
  REQUIRE(st.code == 0);
  CHECK(st.out == "pair,n1,n2,U,p,method,significant\nA_vs_B,3,3,9,0.1,exact,0\n");
  CHECK(run({"stats", "--summary", sfile.string(), "--pair", "AB"}).code == cli::kExitUsage);
  CHECK(run({"stats", "--summary", sfile.string(), "--pair", "A:Z"}).code == cli::kExitRuntime);
}
