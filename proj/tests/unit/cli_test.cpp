#include "cli.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace inflect::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "inflect");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("inflect-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const char kGreek[] = "παρακάμπτω\tπαρέκαμπτες\tV;2;SG;IPFV;PST\n";

TEST_F(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(invoke({}).code, kUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kUsage);
  EXPECT_EQ(invoke({"align", "--in", path("x.tsv"), "--bogus"}).code, kUsage);
  EXPECT_EQ(invoke({"evaluate", "--pred", path("x.tsv")}).code, kUsage);
  EXPECT_EQ(invoke({"--help"}).code, kOk);

  write_file(path("ell-train.tsv"), kGreek);
  write_file(path("bad.cfg"), "lr = 0.1\nnot_a_key = 3\n");
  const Result r = invoke({"train", "--low", path("ell-train.tsv"), "--dev", path("ell-train.tsv"), "--config",
                           path("bad.cfg"), "--out", path("run")});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("bad.cfg:2"), std::string::npos);
  EXPECT_EQ(invoke({"train", "--low", path("ell-train.tsv"), "--dev", path("ell-train.tsv"), "--set", "lr",
                    "--out", path("run")})
                .code,
            kUsage);
  EXPECT_EQ(invoke({"predict", "--model", path("nothing"), "--in", path("ell-train.tsv"), "--out", path("p.tsv")}).code,
            kUsage);
}

TEST_F(Cli, DataErrorsExitWithTwo) {
  EXPECT_EQ(invoke({"align", "--in", path("missing.tsv")}).code, kData);
  write_file(path("broken.tsv"), "a\tb\tV\nonly-two\tfields\n");
  const Result r = invoke({"align", "--in", path("broken.tsv")});
  EXPECT_EQ(r.code, kData);
  EXPECT_NE(r.err.find(":2"), std::string::npos);
  write_file(path("one.tsv"), "a\tb\tV\n");
  write_file(path("two.tsv"), "a\tb\tV\nc\td\tV\n");
  EXPECT_EQ(invoke({"evaluate", "--pred", path("one.tsv"), "--gold", path("two.tsv")}).code, kData);
}

TEST_F(Cli, AlignPrintsStemSpans) {
  write_file(path("deu.tsv"), "schwimmen\tgschwommen\tV;V.PTCP;PST\n");
  const Result r = invoke({"align", "--in", path("deu.tsv")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(r.out, "schwimmen\tgschwommen\t[0,4)=[1,5):schw [5,9)=[6,10):mmen\n");
}

TEST_F(Cli, EvaluateScoresAndWritesPerExampleRows) {
  write_file(path("gold.tsv"), "tema\ttemeni\tN;PL\nlo\tloso\tN;GEN\n");
  write_file(path("pred.tsv"), "tema\ttemeni\tN;PL\nlo\tlos\tN;GEN\n");
  const Result r = invoke({"evaluate", "--pred", path("pred.tsv"), "--gold", path("gold.tsv"), "--per-example",
                           path("rows.tsv")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(r.out, "0.500000\t0.500000\n");
  EXPECT_EQ(slurp(path("rows.tsv")),
            "lemma\tgold\tprediction\tcorrect\tdistance\ntema\ttemeni\ttemeni\t1\t0\nlo\tloso\tlos\t0\t1\n");
}

TEST_F(Cli, HallucinateIsSeededAndWorkerInvariant) {
  write_file(path("ell-train.tsv"), kGreek);
  ASSERT_EQ(invoke({"hallucinate", "--in", path("ell-train.tsv"), "--out", path("a.tsv"), "--n", "50"}).code, kOk);
  ASSERT_EQ(invoke({"hallucinate", "--in", path("ell-train.tsv"), "--out", path("b.tsv"), "--n", "50", "--workers",
                    "3"})
                .code,
            kOk);
  const std::string a = slurp(path("a.tsv"));
  EXPECT_EQ(a, slurp(path("b.tsv")));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 50);
}

TEST_F(Cli, MemorizationRunThroughPredictAndEvaluate) {
  write_file(path("ell-train.tsv"), kGreek);
  const Result t = invoke({"train", "--low", path("ell-train.tsv"), "--dev", path("ell-train.tsv"), "--out",
                           path("run"), "--seed", "3"});
  ASSERT_EQ(t.code, kOk) << t.err;
  for (const char* f : {"model.acc", "model.lev", "model.both", "train.log", "config.txt"})
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  const std::string config = slurp(dir_ / "run" / "config.txt");
  EXPECT_NE(config.find("seed = 3"), std::string::npos);
  const std::string log = slurp(dir_ / "run" / "train.log");
  EXPECT_EQ(log.rfind("phase\tepoch\tlr\ttrain_loss\tdev_acc\tdev_lev\tdecayed\n", 0), 0u);

  ASSERT_EQ(invoke({"predict", "--model", path("run"), "--in", path("ell-train.tsv"), "--out", path("pred.tsv")}).code,
            kOk);
  EXPECT_EQ(slurp(path("pred.tsv")), kGreek);
  const Result e = invoke({"evaluate", "--pred", path("pred.tsv"), "--gold", path("ell-train.tsv")});
  ASSERT_EQ(e.code, kOk) << e.err;
  EXPECT_EQ(e.out, "1.000000\t0.000000\n");

  // Three copies of one checkpoint ensemble to that checkpoint alone.
  fs::create_directories(dir_ / "same");
  for (const char* slot : {"model.acc", "model.lev", "model.both"})
    fs::copy_file(dir_ / "run" / "model.lev", dir_ / "same" / slot);
  fs::create_directories(dir_ / "single");
  fs::copy_file(dir_ / "run" / "model.lev", dir_ / "single" / "model.acc");
  ASSERT_EQ(invoke({"predict", "--model", path("same"), "--in", path("ell-train.tsv"), "--out", path("ens.tsv")}).code,
            kOk);
  ASSERT_EQ(invoke({"predict", "--model", path("single"), "--in", path("ell-train.tsv"), "--out", path("one.tsv"),
                    "--no-ensemble"})
                .code,
            kOk);
  EXPECT_EQ(slurp(path("ens.tsv")), slurp(path("one.tsv")));

  const Result d = invoke({"dump-attention", "--model", path("run"), "--in", path("ell-train.tsv")});
  ASSERT_EQ(d.code, kOk) << d.err;
  const nlohmann::json record = nlohmann::json::parse(d.out);
  EXPECT_EQ(record["lemma"], "παρακάμπτω");
  EXPECT_EQ(record["prediction"], "παρέκαμπτες");
  EXPECT_EQ(record["tags"].size(), 5u);
  EXPECT_EQ(record["alpha_t"].size(), 12u);  // 11 characters and EOS
  EXPECT_EQ(record["alpha_t"][0].size(), 5u);
  EXPECT_EQ(record["alpha_x"][0].size(), 10u);
}

}  // namespace
}  // namespace inflect::cli
