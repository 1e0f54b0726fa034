#include "hights/cli.hpp"
#include "tiny.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace hights;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "hights");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("hights_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_ / "Toy");
        write_tsv(hights::testing::tiny_dataset(24, 1), dir_ / "Toy" / "Toy_TRAIN.tsv");
        write_tsv(hights::testing::tiny_dataset(10, 2), dir_ / "Toy" / "Toy_TEST.tsv");
        std::ofstream(dir_ / "tiny.cfg") << "# small model\n"
                                            "scales = 1,2,4\n"
                                            "vertices=8\n"
                                            "latent-dim = 8   # overridden below\n"
                                            "heads=2\nbatch=8\nepochs=2\npatience=1\nlr=0.001\n";
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::vector<std::string> base(const std::string& cmd) const {
        return {cmd, "--data-dir", dir_.string(), "--dataset", "Toy", "--config", (dir_ / "tiny.cfg").string()};
    }

    fs::path dir_;
};

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

}  // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, cli::kUsage);
    EXPECT_EQ(run({"frobnicate"}).code, cli::kUsage);
    EXPECT_EQ(run({"train", "--no-such-flag"}).code, cli::kUsage);
    EXPECT_EQ(run({"train"}).code, cli::kUsage);
    EXPECT_EQ(run({"train", "--dataset", "synthetic", "--latent-dim", "abc"}).code, cli::kUsage);
    EXPECT_EQ(run({"train", "--dataset", "synthetic", "--heads", "5"}).code, cli::kUsage);
    EXPECT_EQ(run({"train", "--dataset", "synthetic", "--seeds", "0"}).code, cli::kUsage);
    EXPECT_EQ(run({"--help"}).code, cli::kOk);
}

TEST(Cli, MissingDataIsDataError) {
    const auto r = run({"train", "--data-dir", "/nonexistent", "--dataset", "Nope"});
    EXPECT_EQ(r.code, cli::kDataError);
    EXPECT_NE(r.err.find("Nope"), std::string::npos);
}

TEST_F(CliTest, RaggedFileIsDataError) {
    std::ofstream(dir_ / "Toy" / "Toy_TEST.tsv") << "1\t2\t3\n1\t2\n";
    EXPECT_EQ(run(base("train")).code, cli::kDataError);
}

TEST_F(CliTest, TrainWritesReportAndCheckpoints) {
    auto args = base("train");
    const auto report = dir_ / "report.json";
    args.insert(args.end(), {"--latent-dim", "4", "--seeds", "2", "--seed", "7", "--out", report.string(),
                             "--checkpoint-dir", (dir_ / "ckpt").string()});
    const auto r = run(args);
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    const auto j = read_json(report);
    EXPECT_EQ(j.at("dataset"), "Toy");
    EXPECT_EQ(j.at("accuracies").size(), 2u);
    EXPECT_EQ(j.at("seeds"), nlohmann::json({7, 8}));
    EXPECT_EQ(j.at("config").at("latent_dim"), 4);
    EXPECT_EQ(j.at("config").at("vertices"), 8);
    EXPECT_TRUE(j.contains("std"));
    EXPECT_TRUE(fs::exists(dir_ / "ckpt" / "Toy_seed7.hits"));
    EXPECT_TRUE(fs::exists(dir_ / "ckpt" / "Toy_seed8.hits"));
    EXPECT_NE(r.out.find("mean test accuracy"), std::string::npos);

    auto eval = base("eval");
    const auto eval_report = dir_ / "eval.json";
    eval.insert(eval.end(), {"--checkpoint", (dir_ / "ckpt" / "Toy_seed7.hits").string(), "--out", eval_report.string()});
    const auto e = run(eval);
    ASSERT_EQ(e.code, cli::kOk) << e.err;
    EXPECT_EQ(read_json(eval_report).at("mean"), j.at("runs")[0].at("test_accuracy"));

    auto embed = base("embed");
    const auto csv = dir_ / "emb.csv";
    embed.insert(embed.end(), {"--checkpoint", (dir_ / "ckpt" / "Toy_seed7.hits").string(), "--out", csv.string()});
    ASSERT_EQ(run(embed).code, cli::kOk);
    std::ifstream in(csv);
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    EXPECT_EQ(lines, 11u);
}

TEST_F(CliTest, CorruptCheckpointIsDataError) {
    std::ofstream(dir_ / "bad.hits") << "nope";
    auto args = base("eval");
    args.insert(args.end(), {"--checkpoint", (dir_ / "bad.hits").string()});
    EXPECT_EQ(run(args).code, cli::kDataError);
}

TEST_F(CliTest, InspectComplexRecords) {
    auto args = base("inspect-complex");
    args.insert(args.end(), {"--vertices", "16"});
    const auto r = run(args);
    ASSERT_EQ(r.code, cli::kOk) << r.err;
    std::istringstream in(r.out);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line); ++n) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("m0"), 16);
        EXPECT_GE(j.at("m1").get<int>(), 12);  // top 10% of 120 pairs
        EXPECT_TRUE(j.contains("m2"));
        EXPECT_TRUE(j.contains("cutoff"));
    }
    EXPECT_EQ(n, 34u);
}

TEST_F(CliTest, AblateAndGridReports) {
    auto args = base("ablate");
    args.insert(args.end(), {"--epochs", "1", "--out", (dir_ / "ablate.json").string()});
    ASSERT_EQ(run(args).code, cli::kOk);
    EXPECT_EQ(read_json(dir_ / "ablate.json").at("variants").size(), 8u);
}

TEST_F(CliTest, DivergenceIsNumericFailure) {
    auto args = base("train");
    args.insert(args.end(), {"--lr", "1e300", "--epochs", "5"});
    const auto r = run(args);
    EXPECT_EQ(r.code, cli::kNumericError) << r.err;
}

TEST_F(CliTest, ExecutableExitCodes) {
    auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    const std::string exe = HIGHTS_CLI_PATH;
    EXPECT_EQ(status(exe + " train --bogus"), 1);
    EXPECT_EQ(status(exe + " train --dataset Missing --data-dir " + dir_.string()), 2);
}
