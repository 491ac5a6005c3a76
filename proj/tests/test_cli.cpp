#include "cli.hpp"

#include <cginv/cgnet.hpp>
#include <cginv/dataset.hpp>
#include <cginv/io.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace cginv;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) { return cli::run(args); }

class Cli : public ::testing::Test {
protected:
    fs::path root = fs::temp_directory_path() / "cginv_cli_test";
    void SetUp() override {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    std::string p(const std::string& rel) const { return (root / rel).string(); }
    int gen(const std::string& out, const std::string& seed = "3", const std::string& snr = "60",
            const std::string& count = "4") {
        return run({"gen-data", "--phantom", "shepp-logan", "--n-side", "8", "--operator", "radon", "--angles", "6",
                    "--snr", snr, "--count", count, "--seed", seed, "--out", p(out)});
    }
};

} // namespace

TEST_F(Cli, GenDataIsReproducible) {
    ASSERT_EQ(gen("d1"), 0);
    ASSERT_EQ(gen("d2"), 0);
    EXPECT_TRUE(fs::exists(root / "d1" / "manifest.txt"));
    for (const char* id : {"000000", "000003"})
        EXPECT_EQ(io::read_file(root / "d1" / "samples" / id / "y.csv"),
                  io::read_file(root / "d2" / "samples" / id / "y.csv"));
    EXPECT_FALSE(fs::exists(root / "d1" / "samples" / "000004"));
}

TEST_F(Cli, NoiselessMeasurementsAreExact) {
    ASSERT_EQ(gen("clean", "1", "inf", "2"), 0);
    Dataset d = read_dataset(root / "clean");
    EXPECT_TRUE((d.samples[0].y.array() == (d.model.a * d.samples[0].c).array()).all());
}

TEST_F(Cli, ReconstructWritesPerSampleOutputs) {
    ASSERT_EQ(gen("d", "3", "60", "3"), 0);
    const std::string cfg = p("solver.ini");
    io::write_atomic(cfg, "[solver]\nk_max = 40\n");
    const std::string before = io::read_file(root / "d" / "samples" / "000000" / "y.csv");
    ASSERT_EQ(run({"reconstruct", "--method", "ncgls", "--config", cfg, "--data", p("d"), "--out", p("r")}), 0);
    for (const char* f : {"c_star.csv", "recon.pgm", "trace.csv", "metrics.csv"})
        EXPECT_TRUE(fs::exists(root / "r" / "samples" / "000001" / f)) << f;
    io::Image img = io::read_pgm(root / "r" / "samples" / "000001" / "recon.pgm");
    EXPECT_EQ(img.width, 8);
    EXPECT_EQ(img.height, 8);
    EXPECT_TRUE(fs::exists(root / "r" / "manifest.txt"));
    const std::string metrics = io::read_file(root / "r" / "metrics.csv");
    EXPECT_NE(metrics.find("\nmean,"), std::string::npos);
    EXPECT_NE(metrics.find("\nci99,"), std::string::npos);
    EXPECT_EQ(io::read_file(root / "d" / "samples" / "000000" / "y.csv"), before);

    // identical flags give identical bytes
    ASSERT_EQ(run({"reconstruct", "--method", "ncgls", "--config", cfg, "--data", p("d"), "--out", p("r2")}), 0);
    EXPECT_EQ(io::read_file(root / "r" / "metrics.csv"), io::read_file(root / "r2" / "metrics.csv"));
    EXPECT_EQ(io::read_file(root / "r" / "samples" / "000002" / "recon.pgm"),
              io::read_file(root / "r2" / "samples" / "000002" / "recon.pgm"));
}

TEST_F(Cli, MissingModelIsRuntimeFailure) {
    ASSERT_EQ(gen("d", "3", "60", "2"), 0);
    fs::remove(root / "d" / "model" / "phi.csv");
    EXPECT_EQ(run({"reconstruct", "--method", "gcgls", "--data", p("d"), "--out", p("r")}), cli::kExitRuntime);
}

TEST_F(Cli, TrainSubsampleAndEvalSelfConsistency) {
    ASSERT_EQ(gen("d", "5", "60", "6"), 0);
    ASSERT_EQ(run({"train", "--data", p("d"), "--k", "2", "--epochs", "3", "--train-size", "4", "--seed", "7",
                   "--validation-fraction", "0", "--out", p("t1")}),
              0);
    ASSERT_EQ(run({"train", "--data", p("d"), "--k", "2", "--epochs", "3", "--train-size", "4", "--seed", "7",
                   "--validation-fraction", "0", "--out", p("t2")}),
              0);
    EXPECT_EQ(io::read_file(root / "t1" / "split.csv"), io::read_file(root / "t2" / "split.csv"));
    EXPECT_EQ(io::read_file(root / "t1" / "checkpoint.csv"), io::read_file(root / "t2" / "checkpoint.csv"));

    // evaluate on exactly the training subset: its mean loss is the best validation loss
    Dataset d = read_dataset(root / "d");
    Dataset sub;
    sub.model = d.model;
    std::istringstream split(io::read_file(root / "t1" / "split.csv"));
    std::string line;
    std::getline(split, line);
    while (std::getline(split, line))
        if (line.rfind("train,", 0) == 0) {
            const std::string id = line.substr(6);
            for (std::size_t i = 0; i < d.ids.size(); ++i)
                if (d.ids[i] == id) {
                    sub.ids.push_back(id);
                    sub.samples.push_back(d.samples[i]);
                }
        }
    ASSERT_EQ(sub.samples.size(), 4u);
    write_dataset(root / "sub", sub);
    ASSERT_EQ(run({"eval", "--checkpoint", p("t1/checkpoint.csv"), "--data", p("sub"), "--out", p("e")}), 0);
    const io::KeyValues summary = io::parse_key_values(io::read_file(root / "e" / "summary.txt"));
    double best = kInf;
    std::istringstream hist(io::read_file(root / "t1" / "history.csv"));
    std::getline(hist, line);
    while (std::getline(hist, line)) best = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_NEAR(std::stod(summary.at("mean_loss")), best, 1e-9);
    EXPECT_NE(io::read_file(root / "e" / "metrics.csv").find("\nmean,"), std::string::npos);
}

TEST_F(Cli, TrainSizeLargerThanDatasetFails) {
    ASSERT_EQ(gen("d", "5", "60", "3"), 0);
    EXPECT_EQ(run({"train", "--data", p("d"), "--train-size", "4", "--out", p("t")}), cli::kExitRuntime);
}

TEST_F(Cli, EvalGuards) {
    ASSERT_EQ(gen("d", "5", "60", "2"), 0);
    NetParams wrong = NetParams::initial(1, 1, 16);
    save_checkpoint(wrong, root / "wrong.csv");
    EXPECT_EQ(run({"eval", "--checkpoint", p("wrong.csv"), "--data", p("d"), "--out", p("e")}), cli::kExitRuntime);
    Dataset d = read_dataset(root / "d");
    d.ids.clear();
    d.samples.clear();
    write_dataset(root / "empty", d);
    EXPECT_EQ(run({"eval", "--method", "gcgls", "--data", p("empty"), "--out", p("e2")}), cli::kExitRuntime);
    EXPECT_EQ(run({"eval", "--data", p("d"), "--out", p("e3")}), cli::kExitUsage);
}

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run({}), cli::kExitUsage);
    EXPECT_EQ(run({"frobnicate"}), cli::kExitUsage);
    EXPECT_EQ(run({"verify-theory", "--check", "lemma9", "--out", p("v")}), cli::kExitUsage);
    EXPECT_EQ(run({"reconstruct", "--method", "fista", "--data", p("d"), "--out", p("r")}), cli::kExitUsage);
    EXPECT_EQ(run({"gen-data", "--out", p("g")}), cli::kExitUsage);
    EXPECT_EQ(run({"gen-data", "--phantom", "shepp-logan", "--snr", "loud", "--out", p("g")}), cli::kExitUsage);
    EXPECT_EQ(run({"--help"}), cli::kExitOk);
}

TEST_F(Cli, VerifyTheoryWritesReports) {
    EXPECT_EQ(run({"verify-theory", "--check", "lemma1", "--instances", "3", "--seed", "2", "--out", p("v")}), 0);
    EXPECT_TRUE(fs::exists(root / "v" / "lemma1.csv"));
    EXPECT_TRUE(fs::exists(root / "v" / "manifest.txt"));
}
