#include <cginv/theory.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace cginv;

TEST(FitLine, ExactLineAndNoise) {
    LineFit f = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
    EXPECT_NEAR(f.slope, 2.0, 1e-14);
    EXPECT_NEAR(f.intercept, 1.0, 1e-14);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-14);
    LineFit flat = fit_line({0, 1, 2, 3}, {1, -1, 1, -1});
    EXPECT_LT(flat.r_squared, 0.5);
}

TEST(TheoryInstance, ShapesAndNormalization) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        TheoryInstance in = make_theory_instance(s);
        EXPECT_GE(in.a.cols(), 8);
        EXPECT_LE(in.a.cols(), 16);
        EXPECT_GE(in.a.rows(), 4);
        EXPECT_LE(in.a.rows(), std::min<Index>(8, in.a.cols()));
        EXPECT_NEAR(Eigen::JacobiSVD<Matrix>(in.a).singularValues()[0], 1.0, 1e-5);
        EXPECT_EQ(in.y.size(), in.a.rows());
    }
}

TEST(TheoryChecks, SmallRunsPass) {
    EXPECT_TRUE(check_lemma1(5, 1).passed);
    EXPECT_TRUE(check_prop2(5, 2).passed);
    EXPECT_TRUE(check_thm1_rate({10, 100}, 3, 3).passed);
    EXPECT_TRUE(check_prop1_scaling(5, 4).passed);
    TheoryReport t2 = check_thm2_linear(4, 5);
    EXPECT_EQ(t2.instances, 4);
}

TEST(TheoryChecks, ReportsAreWritten) {
    TheoryReport r = check_lemma1(3, 9);
    const auto dir = std::filesystem::temp_directory_path() / "cginv_theory_test";
    std::filesystem::remove_all(dir);
    write_report(r, dir);
    EXPECT_TRUE(std::filesystem::exists(dir / "lemma1.csv"));
    EXPECT_EQ(r.artifacts_path, (dir / "lemma1.csv").string());
    EXPECT_NE(r.summary().find("lemma1"), std::string::npos);
}
