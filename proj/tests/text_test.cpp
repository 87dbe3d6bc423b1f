#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "medtax/io.hpp"
#include "medtax/parallel.hpp"
#include "medtax/stats.hpp"
#include "medtax/text.hpp"
#include "test_util.hpp"

using namespace medtax;

TEST(Normalize, CaseFoldCollapseTrimAndStripPunctuation) {
    EXPECT_EQ(text::normalize("  Panic   Attack!! "), "panic attack");
    EXPECT_EQ(text::normalize("\"Strong\tpain\"."), "strong pain");
    EXPECT_EQ(text::normalize("type-2 diabetes"), "type-2 diabetes");
    EXPECT_EQ(text::normalize("..."), "");
    EXPECT_EQ(text::normalize(""), "");
}

TEST(Normalize, KeepsNonAsciiBytes) {
    EXPECT_EQ(text::normalize("Café  Sickness"), "café sickness");
}

TEST(Tokenize, SplitsOnNonWordRuns) {
    EXPECT_EQ(text::tokenize("PAIN!!"), (std::vector<std::string>{"pain"}));
    EXPECT_EQ(text::tokenize("my anxiety,and  panic-attack"),
              (std::vector<std::string>{"my", "anxiety", "and", "panic", "attack"}));
    EXPECT_TRUE(text::tokenize(" ,.; ").empty());
}

TEST(Split, KeepsEmptyFields) {
    EXPECT_EQ(text::split("a\t\tb", '\t'), (std::vector<std::string>{"a", "", "b"}));
    EXPECT_EQ(text::split("", ','), (std::vector<std::string>{""}));
    EXPECT_EQ(text::trim("  x y \n"), "x y");
}

TEST(FormatDouble, RoundTripsExactly) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng) / (1 + i);
        EXPECT_EQ(io::parse_double(io::format_double(v)), v);
    }
    EXPECT_EQ(io::format_double(0.5), "0.5");
    EXPECT_EQ(io::format_double(3.0), "3");
}

TEST(FormatFixed, NoNegativeZero) {
    EXPECT_EQ(io::format_fixed(-0.0001, 3), "0.000");
    EXPECT_EQ(io::format_fixed(-0.1234, 3), "-0.123");
    EXPECT_EQ(io::format_fixed(0.4565, 2), "0.46");
}

TEST(Parse, RejectsGarbage) {
    EXPECT_THROW(io::parse_double("1.5x"), ValidationError);
    EXPECT_THROW(io::parse_double(""), ValidationError);
    EXPECT_THROW(io::parse_int("3.2"), ValidationError);
    EXPECT_EQ(io::parse_int("-42"), -42);
}

TEST(Files, AtomicWriteAndTwoColumnRead) {
    testutil::TempDir dir("io");
    const auto p = dir / "sub/table.tsv";
    io::write_file_atomic(p, "# comment\na\t1\n\nb\t2\r\n");
    EXPECT_FALSE(std::filesystem::exists(p.string() + ".tmp"));
    auto rows = io::read_two_column(p);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], (std::pair<std::string, std::string>{"a", "1"}));
    EXPECT_EQ(rows[1], (std::pair<std::string, std::string>{"b", "2"}));
    EXPECT_THROW(io::read_file(dir / "missing.txt"), ValidationError);
}

TEST(Stats, MeanAndPopulationSd) {
    std::vector<double> x{2, 4, 4, 4, 5, 5, 7, 9};
    EXPECT_DOUBLE_EQ(stats::mean(x), 5.0);
    EXPECT_DOUBLE_EQ(stats::population_sd(x), 2.0);
    EXPECT_NEAR(stats::sample_variance(x), 32.0 / 7.0, 1e-15);
}

TEST(Stats, MedianUsesMidpointForEvenSizes) {
    EXPECT_DOUBLE_EQ(stats::median({4, 1, 3, 2}), 2.5);
    EXPECT_DOUBLE_EQ(stats::median({5, 1, 3}), 3.0);
    EXPECT_THROW(stats::median({}), ValidationError);
}

TEST(Stats, QuantileType7MatchesDefinition) {
    std::vector<double> s{1, 2, 3, 4, 10};
    EXPECT_DOUBLE_EQ(stats::quantile_sorted(s, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(stats::quantile_sorted(s, 1.0), 10.0);
    EXPECT_DOUBLE_EQ(stats::quantile_sorted(s, 0.5), 3.0);
    // h = 4 * 0.975 = 3.9 -> 4 + 0.9 * 6
    EXPECT_NEAR(stats::quantile_sorted(s, 0.975), 9.4, 1e-12);
    EXPECT_NEAR(stats::quantile_sorted(s, 0.025), 1.1, 1e-12);
}

TEST(Stats, BandEdgeIsNotBeyond) {
    EXPECT_FALSE(stats::beyond_band(2.0, 0.0, 1.0, 2.0));
    EXPECT_TRUE(stats::beyond_band(2.0 + 1e-9, 0.0, 1.0, 2.0));
    EXPECT_TRUE(stats::beyond_band(-3.0, 0.0, 1.0, 2.0));
}

TEST(Parallel, CoversEveryIndexOnceAndRethrows) {
    for (std::size_t threads : {1u, 3u, 8u}) {
        std::vector<int> hits(1000, 0);
        parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
        for (int h : hits)
            EXPECT_EQ(h, 1);
    }
    EXPECT_THROW(parallel_for(10, 4,
                              [](std::size_t i) {
                                  if (i == 7)
                                      throw ComputeError("boom");
                              }),
                 ComputeError);
}

TEST(Parallel, DerivedSeedsAreStableAndDistinct) {
    EXPECT_EQ(derive_seed(1, "a"), derive_seed(1, "a"));
    EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
}
