#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pmsda/synthdata.hpp"

using namespace pmsda;

namespace {

SubjectSpec spec(double noise = 0.5) {
    SubjectSpec s;
    s.subject_id = "subj";
    s.dim = 4;
    s.noise_std = noise;
    s.mean_shift = {1.0, -1.0, 0.5, 0.0};
    s.rotation_seed = 3;
    s.rotation_angle = 0.7;
    s.samples_per_class = {60, 40};
    return s;
}

}  // namespace

TEST(Subject, Deterministic) {
    const auto a = generate_subject(spec(), 5);
    const auto b = generate_subject(spec(), 5);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.train_idx, b.train_idx);
    EXPECT_NE(generate_subject(spec(), 6).samples, a.samples);
}

TEST(Subject, ZeroNoiseCoincidesAtCenters) {
    const auto s = spec(0.0);
    const auto d = generate_subject(s, 1);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.samples[i], s.class_center(d.label(i)));
}

TEST(Subject, ClassMeansConcentrate) {
    auto s = spec(0.8);
    s.samples_per_class = {500, 500};
    const auto d = generate_subject(s, 11);
    for (std::size_t c = 0; c < 2; ++c) {
        const Vector centre = s.class_center(c);
        Vector m(s.dim, 0.0);
        double n = 0;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d.label(i) == c) {
                for (std::size_t k = 0; k < s.dim; ++k) m[k] += d.samples[i][k];
                ++n;
            }
        for (std::size_t k = 0; k < s.dim; ++k) EXPECT_NEAR(m[k] / n, centre[k], 3.0 * s.noise_std / std::sqrt(n));
    }
}

TEST(Subject, AnchorsSitOnRotatedAxis) {
    const auto s = spec();
    const auto [a, b] = s.class_plane();
    EXPECT_NEAR(l2_norm(a), 1.0, 1e-12);
    EXPECT_NEAR(l2_norm(b), 1.0, 1e-12);
    EXPECT_NEAR(dot(a, b), 0.0, 1e-12);
    EXPECT_NEAR(a[0], std::cos(0.7), 1e-12);
    EXPECT_NEAR(std::sqrt(squared_euclidean(s.class_center(0), s.class_center(1))), 4.0, 1e-12);
}

TEST(Subject, SplitIsEightyTwentyAndValid) {
    const auto d = generate_subject(spec(), 2);
    EXPECT_TRUE(d.valid());
    EXPECT_EQ(d.train_idx.size(), 80u);
    EXPECT_EQ(d.test_idx.size(), 20u);
    EXPECT_EQ(d.train_part().size(), 80u);
    EXPECT_FALSE(d.without_labels().labeled());
}

TEST(Subject, InvalidSpecsRejected) {
    auto s = spec();
    s.class_count = 1;
    s.samples_per_class = {10};
    EXPECT_THROW(generate_subject(s, 0), ConfigError);
    s = spec();
    s.samples_per_class = {0, 0};
    EXPECT_THROW(generate_subject(s, 0), ConfigError);
    s = spec();
    s.mean_shift = {1.0};
    EXPECT_THROW(generate_subject(s, 0), ConfigError);
    s = spec();
    s.noise_std = -1.0;
    EXPECT_THROW(generate_subject(s, 0), ConfigError);
}

TEST(Benchmark, StandardDistancesIncrease) {
    const auto b = generate_benchmark(BenchmarkKind::standard, 5, 7);
    ASSERT_EQ(b.sources.size(), 5u);
    double prev = -1.0;
    for (const auto& s : b.source_specs) {
        const double d = std::sqrt(squared_euclidean(s.mean_shift, b.target_spec.mean_shift));
        EXPECT_GT(d, prev);
        prev = d;
    }
    EXPECT_EQ(b.ground_truth_order(), (std::vector<SubjectId>{"src01", "src02", "src03", "src04", "src05"}));
    for (const auto& s : b.sources) EXPECT_TRUE(s.valid());
    EXPECT_TRUE(b.target.valid());
}

TEST(Benchmark, ImbalancedTargetIsThreeToOne) {
    const auto b = generate_benchmark(BenchmarkKind::imbalanced, 3, 7);
    std::size_t counts[2] = {0, 0};
    for (auto l : *b.target.labels) ++counts[l];
    EXPECT_EQ(counts[0], 150u);
    EXPECT_EQ(counts[1], 50u);
}

TEST(Benchmark, MissingClassSourcesLackClassOne) {
    const auto b = generate_benchmark(BenchmarkKind::missing_class, 4, 7);
    for (std::size_t j = 0; j < 4; ++j) {
        std::size_t ones = 0;
        for (auto l : *b.sources[j].labels) ones += l;
        if (j % 2 == 1)
            EXPECT_EQ(ones, 0u);
        else
            EXPECT_EQ(ones, 100u);
    }
}

TEST(Benchmark, CrossShiftExceedsClassSpread) {
    const auto b = generate_benchmark(BenchmarkKind::cross_shift, 10, 7);
    double max_spread = 0.0;
    for (const auto& s : b.source_specs)
        max_spread = std::max(max_spread, std::sqrt(squared_euclidean(s.class_center(0), s.class_center(1))));
    for (const auto& s : b.source_specs)
        EXPECT_GT(std::sqrt(squared_euclidean(s.mean_shift, b.target_spec.mean_shift)), max_spread);
}

TEST(Benchmark, ErrorsAndNames) {
    EXPECT_THROW(generate_benchmark(BenchmarkKind::standard, 2, 0), ConfigError);
    EXPECT_THROW(parse_benchmark("biovid"), ConfigError);
    for (auto k : {BenchmarkKind::standard, BenchmarkKind::imbalanced, BenchmarkKind::missing_class,
                   BenchmarkKind::cross_shift})
        EXPECT_EQ(parse_benchmark(to_string(k)), k);
    EXPECT_EQ(source_id(0), "src01");
    EXPECT_EQ(source_id(11), "src12");
}

TEST(Domain, JsonRoundTrip) {
    const auto d = generate_subject(spec(), 4);
    const auto back = domain_from_json(nlohmann::json::parse(to_json(d).dump()));
    EXPECT_EQ(back.samples, d.samples);
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_EQ(back.test_idx, d.test_idx);
    const auto unl = domain_from_json(to_json(d.without_labels()));
    EXPECT_FALSE(unl.labeled());
    auto j = to_json(d);
    j["train_idx"] = std::vector<std::size_t>{0};
    EXPECT_THROW(domain_from_json(j), ConfigError);
}
