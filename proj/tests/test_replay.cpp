#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pmsda/replay.hpp"
#include "pmsda/synthdata.hpp"

using namespace pmsda;

namespace {

SubjectDomain make_domain(const std::string& id, std::vector<Vector> xs, std::vector<std::size_t> labels = {}) {
    SubjectDomain d;
    d.subject_id = id;
    d.dim = xs.front().size();
    if (labels.empty()) labels.assign(xs.size(), 0);
    d.labels = labels;
    d.samples = std::move(xs);
    for (std::size_t i = 0; i < d.samples.size(); ++i) d.train_idx.push_back(i);
    return d;
}

// Identity encoder: embedding = tanh(x), so inputs atanh(e) embed exactly at e.
ModelParams identity_encoder(std::size_t dim) {
    ModelParams p(dim, dim, 2);
    for (std::size_t i = 0; i < dim; ++i) p.encoder_weights(i, i) = 1.0;
    return p;
}

Vector pre(Vector e) {
    for (double& v : e) v = std::atanh(v);
    return e;
}

ScoredSample scored(double distance, const std::string& origin = "s", std::size_t label = 0) {
    return {Vector{distance}, label, distance, origin};
}

std::vector<double> distances(const ReplayMemory& m) {
    std::vector<double> d;
    for (const auto& e : m.entries) d.push_back(e.distance);
    return d;
}

}  // namespace

TEST(Merge, SmallestTwoOfThree) {
    ReplayMemory m;
    m.capacity = 2;
    m.per_stage_intake = 3;
    const std::vector<ScoredSample> s{scored(0.5), scored(0.2), scored(0.9)};
    EXPECT_EQ(distances(merge_into_memory(m, s)), (std::vector<double>{0.2, 0.5}));
}

TEST(Merge, NewEntryDisplacesLargest) {
    ReplayMemory m;
    m.capacity = 2;
    m = merge_into_memory(m, std::vector<ScoredSample>{scored(0.1), scored(0.3)});
    m = merge_into_memory(m, std::vector<ScoredSample>{scored(0.2)});
    EXPECT_EQ(distances(m), (std::vector<double>{0.1, 0.2}));
}

TEST(Merge, EmptyScoredIsIdentity) {
    ReplayMemory m;
    m.capacity = 4;
    m = merge_into_memory(m, std::vector<ScoredSample>{scored(0.4, "a"), scored(0.1, "b")});
    const auto before = distances(m);
    m = merge_into_memory(m, std::vector<ScoredSample>{});
    EXPECT_EQ(distances(m), before);
}

TEST(Merge, IntakeTakesPrefixNotSmallest) {
    ReplayMemory m;
    m.capacity = 10;
    m.per_stage_intake = 2;
    const std::vector<ScoredSample> s{scored(0.7), scored(0.6), scored(0.1)};
    EXPECT_EQ(distances(merge_into_memory(m, s)), (std::vector<double>{0.6, 0.7}));
}

TEST(Merge, TiesBreakByOriginThenInsertion) {
    ReplayMemory m;
    m.capacity = 3;
    m = merge_into_memory(m, std::vector<ScoredSample>{scored(0.5, "b", 1), scored(0.5, "b", 2)});
    m = merge_into_memory(m, std::vector<ScoredSample>{scored(0.5, "a", 3)});
    ASSERT_EQ(m.size(), 3u);
    EXPECT_EQ(m.entries[0].label, 3u);
    EXPECT_EQ(m.entries[1].label, 1u);
    EXPECT_EQ(m.entries[2].label, 2u);
}

TEST(Merge, CapacityAndOrderInvariants) {
    Rng rng(99);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::uniform_int_distribution<std::size_t> n(0, 30);
    for (int run = 0; run < 50; ++run) {
        ReplayMemory m;
        m.capacity = 1 + run % 17;
        m.per_stage_intake = 1 + run % 11;
        for (int step = 0; step < 20; ++step) {
            std::vector<ScoredSample> s(n(rng));
            for (auto& x : s) x = scored(u(rng), "s" + std::to_string(step));
            const bool full = m.size() == m.capacity;
            const double old_max = m.empty() ? 0.0 : m.entries.back().distance;
            const auto before = distances(m);
            double new_min = 1e9;
            for (std::size_t k = 0; k < std::min(s.size(), m.per_stage_intake); ++k)
                new_min = std::min(new_min, s[k].distance);
            m = merge_into_memory(m, s);
            EXPECT_LE(m.size(), m.capacity);
            EXPECT_TRUE(m.sorted());
            if (full && new_min < old_max) EXPECT_NE(distances(m), before);
        }
    }
}

TEST(Score, IdenticalTightDomainsScoreZero) {
    const std::vector<Vector> xs(8, pre({0.3, -0.2}));
    const auto src = make_domain("s", xs);
    const auto tgt = make_domain("t", xs);
    for (const auto& s : score_source_against_target(identity_encoder(2), src, tgt, DbscanConfig{}))
        EXPECT_LE(s.distance, 1e-9);
}

TEST(Score, OutlierComesLastWhateverItsTargetDistance) {
    Rng rng(3);
    std::uniform_real_distribution<double> jitter(-0.02, 0.02);
    std::vector<Vector> xs{pre({0.9, -0.9})};
    for (int i = 0; i < 20; ++i) xs.push_back(pre({0.1 + jitter(rng), 0.1 + jitter(rng)}));
    std::vector<std::size_t> labels(xs.size(), 0);
    labels[0] = 1;
    const auto src = make_domain("s", xs, labels);
    // Target sits on the outlier, so its target distance is the smallest.
    const auto tgt = make_domain("t", std::vector<Vector>(6, pre({0.9, -0.9})));
    const auto out = score_source_against_target(identity_encoder(2), src, tgt, DbscanConfig{});
    ASSERT_EQ(out.size(), xs.size());
    EXPECT_EQ(out.back().label, 1u);
    EXPECT_LT(out.back().distance, 1e-9);
    for (std::size_t k = 0; k + 1 < out.size(); ++k) EXPECT_GT(out[k].distance, out.back().distance);
}

TEST(Score, HandSetTargetDistances) {
    const auto src = make_domain("s", {pre({0.3}), pre({0.4})});
    const auto tgt = make_domain("t", std::vector<Vector>(5, Vector{0.0}));
    const auto out = score_source_against_target(identity_encoder(1), src, tgt, DbscanConfig{});
    ASSERT_EQ(out.size(), 2u);
    EXPECT_NEAR(out[0].distance, 0.09, 1e-12);
    EXPECT_NEAR(out[1].distance, 0.16, 1e-12);
    EXPECT_EQ(out[0].origin_subject, "s");
}

TEST(Score, RequiresLabelledNonEmptySource) {
    const auto tgt = make_domain("t", {Vector{0.0}});
    auto unlabeled = make_domain("s", {Vector{0.0}});
    unlabeled.labels.reset();
    EXPECT_THROW(score_source_against_target(identity_encoder(1), unlabeled, tgt, DbscanConfig{}), DomainError);
}

class Variants : public ::testing::Test {
protected:
    Benchmark bench = generate_benchmark(BenchmarkKind::standard, 3, 17);
    ModelParams params = ModelParams::initialize(8, 16, 2, 5);
    ReplayMemory fresh() const {
        ReplayMemory m;
        m.capacity = 150;
        m.per_stage_intake = 120;
        return m;
    }
};

TEST_F(Variants, NoneKeepsMemoryEmpty) {
    auto m = replay_variant_select(ReplayVariant::none, fresh(), params, bench.sources[0], bench.target, {}, 1);
    EXPECT_TRUE(m.empty());
}

TEST_F(Variants, RandomIsDeterministic) {
    const auto a = replay_variant_select(ReplayVariant::random, fresh(), params, bench.sources[0], bench.target, {}, 4);
    const auto b = replay_variant_select(ReplayVariant::random, fresh(), params, bench.sources[0], bench.target, {}, 4);
    const auto c = replay_variant_select(ReplayVariant::random, fresh(), params, bench.sources[0], bench.target, {}, 5);
    ASSERT_EQ(a.size(), 120u);
    EXPECT_EQ(to_json(a), to_json(b));
    EXPECT_NE(to_json(a), to_json(c));
}

TEST_F(Variants, DensityDictionaryMatchesMainPath) {
    DbscanConfig dc;
    const auto via_variant =
        replay_variant_select(ReplayVariant::density_dictionary, fresh(), params, bench.sources[1], bench.target, dc, 2);
    const auto scored = score_source_against_target(params, bench.sources[1], bench.target, dc);
    const auto direct = merge_into_memory(fresh(), scored);
    EXPECT_EQ(to_json(via_variant), to_json(direct));
}

TEST_F(Variants, PerSubjectQuotaAndKMeansBounded) {
    auto m = fresh();
    for (const auto& s : bench.sources) {
        const std::size_t before = m.size();
        m = replay_variant_select(ReplayVariant::dbscan_per_subject, m, params, s, bench.target, {}, 2);
        EXPECT_LE(m.size(), std::min(m.capacity, before + kPerSubjectQuota));
        EXPECT_TRUE(m.sorted());
    }
    auto k = replay_variant_select(ReplayVariant::kmeans_closest, fresh(), params, bench.sources[0], bench.target, {}, 2);
    EXPECT_EQ(k.size(), 120u);
    EXPECT_TRUE(k.sorted());
}

TEST(ReplayVariantNames, RoundTrip) {
    for (auto v : kAllReplayVariants) EXPECT_EQ(parse_replay_variant(to_string(v)), v);
    EXPECT_THROW(parse_replay_variant("reservoir"), ConfigError);
}
