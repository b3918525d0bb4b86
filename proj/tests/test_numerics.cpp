#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pmsda/numerics.hpp"
#include "pmsda/random.hpp"

using namespace pmsda;

TEST(Cosine, OrthogonalAndParallel) {
    EXPECT_DOUBLE_EQ(cosine_similarity(Vector{1, 0}, Vector{0, 1}), 0.0);
    EXPECT_DOUBLE_EQ(cosine_similarity(Vector{2, 0}, Vector{1, 0}), 1.0);
}

TEST(Cosine, FortyFiveDegrees) {
    EXPECT_NEAR(cosine_similarity(Vector{1, 0}, Vector{1, 1}), 0.70710678118654752440, 1e-15);
}

TEST(Cosine, ZeroNormNamesArgument) {
    try {
        cosine_similarity(Vector{0, 0}, Vector{1, 0});
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("first"), std::string::npos);
    }
    try {
        cosine_similarity(Vector{1, 0}, Vector{0, 0});
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("second"), std::string::npos);
    }
}

TEST(Cosine, PositiveScaleInvariance) {
    Rng rng(7);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int t = 0; t < 200; ++t) {
        Vector a(6), b(6);
        for (auto& v : a) v = n01(rng);
        for (auto& v : b) v = n01(rng);
        const double c = scale(rng);
        Vector ca = a;
        for (auto& v : ca) v *= c;
        EXPECT_NEAR(cosine_similarity(a, ca), 1.0, 1e-12);
        EXPECT_NEAR(cosine_similarity(a, b), cosine_similarity(b, a), 1e-15);
        EXPECT_LE(std::abs(cosine_similarity(a, b)), 1.0);
    }
}

TEST(SquaredEuclidean, HandValues) {
    EXPECT_EQ(squared_euclidean(Vector{3, 4}, Vector{3, 4}), 0.0);
    EXPECT_EQ(squared_euclidean(Vector{1, 1}, Vector{0, 0}), 2.0);
    EXPECT_EQ(squared_euclidean(Vector{0}, Vector{2}), 4.0);
    EXPECT_THROW(squared_euclidean(Vector{0}, Vector{1, 2}), DomainError);
}

TEST(GaussianKernel, HandValuesAndErrors) {
    EXPECT_EQ(gaussian_kernel(Vector{1, 2}, Vector{1, 2}, 0.3), 1.0);
    EXPECT_NEAR(gaussian_kernel(Vector{0}, Vector{2}, std::sqrt(2.0)), 0.36787944117144232160, 1e-15);
    EXPECT_THROW(gaussian_kernel(Vector{0}, Vector{1}, 0.0), DomainError);
    EXPECT_THROW(gaussian_kernel(Vector{0}, Vector{1}, -1.0), DomainError);
}

TEST(GaussianKernel, BoundedSymmetricPositive) {
    Rng rng(11);
    std::normal_distribution<double> n01;
    for (int t = 0; t < 200; ++t) {
        Vector a(4), b(4);
        for (auto& v : a) v = n01(rng);
        for (auto& v : b) v = n01(rng);
        const double k = gaussian_kernel(a, b, 1.3);
        EXPECT_GT(k, 0.0);
        EXPECT_LT(k, 1.0);
        EXPECT_EQ(k, gaussian_kernel(b, a, 1.3));
    }
}

TEST(Softmax, HandValues) {
    const Vector p = softmax(Vector{1, 0});
    EXPECT_NEAR(p[0], 0.73105857863000487925, 1e-15);
    EXPECT_NEAR(p[1], 0.26894142136999512075, 1e-15);
    const Vector u = softmax(Vector{4.2, 4.2, 4.2});
    for (double v : u) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    EXPECT_THROW(softmax(Vector{}), DomainError);
}

TEST(Softmax, StableForLargeLogits) {
    Rng rng(3);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int t = 0; t < 100; ++t) {
        Vector z(5);
        for (auto& v : z) v = u(rng);
        const Vector p = softmax(z);
        double s = 0.0;
        for (double v : p) {
            EXPECT_TRUE(std::isfinite(v));
            EXPECT_GE(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
        EXPECT_EQ(argmax(p), argmax(z));
    }
}

TEST(CrossEntropy, HandValuesAndClamp) {
    EXPECT_EQ(cross_entropy(Vector{1, 0}, 0), 0.0);
    EXPECT_NEAR(cross_entropy(Vector{0.5, 0.5}, 1), 0.69314718055994530942, 1e-15);
    EXPECT_NEAR(cross_entropy(Vector{0.73105857863000487925, 0.26894142136999512075}, 1), 1.31326168751822283405, 1e-14);
    EXPECT_NEAR(cross_entropy(Vector{1, 0}, 1), -std::log(kLogClamp), 1e-12);
    EXPECT_THROW(cross_entropy(Vector{0.5, 0.5}, 2), DomainError);
}

TEST(CrossEntropy, NonNegativeOnSoftmax) {
    Rng rng(5);
    std::normal_distribution<double> n01(0.0, 3.0);
    for (int t = 0; t < 200; ++t) {
        Vector z(3);
        for (auto& v : z) v = n01(rng);
        EXPECT_GE(cross_entropy(softmax(z), t % 3), 0.0);
    }
}

TEST(Statistics, MeanStdMedianRanks) {
    EXPECT_DOUBLE_EQ(mean(std::vector<double>{1, 2, 3, 4}), 2.5);
    EXPECT_NEAR(stddev(std::vector<double>{1, 2, 3, 4}), std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(stddev(std::vector<double>{7}), 0.0);
    EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
    EXPECT_DOUBLE_EQ(median({4, 1, 3, 2}), 2.5);
    const auto r = ranks(std::vector<double>{10, 20, 20, 5});
    EXPECT_EQ(r, (std::vector<double>{2, 3.5, 3.5, 1}));
    EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 4, 9, 16}), 1.0, 1e-15);
    EXPECT_NEAR(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{4, 3, 2, 1}), -1.0, 1e-15);
}

TEST(Matrix, ShapeChecked) {
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DomainError);
    Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
    EXPECT_EQ(m(1, 0), 4.0);
    EXPECT_EQ(m.row(1)[2], 6.0);
}

TEST(Seeds, DeriveIsStableAndSpreads) {
    static_assert(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
    EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
    EXPECT_NE(derive_seed(1, {}), derive_seed(2, {}));
    EXPECT_EQ(stable_hash("abc"), 0xe71fa2190541574bULL);
}
