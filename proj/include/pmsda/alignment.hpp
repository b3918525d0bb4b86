#pragma once

// Gaussian-kernel maximum mean discrepancy with per-point gradients.
//
// The estimator keeps the within-set sums over i != j but divides by N^2
// (not N(N-1)), so N coincident points compared with themselves score -2/N
// rather than 0. Gradients treat the bandwidth as a constant.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pmsda/numerics.hpp"

namespace pmsda {

enum class BandwidthMode { median_heuristic, fixed };

struct MmdConfig {
    BandwidthMode bandwidth_mode = BandwidthMode::median_heuristic;
    double fixed_bandwidth = 1.0;
    double lambda = 0.1;

    void validate() const {
        if (!(lambda >= 0.0)) throw ConfigError("mmd.lambda must be >= 0");
        if (!(fixed_bandwidth > 0.0)) throw ConfigError("mmd.fixed_bandwidth must be > 0");
    }
};

inline BandwidthMode parse_bandwidth_mode(const std::string& s) {
    if (s == "median_heuristic" || s == "median") return BandwidthMode::median_heuristic;
    if (s == "fixed") return BandwidthMode::fixed;
    throw ConfigError("unknown bandwidth mode '" + s + "'");
}

struct MmdResult {
    double value = 0.0;
    std::vector<Vector> grad_x;
    std::vector<Vector> grad_y;
    double bandwidth = 1.0;
};

/// Median of the nonzero pairwise Euclidean distances over X and Y pooled; 1.0 if all coincide.
inline double median_bandwidth(std::span<const Vector> x, std::span<const Vector> y) {
    std::vector<const Vector*> pool;
    pool.reserve(x.size() + y.size());
    for (const auto& v : x) pool.push_back(&v);
    for (const auto& v : y) pool.push_back(&v);
    std::vector<double> d;
    d.reserve(pool.size() * (pool.size() - 1) / 2);
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (std::size_t j = i + 1; j < pool.size(); ++j) {
            const double s = squared_euclidean(*pool[i], *pool[j]);
            if (s > 0.0) d.push_back(std::sqrt(s));
        }
    if (d.empty()) return 1.0;
    return median(std::move(d));
}

inline MmdResult mmd_pair(std::span<const Vector> x, std::span<const Vector> y, const MmdConfig& cfg) {
    if (x.empty() || y.empty()) throw DomainError("mmd_pair: empty sample set");
    const std::size_t dim = x.front().size();
    for (const auto& v : x)
        if (v.size() != dim) throw DomainError("mmd_pair: dimension mismatch in X");
    for (const auto& v : y)
        if (v.size() != dim) throw DomainError("mmd_pair: dimension mismatch in Y");

    MmdResult r;
    r.bandwidth = cfg.bandwidth_mode == BandwidthMode::fixed ? cfg.fixed_bandwidth : median_bandwidth(x, y);
    const double inv2s2 = 1.0 / (2.0 * r.bandwidth * r.bandwidth);
    const double inv_s2 = 1.0 / (r.bandwidth * r.bandwidth);
    r.grad_x.assign(x.size(), Vector(dim, 0.0));
    r.grad_y.assign(y.size(), Vector(dim, 0.0));

    // d k(a,b) / d a = -k(a,b) (a - b) / s^2; every term adds coef * that to a and its negation to b.
    auto accumulate = [&](const Vector& a, const Vector& b, Vector& ga, Vector& gb, double coef) {
        const double k = std::exp(-squared_euclidean(a, b) * inv2s2);
        const double c = -coef * k * inv_s2;
        for (std::size_t d = 0; d < dim; ++d) {
            const double g = c * (a[d] - b[d]);
            ga[d] += g;
            gb[d] -= g;
        }
        return k;
    };

    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    // Unordered pairs i < j count twice in the i != j sum.
    const double wxx = 2.0 / (nx * nx);
    const double wyy = 2.0 / (ny * ny);
    const double wxy = -2.0 / (nx * ny);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) sxx += accumulate(x[i], x[j], r.grad_x[i], r.grad_x[j], wxx);
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = i + 1; j < y.size(); ++j) syy += accumulate(y[i], y[j], r.grad_y[i], r.grad_y[j], wyy);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) sxy += accumulate(x[i], y[j], r.grad_x[i], r.grad_y[j], wxy);
    r.value = wxx * sxx + wyy * syy + wxy * sxy;
    return r;
}

struct ThreeDomainResult {
    double value = 0.0;
    std::vector<Vector> grad_s;
    std::vector<Vector> grad_t;
    std::vector<Vector> grad_r;
    double source_target = 0.0;
    double source_replay = 0.0;
};

/// mmd(S, T) + lambda * mmd(S, R); an empty R contributes nothing.
inline ThreeDomainResult three_domain_discrepancy(std::span<const Vector> s, std::span<const Vector> t,
                                                  std::span<const Vector> r, const MmdConfig& cfg) {
    ThreeDomainResult out;
    MmdResult st = mmd_pair(s, t, cfg);
    out.source_target = st.value;
    out.value = st.value;
    out.grad_s = std::move(st.grad_x);
    out.grad_t = std::move(st.grad_y);
    out.grad_r.assign(r.size(), Vector(s.front().size(), 0.0));
    if (!r.empty() && cfg.lambda != 0.0) {
        MmdResult sr = mmd_pair(s, r, cfg);
        out.source_replay = sr.value;
        out.value += cfg.lambda * sr.value;
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t d = 0; d < out.grad_s[i].size(); ++d) out.grad_s[i][d] += cfg.lambda * sr.grad_x[i][d];
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t d = 0; d < out.grad_r[i].size(); ++d) out.grad_r[i][d] = cfg.lambda * sr.grad_y[i][d];
    }
    return out;
}

}  // namespace pmsda
