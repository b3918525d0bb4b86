#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pmsda/numerics.hpp"
#include "pmsda/random.hpp"

namespace pmsda {

inline constexpr int kNoise = -1;

struct DbscanConfig {
    /// Neighbourhood radius; when empty it is chosen by the k-distance heuristic.
    std::optional<double> epsilon;
    std::size_t min_points = 5;

    void validate() const {
        if (epsilon && !(*epsilon > 0.0)) throw ConfigError("dbscan.epsilon must be > 0");
        if (min_points < 1) throw ConfigError("dbscan.min_points must be >= 1");
    }
};

struct Clustering {
    std::vector<int> assignments;  // cluster index or kNoise
    std::vector<Vector> centroids;
    std::size_t cluster_count = 0;
    /// True when every point was noise and all points were merged into one cluster.
    bool fallback = false;
};

/// Median over points of the distance to the k-th nearest other point.
inline double k_distance_epsilon(std::span<const Vector> points, std::size_t k) {
    if (points.empty()) throw DomainError("k_distance_epsilon: empty input");
    if (points.size() < 2) return 1.0;
    k = std::clamp<std::size_t>(k, 1, points.size() - 1);
    std::vector<double> kth;
    kth.reserve(points.size());
    std::vector<double> d(points.size() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::size_t n = 0;
        for (std::size_t j = 0; j < points.size(); ++j)
            if (j != i) d[n++] = squared_euclidean(points[i], points[j]);
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
        kth.push_back(std::sqrt(d[k - 1]));
    }
    const double eps = median(std::move(kth));
    return eps > 0.0 ? eps : 1e-9;
}

inline double resolve_epsilon(std::span<const Vector> points, const DbscanConfig& cfg) {
    if (cfg.epsilon) return *cfg.epsilon;
    return k_distance_epsilon(points, cfg.min_points > 1 ? cfg.min_points - 1 : 1);
}

inline std::vector<Vector> centroids(std::span<const Vector> points, std::span<const int> assignments,
                                     std::size_t cluster_count) {
    if (points.empty()) return {};
    std::vector<Vector> c(cluster_count, Vector(points.front().size(), 0.0));
    std::vector<std::size_t> n(cluster_count, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (assignments[i] == kNoise) continue;
        const auto k = static_cast<std::size_t>(assignments[i]);
        for (std::size_t d = 0; d < points[i].size(); ++d) c[k][d] += points[i][d];
        ++n[k];
    }
    for (std::size_t k = 0; k < cluster_count; ++k)
        if (n[k] > 0)
            for (double& v : c[k]) v /= static_cast<double>(n[k]);
    return c;
}

inline std::vector<Vector> centroids(std::span<const Vector> points, const Clustering& clustering) {
    return centroids(points, clustering.assignments, clustering.cluster_count);
}

/// Sequential DBSCAN over Euclidean distance. Neighbourhoods are inclusive
/// (d <= epsilon) and count the point itself. Border points join the first
/// cluster whose expansion reaches them in index order. If every point is
/// noise, all points form a single cluster.
inline Clustering dbscan(std::span<const Vector> points, const DbscanConfig& cfg) {
    if (points.empty()) throw DomainError("dbscan: empty input");
    cfg.validate();
    const double eps = resolve_epsilon(points, cfg);
    const double eps2 = eps * eps;
    const std::size_t n = points.size();

    std::vector<std::vector<std::size_t>> neighbours(n);
    for (std::size_t i = 0; i < n; ++i) {
        neighbours[i].push_back(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            if (squared_euclidean(points[i], points[j]) <= eps2) {
                neighbours[i].push_back(j);
                neighbours[j].push_back(i);
            }
        }
    }
    for (auto& nb : neighbours) std::sort(nb.begin(), nb.end());
    auto is_core = [&](std::size_t i) { return neighbours[i].size() >= cfg.min_points; };

    constexpr int kUnvisited = -2;
    Clustering out;
    out.assignments.assign(n, kUnvisited);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (out.assignments[i] != kUnvisited) continue;
        if (!is_core(i)) {
            out.assignments[i] = kNoise;
            continue;
        }
        const int cid = next++;
        out.assignments[i] = cid;
        std::deque<std::size_t> frontier(neighbours[i].begin(), neighbours[i].end());
        while (!frontier.empty()) {
            const std::size_t q = frontier.front();
            frontier.pop_front();
            if (out.assignments[q] == kNoise) out.assignments[q] = cid;  // border point
            if (out.assignments[q] != kUnvisited) continue;
            out.assignments[q] = cid;
            if (is_core(q)) frontier.insert(frontier.end(), neighbours[q].begin(), neighbours[q].end());
        }
    }
    out.cluster_count = static_cast<std::size_t>(next);
    if (out.cluster_count == 0) {
        out.assignments.assign(n, 0);
        out.cluster_count = 1;
        out.fallback = true;
    }
    out.centroids = centroids(points, out);
    return out;
}

/// Lloyd's k-means with seeded distinct-point initialisation.
inline Clustering kmeans(std::span<const Vector> points, std::size_t k, std::size_t iterations, std::uint64_t seed) {
    if (points.empty()) throw DomainError("kmeans: empty input");
    if (k == 0) throw ConfigError("kmeans: k must be >= 1");
    k = std::min(k, points.size());
    Rng rng(derive_seed(seed, {stable_hash("kmeans-init")}));
    std::vector<std::size_t> idx(points.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);

    Clustering out;
    out.cluster_count = k;
    for (std::size_t j = 0; j < k; ++j) out.centroids.push_back(points[idx[j]]);
    out.assignments.assign(points.size(), kNoise);
    for (std::size_t it = 0; it < iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < points.size(); ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                const double d = squared_euclidean(points[i], out.centroids[j]);
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(j);
                }
            }
            changed = changed || out.assignments[i] != best;
            out.assignments[i] = best;
        }
        auto updated = centroids(points, out.assignments, k);
        // An emptied cluster keeps its previous centre.
        std::vector<std::size_t> count(k, 0);
        for (int a : out.assignments) ++count[static_cast<std::size_t>(a)];
        for (std::size_t j = 0; j < k; ++j)
            if (count[j] > 0) out.centroids[j] = std::move(updated[j]);
        if (!changed) break;
    }
    return out;
}

/// Entry (j, i) is the squared Euclidean distance between point i and centroid j.
inline Matrix centroid_distance_matrix(std::span<const Vector> points, std::span<const Vector> cents) {
    if (points.empty() || cents.empty()) throw DomainError("centroid_distance_matrix: empty input");
    Matrix h(cents.size(), points.size());
    for (std::size_t j = 0; j < cents.size(); ++j)
        for (std::size_t i = 0; i < points.size(); ++i) h(j, i) = squared_euclidean(points[i], cents[j]);
    return h;
}

/// Column-wise minimum: z_i = min_j H(j, i).
inline std::vector<double> min_over_clusters(const Matrix& h) {
    if (h.rows() == 0 || h.cols() == 0) throw DomainError("min_over_clusters: empty matrix");
    std::vector<double> z(h.cols(), std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < h.rows(); ++j)
        for (std::size_t i = 0; i < h.cols(); ++i) z[i] = std::min(z[i], h(j, i));
    return z;
}

}  // namespace pmsda
