#pragma once

// Replay domain: a bounded, distance-sorted store of labelled source samples.
//
// A source is scored against the target in two passes. Source embeddings are
// clustered and sorted by distance to their nearest own centroid (dense core
// first, outliers last). The sorted samples are then measured against the
// nearest target centroid; that distance is kept but NOT re-sorted, so the
// per-stage intake comes from the dense part of the source.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "pmsda/clustering.hpp"
#include "pmsda/domain.hpp"
#include "pmsda/model.hpp"
#include "pmsda/random.hpp"

namespace pmsda {

struct ReplayEntry {
    Vector sample;
    std::size_t label = 0;
    double distance = 0.0;
    SubjectId origin_subject;
    std::uint64_t insertion = 0;
};

struct ScoredSample {
    Vector sample;
    std::size_t label = 0;
    double distance = 0.0;
    SubjectId origin_subject;
};

struct ReplayMemory {
    std::vector<ReplayEntry> entries;
    std::size_t capacity = 200;
    std::size_t per_stage_intake = 200;
    std::uint64_t next_insertion = 0;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }

    bool sorted() const {
        return std::is_sorted(entries.begin(), entries.end(), [](const ReplayEntry& a, const ReplayEntry& b) {
            return a.distance < b.distance;
        });
    }
};

using ClusterFn = std::function<Clustering(std::span<const Vector>)>;

namespace detail {

inline std::vector<ScoredSample> score_with(const ModelParams& params, const SubjectDomain& source,
                                            const SubjectDomain& target, const ClusterFn& cluster) {
    if (source.empty()) throw DomainError("score_source_against_target: source is empty");
    if (target.empty()) throw DomainError("score_source_against_target: target is empty");
    if (!source.labeled()) throw DomainError("score_source_against_target: source must be labelled");

    const auto es = embed_all(params, source.samples);
    const Clustering ks = cluster(es);
    const auto zs = min_over_clusters(centroid_distance_matrix(es, ks.centroids));
    std::vector<std::size_t> order(source.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return zs[a] < zs[b]; });

    const auto et = embed_all(params, target.samples);
    const Clustering kt = cluster(et);
    std::vector<Vector> sorted_emb;
    sorted_emb.reserve(order.size());
    for (auto i : order) sorted_emb.push_back(es[i]);
    const auto zt = min_over_clusters(centroid_distance_matrix(sorted_emb, kt.centroids));

    std::vector<ScoredSample> out;
    out.reserve(order.size());
    for (std::size_t k = 0; k < order.size(); ++k)
        out.push_back({source.samples[order[k]], source.label(order[k]), zt[k], source.subject_id});
    return out;
}

}  // namespace detail

/// Source samples in ascending own-cluster distance, each carrying its distance to the nearest target centroid.
inline std::vector<ScoredSample> score_source_against_target(const ModelParams& params, const SubjectDomain& source,
                                                             const SubjectDomain& target,
                                                             const DbscanConfig& dbscan_cfg) {
    return detail::score_with(params, source, target,
                              [&](std::span<const Vector> pts) { return dbscan(pts, dbscan_cfg); });
}

/// Takes the first per_stage_intake scored samples, unions them with the
/// memory, sorts ascending by distance (ties: origin subject, then insertion
/// order) and truncates to capacity.
inline ReplayMemory merge_into_memory(ReplayMemory memory, std::span<const ScoredSample> scored,
                                      std::size_t intake) {
    const std::size_t n = std::min(intake, scored.size());
    for (std::size_t k = 0; k < n; ++k) {
        const auto& s = scored[k];
        memory.entries.push_back({s.sample, s.label, s.distance, s.origin_subject, memory.next_insertion++});
    }
    std::sort(memory.entries.begin(), memory.entries.end(), [](const ReplayEntry& a, const ReplayEntry& b) {
        return std::tie(a.distance, a.origin_subject, a.insertion) < std::tie(b.distance, b.origin_subject, b.insertion);
    });
    if (memory.entries.size() > memory.capacity) memory.entries.resize(memory.capacity);
    return memory;
}

inline ReplayMemory merge_into_memory(ReplayMemory memory, std::span<const ScoredSample> scored) {
    const std::size_t intake = memory.per_stage_intake;
    return merge_into_memory(std::move(memory), scored, intake);
}

enum class ReplayVariant { none, random, kmeans_closest, dbscan_per_subject, density_dictionary };

inline constexpr std::size_t kPerSubjectQuota = 100;
inline constexpr std::size_t kKmeansIterations = 25;

inline ReplayVariant parse_replay_variant(const std::string& s) {
    if (s == "none") return ReplayVariant::none;
    if (s == "random") return ReplayVariant::random;
    if (s == "kmeans_closest") return ReplayVariant::kmeans_closest;
    if (s == "dbscan_per_subject") return ReplayVariant::dbscan_per_subject;
    if (s == "density_dictionary") return ReplayVariant::density_dictionary;
    throw ConfigError("unknown replay variant '" + s +
                      "' (expected none|random|kmeans_closest|dbscan_per_subject|density_dictionary)");
}

inline std::string to_string(ReplayVariant v) {
    switch (v) {
        case ReplayVariant::none: return "none";
        case ReplayVariant::random: return "random";
        case ReplayVariant::kmeans_closest: return "kmeans_closest";
        case ReplayVariant::dbscan_per_subject: return "dbscan_per_subject";
        case ReplayVariant::density_dictionary: return "density_dictionary";
    }
    return "density_dictionary";
}

inline constexpr ReplayVariant kAllReplayVariants[] = {ReplayVariant::none, ReplayVariant::random,
                                                       ReplayVariant::kmeans_closest, ReplayVariant::dbscan_per_subject,
                                                       ReplayVariant::density_dictionary};

/// Updates the memory after adapting to `source` according to the chosen selection strategy.
inline ReplayMemory replay_variant_select(ReplayVariant variant, ReplayMemory memory, const ModelParams& params,
                                          const SubjectDomain& source, const SubjectDomain& target,
                                          const DbscanConfig& dbscan_cfg, std::uint64_t seed) {
    switch (variant) {
        case ReplayVariant::none:
            memory.entries.clear();
            return memory;
        case ReplayVariant::random: {
            // Uniform random keys make the retained set a uniform sample of everything offered.
            Rng rng(derive_seed(seed, {stable_hash("replay-random"), stable_hash(source.subject_id)}));
            std::vector<std::size_t> idx(source.size());
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), rng);
            std::uniform_real_distribution<double> key(0.0, 1.0);
            std::vector<ScoredSample> picked;
            for (std::size_t k = 0; k < std::min(memory.per_stage_intake, idx.size()); ++k)
                picked.push_back({source.samples[idx[k]], source.label(idx[k]), key(rng), source.subject_id});
            return merge_into_memory(std::move(memory), picked);
        }
        case ReplayVariant::kmeans_closest: {
            auto cluster = [&](std::span<const Vector> pts) {
                const std::size_t k = dbscan(pts, dbscan_cfg).cluster_count;
                return kmeans(pts, k, kKmeansIterations, seed);
            };
            const auto scored = detail::score_with(params, source, target, cluster);
            return merge_into_memory(std::move(memory), scored);
        }
        case ReplayVariant::dbscan_per_subject: {
            const auto scored = score_source_against_target(params, source, target, dbscan_cfg);
            return merge_into_memory(std::move(memory), scored, kPerSubjectQuota);
        }
        case ReplayVariant::density_dictionary: {
            const auto scored = score_source_against_target(params, source, target, dbscan_cfg);
            return merge_into_memory(std::move(memory), scored);
        }
    }
    throw ConfigError("unknown replay variant");
}

inline nlohmann::json to_json(const ReplayMemory& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : m.entries)
        arr.push_back({{"subject", e.origin_subject}, {"label", e.label}, {"distance", e.distance}});
    return arr;
}

}  // namespace pmsda
