#pragma once

// Mini-batch cosine similarity between source and target embeddings, the
// min-max normalised score table, and threshold-gated source selection.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "pmsda/alignment.hpp"
#include "pmsda/domain.hpp"
#include "pmsda/model.hpp"
#include "pmsda/numerics.hpp"
#include "pmsda/random.hpp"

namespace pmsda {

struct SelectionConfig {
    double gamma = 0.8;
    std::size_t top_s = 5;
    std::size_t batch_size = 16;

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("selection.gamma must lie in (0, 1]");
        if (top_s < 1) throw ConfigError("selection.top_s must be >= 1");
        if (batch_size < 1) throw ConfigError("selection.batch_size must be >= 1");
    }
};

struct SimilarityTable {
    std::map<SubjectId, double> scores;
    std::map<SubjectId, double> normalized;
    std::size_t computed_at_stage = 0;
};

/// Mean over aligned mini-batches of the mean per-pair cosine similarity of
/// embeddings. Both domains are shuffled with the same seed; the shorter one cycles.
inline double domain_similarity(const ModelParams& params, const SubjectDomain& source, const SubjectDomain& target,
                                std::size_t batch_size, std::uint64_t seed) {
    if (source.empty()) throw DomainError("domain_similarity: source '" + source.subject_id + "' is empty");
    if (target.empty()) throw DomainError("domain_similarity: target '" + target.subject_id + "' is empty");
    if (batch_size == 0) throw DomainError("domain_similarity: batch_size must be positive");
    auto permutation = [seed](std::size_t n) {
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), 0);
        Rng rng(derive_seed(seed, {stable_hash("similarity-shuffle")}));
        std::shuffle(p.begin(), p.end(), rng);
        return p;
    };
    const auto ps = permutation(source.size());
    const auto pt = permutation(target.size());
    const auto es = embed_all(params, source.samples);
    const auto et = embed_all(params, target.samples);

    const std::size_t pairs = std::max(source.size(), target.size());
    const std::size_t batches = (pairs + batch_size - 1) / batch_size;
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t lo = b * batch_size;
        const std::size_t hi = std::min(pairs, lo + batch_size);
        double acc = 0.0;
        for (std::size_t k = lo; k < hi; ++k) acc += cosine_similarity(es[ps[k % ps.size()]], et[pt[k % pt.size()]]);
        total += acc / static_cast<double>(hi - lo);
    }
    return total / static_cast<double>(batches);
}

namespace detail {

/// Min-max scaling to [0,1]; a degenerate range maps every score to 1.
inline std::map<SubjectId, double> min_max(const std::map<SubjectId, double>& scores) {
    std::map<SubjectId, double> out;
    if (scores.empty()) return out;
    double lo = scores.begin()->second, hi = lo;
    for (const auto& [_, v] : scores) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (const auto& [id, v] : scores) out[id] = hi > lo ? (v - lo) / (hi - lo) : 1.0;
    return out;
}

}  // namespace detail

inline SimilarityTable table_from_scores(std::map<SubjectId, double> scores, std::size_t stage = 0) {
    SimilarityTable t;
    t.normalized = detail::min_max(scores);
    t.scores = std::move(scores);
    t.computed_at_stage = stage;
    return t;
}

inline SimilarityTable rank_sources(const ModelParams& params, std::span<const SubjectDomain> unvisited,
                                    const SubjectDomain& target, const SelectionConfig& cfg, std::uint64_t seed,
                                    std::size_t stage = 0) {
    if (unvisited.empty()) throw DomainError("rank_sources: no unvisited sources");
    std::map<SubjectId, double> scores;
    for (const auto& s : unvisited) scores[s.subject_id] = domain_similarity(params, s, target, cfg.batch_size, seed);
    return table_from_scores(std::move(scores), stage);
}

/// Negative MMD between full-domain embeddings (higher means closer).
inline SimilarityTable mmd_rank_sources(const ModelParams& params, std::span<const SubjectDomain> unvisited,
                                        const SubjectDomain& target, const SelectionConfig& cfg, std::uint64_t seed,
                                        std::size_t stage = 0) {
    (void)cfg;
    (void)seed;
    if (unvisited.empty()) throw DomainError("mmd_rank_sources: no unvisited sources");
    if (target.empty()) throw DomainError("mmd_rank_sources: target is empty");
    const auto et = embed_all(params, target.samples);
    MmdConfig mmd;
    mmd.lambda = 0.0;
    std::map<SubjectId, double> scores;
    for (const auto& s : unvisited) {
        if (s.empty()) throw DomainError("mmd_rank_sources: source '" + s.subject_id + "' is empty");
        const auto es = embed_all(params, s.samples);
        scores[s.subject_id] = -mmd_pair(es, et, mmd).value;
    }
    return table_from_scores(std::move(scores), stage);
}

/// Subjects whose normalised score exceeds gamma, by descending raw score
/// (ties by ascending id), truncated to the budget. Falls back to the single
/// best subject when nothing clears the threshold.
inline std::vector<SubjectId> select_above_threshold(const SimilarityTable& table, const SelectionConfig& cfg,
                                                     std::size_t remaining_budget) {
    if (table.scores.empty()) throw DomainError("select_above_threshold: empty table");
    if (remaining_budget == 0) throw DomainError("select_above_threshold: remaining budget must be >= 1");
    std::vector<SubjectId> ids;
    for (const auto& [id, _] : table.scores) ids.push_back(id);
    std::stable_sort(ids.begin(), ids.end(), [&](const SubjectId& a, const SubjectId& b) {
        return table.scores.at(a) > table.scores.at(b);
    });
    std::vector<SubjectId> out;
    for (const auto& id : ids)
        if (table.normalized.at(id) > cfg.gamma) out.push_back(id);
    if (out.empty()) out.push_back(ids.front());
    if (out.size() > remaining_budget) out.resize(remaining_budget);
    return out;
}

inline nlohmann::json to_json(const SimilarityTable& t, std::span<const SubjectId> selected) {
    nlohmann::json scores = nlohmann::json::object(), normalized = nlohmann::json::object();
    for (const auto& [id, v] : t.scores) scores[id] = v;
    for (const auto& [id, v] : t.normalized) normalized[id] = v;
    return nlohmann::json{{"stage", t.computed_at_stage},
                          {"scores", scores},
                          {"normalized", normalized},
                          {"selected", std::vector<SubjectId>(selected.begin(), selected.end())}};
}

}  // namespace pmsda
