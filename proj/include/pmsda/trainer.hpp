#pragma once

// Progressive curriculum over source subjects: rank the unvisited sources
// against the target, adapt to the selected ones one stage at a time with
// L_total = L_s + L_t + L_r + L_dis, refresh the replay memory after every
// stage, and repeat until top_s sources have been visited. Also hosts the
// source-introduction baselines and the source-only / oracle bounds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pmsda/alignment.hpp"
#include "pmsda/clustering.hpp"
#include "pmsda/domain.hpp"
#include "pmsda/model.hpp"
#include "pmsda/pseudolabel.hpp"
#include "pmsda/random.hpp"
#include "pmsda/replay.hpp"
#include "pmsda/similarity.hpp"

namespace pmsda {

enum class Strategy { pmsda, random_samples, closest_samples, closest_subjects_keep_all, no_adapt, oracle };

inline Strategy parse_strategy(const std::string& s) {
    if (s == "pmsda") return Strategy::pmsda;
    if (s == "random_samples") return Strategy::random_samples;
    if (s == "closest_samples") return Strategy::closest_samples;
    if (s == "closest_subjects_keep_all") return Strategy::closest_subjects_keep_all;
    if (s == "no_adapt") return Strategy::no_adapt;
    if (s == "oracle") return Strategy::oracle;
    throw ConfigError("unknown strategy '" + s +
                      "' (expected pmsda|random_samples|closest_samples|closest_subjects_keep_all|no_adapt|oracle)");
}

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::pmsda: return "pmsda";
        case Strategy::random_samples: return "random_samples";
        case Strategy::closest_samples: return "closest_samples";
        case Strategy::closest_subjects_keep_all: return "closest_subjects_keep_all";
        case Strategy::no_adapt: return "no_adapt";
        case Strategy::oracle: return "oracle";
    }
    return "pmsda";
}

enum class SelectionCriterion { cosine, mmd };

inline SelectionCriterion parse_criterion(const std::string& s) {
    if (s == "cosine") return SelectionCriterion::cosine;
    if (s == "mmd") return SelectionCriterion::mmd;
    throw ConfigError("unknown selection criterion '" + s + "' (expected cosine|mmd)");
}

inline std::string to_string(SelectionCriterion c) { return c == SelectionCriterion::mmd ? "mmd" : "cosine"; }

struct TrainConfig {
    SelectionConfig selection;
    ThresholdSchedule schedule;
    MmdConfig mmd;
    SgdConfig sgd;
    DbscanConfig dbscan;
    std::size_t epochs_per_stage = 10;
    std::size_t batch_size = 16;
    Strategy strategy = Strategy::pmsda;
    ReplayVariant replay = ReplayVariant::density_dictionary;
    SelectionCriterion criterion = SelectionCriterion::cosine;
    std::size_t replay_capacity = 200;
    std::size_t replay_intake = 200;
    std::size_t hidden_dim = 16;
    /// Augmentation noise as a fraction of the target's mean per-feature std.
    double augment_strength = 0.1;
    /// Evaluate target accuracy after every epoch (otherwise only at stage ends).
    bool evaluate_every_epoch = true;
    std::uint64_t seed = 0;

    void validate() const {
        selection.validate();
        schedule.validate();
        mmd.validate();
        sgd.validate();
        dbscan.validate();
        if (epochs_per_stage < 1) throw ConfigError("epochs_per_stage must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (replay_capacity < 1) throw ConfigError("replay_capacity must be >= 1");
        if (replay_intake < 1) throw ConfigError("replay_intake must be >= 1");
        if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
        if (!(augment_strength >= 0.0)) throw ConfigError("augment_strength must be >= 0");
    }
};

/// One row per (stage, epoch).
struct MetricsRecord {
    std::size_t stage = 0;
    std::size_t epoch = 0;        // global epoch counter
    std::size_t stage_epoch = 0;  // epoch within the stage
    SubjectId source;
    double loss_source = 0.0;
    double loss_target = 0.0;
    double loss_replay = 0.0;
    double loss_dis = 0.0;
    double loss_total = 0.0;
    double tau = 0.0;
    std::size_t pseudo_labels = 0;
    std::size_t training_mix = 0;
    double target_accuracy = 0.0;
    double wall_time_seconds = 0.0;
};

struct MetricsTrace {
    std::vector<MetricsRecord> records;
};

struct RankingRound {
    SimilarityTable table;
    std::vector<SubjectId> selected;
};

struct CurriculumState {
    std::vector<SubjectId> visited;
    std::size_t stage = 0;
    std::size_t global_epoch = 0;
    ReplayMemory memory;
    ModelParams model;
    GradientSet velocity;
    MetricsTrace trace;
    std::vector<RankingRound> rankings;
    /// Wall time of each completed stage (training plus replay update).
    std::vector<double> stage_wall_times;
    /// Memory entry count per origin subject.
    std::map<SubjectId, std::size_t> memory_origin_counts() const {
        std::map<SubjectId, std::size_t> c;
        for (const auto& e : memory.entries) ++c[e.origin_subject];
        return c;
    }
    std::size_t rerank_count() const { return rankings.empty() ? 0 : rankings.size() - 1; }
};

inline double evaluate(const ModelParams& model, const SubjectDomain& domain) {
    if (!domain.labeled()) throw DomainError("evaluate: domain '" + domain.subject_id + "' is unlabeled");
    if (domain.empty()) throw DomainError("evaluate: domain '" + domain.subject_id + "' is empty");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < domain.size(); ++i)
        if (predict(model, domain.samples[i]) == (*domain.labels)[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(domain.size());
}

struct StageOptions {
    /// Adds pseudo-label and alignment terms; disabled for the source-only and oracle bounds.
    bool target_terms = true;
    /// Replay stream usage: off for no-replay regimes.
    bool use_replay = true;
    /// Held-out labelled target split used only for monitoring accuracy.
    const SubjectDomain* evaluation = nullptr;
};

namespace detail {

inline std::size_t class_count_of(std::span<const SubjectDomain> domains) {
    std::size_t c = 2;
    for (const auto& d : domains)
        if (d.labels)
            for (auto y : *d.labels) c = std::max(c, y + 1);
    return c;
}

inline std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    Rng rng(seed);
    std::shuffle(v.begin(), v.end(), rng);
    return v;
}

inline SubjectDomain pool_domains(std::span<const SubjectDomain> parts, const SubjectId& id) {
    SubjectDomain out{id, parts.empty() ? 0 : parts.front().dim, {}, std::vector<std::size_t>{}, {}, {}};
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            out.train_idx.push_back(out.samples.size());
            out.samples.push_back(p.samples[i]);
            out.labels->push_back(p.label(i));
        }
    }
    return out;
}

}  // namespace detail

/// Adapts the model to one source for epochs_per_stage epochs. Each epoch
/// refreshes pseudo-labels at the current threshold and walks aligned
/// mini-batches of (source, target, replay), cycling the shorter streams.
inline void stage_step(CurriculumState& state, const SubjectDomain& source, const SubjectDomain& target,
                       const TrainConfig& cfg, const StageOptions& opts = {}) {
    using clock = std::chrono::steady_clock;
    if (source.empty()) throw DomainError("stage_step: source '" + source.subject_id + "' is empty");
    if (!source.labeled()) throw DomainError("stage_step: source '" + source.subject_id + "' is unlabeled");
    if (cfg.epochs_per_stage < 1) throw ConfigError("epochs_per_stage must be >= 1");
    if (opts.target_terms && target.empty()) throw DomainError("stage_step: target is empty");
    if (state.velocity.encoder_weights.size() == 0) state.velocity = GradientSet(state.model);

    // Replay stream: the memory, or the current source while the memory is still empty.
    std::vector<LabeledSample> replay;
    if (opts.use_replay && cfg.replay != ReplayVariant::none) {
        if (state.memory.empty()) {
            for (std::size_t i = 0; i < source.size(); ++i) replay.push_back({source.samples[i], source.label(i)});
        } else {
            for (const auto& e : state.memory.entries) replay.push_back({e.sample, e.label});
        }
    }
    const double strength =
        opts.target_terms ? cfg.augment_strength * mean_feature_std(target.samples) : 0.0;
    const std::size_t B = cfg.batch_size;
    const std::size_t stage_index = state.stage + 1;

    for (std::size_t e = 0; e < cfg.epochs_per_stage; ++e) {
        const auto t0 = clock::now();
        const std::uint64_t epoch_seed = derive_seed(cfg.seed, {stable_hash("epoch"), state.global_epoch, stage_index});
        const double tau = current_tau(cfg.schedule, state.global_epoch);

        std::vector<std::optional<std::size_t>> pseudo(opts.target_terms ? target.size() : 0);
        std::size_t pl_count = 0;
        if (opts.target_terms) {
            const auto pls = assign_pseudo_labels(state.model, target, cfg.schedule, state.global_epoch, strength,
                                                  derive_seed(epoch_seed, {stable_hash("acpl")}));
            for (const auto& p : pls.entries) pseudo[p.index] = p.label;
            pl_count = pls.size();
        }

        const auto order_s = detail::shuffled(source.size(), derive_seed(epoch_seed, {1}));
        const auto order_t = detail::shuffled(opts.target_terms ? target.size() : 0, derive_seed(epoch_seed, {2}));
        const auto order_r = detail::shuffled(replay.size(), derive_seed(epoch_seed, {3}));
        std::size_t longest = source.size();
        if (opts.target_terms) longest = std::max(longest, target.size());
        longest = std::max(longest, replay.size());
        const std::size_t batches = (longest + B - 1) / B;

        double sum_s = 0, sum_t = 0, sum_r = 0, sum_dis = 0;
        std::vector<LabeledSample> sb, tb, rb;
        std::vector<Vector> align_inputs;
        for (std::size_t b = 0; b < batches; ++b) {
            sb.clear();
            tb.clear();
            rb.clear();
            align_inputs.clear();
            std::vector<std::size_t> t_idx;
            for (std::size_t k = 0; k < B; ++k) {
                const std::size_t pos = b * B + k;
                const std::size_t si = order_s[pos % order_s.size()];
                sb.push_back({source.samples[si], source.label(si)});
                if (opts.target_terms) {
                    const std::size_t ti = order_t[pos % order_t.size()];
                    t_idx.push_back(ti);
                    if (pseudo[ti]) tb.push_back({target.samples[ti], *pseudo[ti]});
                }
                if (!replay.empty()) rb.push_back(replay[order_r[pos % order_r.size()]]);
            }

            LossAndGrad ls = backward(state.model, sb);
            GradientSet grads = std::move(ls.grads);
            sum_s += ls.loss;
            if (!tb.empty()) {
                LossAndGrad lt = backward(state.model, tb);
                grads += lt.grads;
                sum_t += lt.loss;
            }
            if (!rb.empty()) {
                LossAndGrad lr = backward(state.model, rb);
                grads += lr.grads;
                sum_r += lr.loss;
            }
            if (opts.target_terms) {
                for (const auto& s : sb) align_inputs.emplace_back(s.x.begin(), s.x.end());
                for (auto ti : t_idx) align_inputs.push_back(target.samples[ti]);
                for (const auto& r : rb) align_inputs.emplace_back(r.x.begin(), r.x.end());
                const std::size_t ns = sb.size(), nt = t_idx.size();
                const MmdConfig& mmd = cfg.mmd;
                LossAndGrad ld = backward_scalar(
                    state.model, align_inputs, [&](std::span<const Vector> emb, std::vector<Vector>& g) {
                        auto s = emb.subspan(0, ns);
                        auto t = emb.subspan(ns, nt);
                        auto r = emb.subspan(ns + nt);
                        ThreeDomainResult d = three_domain_discrepancy(s, t, r, mmd);
                        for (std::size_t i = 0; i < ns; ++i) g[i] = std::move(d.grad_s[i]);
                        for (std::size_t i = 0; i < nt; ++i) g[ns + i] = std::move(d.grad_t[i]);
                        for (std::size_t i = 0; i < r.size(); ++i) g[ns + nt + i] = std::move(d.grad_r[i]);
                        return d.value;
                    });
                grads += ld.grads;
                sum_dis += ld.loss;
            }
            sgd_step(state.model, grads, cfg.sgd, state.velocity);
        }

        MetricsRecord rec;
        rec.stage = stage_index;
        rec.epoch = state.global_epoch;
        rec.stage_epoch = e;
        rec.source = source.subject_id;
        const double nb = static_cast<double>(batches);
        rec.loss_source = sum_s / nb;
        rec.loss_target = sum_t / nb;
        rec.loss_replay = sum_r / nb;
        rec.loss_dis = sum_dis / nb;
        rec.loss_total = rec.loss_source + rec.loss_target + rec.loss_replay + rec.loss_dis;
        rec.tau = opts.target_terms ? tau : 0.0;
        rec.pseudo_labels = pl_count;
        rec.training_mix = source.size() + replay.size() + (opts.target_terms ? target.size() : 0);
        rec.wall_time_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        if (opts.evaluation && (cfg.evaluate_every_epoch || e + 1 == cfg.epochs_per_stage))
            rec.target_accuracy = evaluate(state.model, *opts.evaluation);
        state.trace.records.push_back(rec);
        ++state.global_epoch;
    }
}

struct RunResult {
    ModelParams model;
    CurriculumState state;
    double final_accuracy = 0.0;
    double wall_time_seconds = 0.0;
    Strategy strategy = Strategy::pmsda;
    std::uint64_t seed = 0;
};

namespace detail {

inline CurriculumState fresh_state(std::span<const SubjectDomain> sources, const SubjectDomain& target,
                                   const TrainConfig& cfg) {
    std::vector<SubjectDomain> all(sources.begin(), sources.end());
    all.push_back(target);
    CurriculumState st;
    const std::size_t dim = target.dim;
    for (const auto& s : sources)
        if (s.dim != dim) throw DomainError("source '" + s.subject_id + "' dimension differs from target");
    st.model = ModelParams::initialize(dim, cfg.hidden_dim, class_count_of(all), cfg.seed);
    st.velocity = GradientSet(st.model);
    st.memory.capacity = cfg.replay_capacity;
    st.memory.per_stage_intake = cfg.replay_intake;
    return st;
}

inline SimilarityTable rank(const CurriculumState& st, std::span<const SubjectDomain> unvisited,
                            const SubjectDomain& target, const TrainConfig& cfg) {
    const std::uint64_t seed = derive_seed(cfg.seed, {stable_hash("rank"), st.rankings.size()});
    return cfg.criterion == SelectionCriterion::mmd
               ? mmd_rank_sources(st.model, unvisited, target, cfg.selection, seed, st.stage)
               : rank_sources(st.model, unvisited, target, cfg.selection, seed, st.stage);
}

inline void update_memory(CurriculumState& st, const SubjectDomain& source, const SubjectDomain& target,
                          const TrainConfig& cfg) {
    st.memory = replay_variant_select(cfg.replay, std::move(st.memory), st.model, source, target, cfg.dbscan,
                                      derive_seed(cfg.seed, {stable_hash("replay"), st.stage}));
}

/// Subject curriculum shared by pmsda and the keep-all baseline.
inline void subject_curriculum(CurriculumState& st, std::span<const SubjectDomain> sources,
                               const SubjectDomain& target_train, const SubjectDomain& eval, const TrainConfig& cfg,
                               bool keep_all) {
    using clock = std::chrono::steady_clock;
    std::vector<SubjectDomain> unvisited(sources.begin(), sources.end());
    std::vector<SubjectDomain> seen;
    StageOptions opts;
    opts.evaluation = &eval;
    opts.use_replay = !keep_all;
    while (st.visited.size() < cfg.selection.top_s && !unvisited.empty()) {
        RankingRound round;
        round.table = rank(st, unvisited, target_train, cfg);
        round.selected = select_above_threshold(round.table, cfg.selection, cfg.selection.top_s - st.visited.size());
        st.rankings.push_back(round);
        for (const auto& id : round.selected) {
            auto it = std::find_if(unvisited.begin(), unvisited.end(),
                                   [&](const SubjectDomain& d) { return d.subject_id == id; });
            const auto t0 = clock::now();
            if (keep_all) {
                seen.push_back(*it);
                SubjectDomain mix = pool_domains(seen, id);
                stage_step(st, mix, target_train, cfg, opts);
            } else {
                stage_step(st, *it, target_train, cfg, opts);
                update_memory(st, *it, target_train, cfg);
            }
            st.stage_wall_times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
            st.visited.push_back(id);
            ++st.stage;
            unvisited.erase(it);
        }
    }
}

inline std::size_t packet_size(std::span<const SubjectDomain> sources) {
    std::vector<double> sizes;
    for (const auto& s : sources) sizes.push_back(static_cast<double>(s.size()));
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(median(sizes))));
}

struct PooledSample {
    const Vector* x;
    std::size_t label;
};

inline SubjectDomain packet_domain(std::span<const PooledSample> items, std::size_t dim, const SubjectId& id) {
    SubjectDomain d{id, dim, {}, std::vector<std::size_t>{}, {}, {}};
    for (const auto& it : items) {
        d.train_idx.push_back(d.samples.size());
        d.samples.push_back(*it.x);
        d.labels->push_back(it.label);
    }
    return d;
}

/// Sample-level curricula: packets of median-subject size, either random or
/// the remaining samples closest (by cosine) to the target embeddings.
inline void packet_curriculum(CurriculumState& st, std::span<const SubjectDomain> sources,
                              const SubjectDomain& target_train, const SubjectDomain& eval, const TrainConfig& cfg,
                              bool closest) {
    using clock = std::chrono::steady_clock;
    std::vector<PooledSample> pool;
    for (const auto& s : sources)
        for (std::size_t i = 0; i < s.size(); ++i) pool.push_back({&s.samples[i], s.label(i)});
    const std::size_t packet = packet_size(sources);
    if (!closest) {
        Rng rng(derive_seed(cfg.seed, {stable_hash("random-packets")}));
        std::shuffle(pool.begin(), pool.end(), rng);
    }
    StageOptions opts;
    opts.evaluation = &eval;
    const std::size_t stages = std::min(cfg.selection.top_s, sources.size());
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < stages && cursor < pool.size(); ++k) {
        if (closest) {
            // Mean unit target embedding; cos(e, t_j) averaged over j equals <e/|e|, mean_j t_j/|t_j|>.
            Vector centre(st.model.hidden_dim(), 0.0);
            for (const auto& x : target_train.samples) {
                const Vector e = embed(st.model, x);
                const double n = l2_norm(e);
                if (n > 0.0)
                    for (std::size_t d = 0; d < e.size(); ++d) centre[d] += e[d] / n;
            }
            std::vector<std::pair<double, std::size_t>> score;
            for (std::size_t i = cursor; i < pool.size(); ++i) {
                const Vector e = embed(st.model, *pool[i].x);
                const double n = l2_norm(e);
                score.emplace_back(n > 0.0 ? dot(e, centre) / n : -1e300, i);
            }
            std::stable_sort(score.begin(), score.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
            std::vector<PooledSample> reordered(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cursor));
            for (const auto& [_, i] : score) reordered.push_back(pool[i]);
            pool = std::move(reordered);
        }
        const std::size_t hi = std::min(pool.size(), cursor + packet);
        const SubjectId id = "packet" + std::to_string(k + 1);
        SubjectDomain pkt = packet_domain(std::span(pool).subspan(cursor, hi - cursor), target_train.dim, id);
        cursor = hi;
        const auto t0 = clock::now();
        stage_step(st, pkt, target_train, cfg, opts);
        update_memory(st, pkt, target_train, cfg);
        st.stage_wall_times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
        st.visited.push_back(id);
        ++st.stage;
    }
}

inline void supervised_only(CurriculumState& st, const SubjectDomain& train, const SubjectDomain& eval,
                            const TrainConfig& cfg, std::size_t stages) {
    using clock = std::chrono::steady_clock;
    TrainConfig c = cfg;
    c.epochs_per_stage = cfg.epochs_per_stage * std::max<std::size_t>(1, stages);
    StageOptions opts;
    opts.target_terms = false;
    opts.use_replay = false;
    opts.evaluation = &eval;
    const auto t0 = clock::now();
    stage_step(st, train, train, c, opts);
    st.stage_wall_times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    st.visited.push_back(train.subject_id);
    ++st.stage;
}

}  // namespace detail

/// Runs any strategy. `target` must carry labels; adaptation sees only its
/// unlabeled train split, and accuracy is measured on its test split.
inline RunResult run_strategy(std::span<const SubjectDomain> sources, const SubjectDomain& target,
                              const TrainConfig& cfg) {
    using clock = std::chrono::steady_clock;
    cfg.validate();
    if (sources.empty() && cfg.strategy != Strategy::oracle) throw DomainError("run: no source domains");
    if (!target.labeled()) throw DomainError("run: target needs hidden labels for evaluation");
    const auto t0 = clock::now();
    const SubjectDomain target_train = target.train_part().without_labels();
    const SubjectDomain eval = target.test_part();
    CurriculumState st = detail::fresh_state(sources, target, cfg);

    switch (cfg.strategy) {
        case Strategy::pmsda: detail::subject_curriculum(st, sources, target_train, eval, cfg, false); break;
        case Strategy::closest_subjects_keep_all:
            detail::subject_curriculum(st, sources, target_train, eval, cfg, true);
            break;
        case Strategy::random_samples: detail::packet_curriculum(st, sources, target_train, eval, cfg, false); break;
        case Strategy::closest_samples: detail::packet_curriculum(st, sources, target_train, eval, cfg, true); break;
        case Strategy::no_adapt: {
            const SubjectDomain pooled = detail::pool_domains(sources, "all_sources");
            detail::supervised_only(st, pooled, eval, cfg, std::min(cfg.selection.top_s, sources.size()));
            break;
        }
        case Strategy::oracle: {
            SubjectDomain labeled_train = target.train_part();
            labeled_train.subject_id = "target_labeled";
            detail::supervised_only(st, labeled_train, eval, cfg, std::min(cfg.selection.top_s, std::max<std::size_t>(1, sources.size())));
            break;
        }
    }

    RunResult r;
    r.final_accuracy = evaluate(st.model, eval);
    r.model = st.model;
    r.state = std::move(st);
    r.strategy = cfg.strategy;
    r.seed = cfg.seed;
    r.wall_time_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    return r;
}

inline RunResult run_curriculum(std::span<const SubjectDomain> sources, const SubjectDomain& target, TrainConfig cfg) {
    if (sources.empty()) throw DomainError("run_curriculum: need at least one source");
    cfg.strategy = Strategy::pmsda;
    return run_strategy(sources, target, cfg);
}

inline RunResult run_baseline(Strategy strategy, std::span<const SubjectDomain> sources, const SubjectDomain& target,
                              TrainConfig cfg) {
    if (strategy == Strategy::pmsda) throw ConfigError("run_baseline: pmsda is not a baseline");
    cfg.strategy = strategy;
    return run_strategy(sources, target, cfg);
}

}  // namespace pmsda
