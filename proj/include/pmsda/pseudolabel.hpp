#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pmsda/domain.hpp"
#include "pmsda/model.hpp"
#include "pmsda/numerics.hpp"
#include "pmsda/random.hpp"

namespace pmsda {

/// tau(e) = max(floor, tau0 - delta * floor(e / update_interval)).
struct ThresholdSchedule {
    double tau0 = 0.90;
    double delta = 0.01;
    std::size_t update_interval = 20;
    double floor = 0.50;

    void validate() const {
        if (!(tau0 > 0.0 && tau0 <= 1.0)) throw ConfigError("schedule.tau0 must lie in (0, 1]");
        if (!(delta >= 0.0)) throw ConfigError("schedule.delta must be >= 0");
        if (update_interval < 1) throw ConfigError("schedule.update_interval must be >= 1");
        if (!(floor >= 0.0 && floor < 1.0)) throw ConfigError("schedule.floor must lie in [0, 1)");
        if (tau0 < floor) throw ConfigError("schedule.tau0 must be >= schedule.floor");
    }
};

inline double current_tau(const ThresholdSchedule& s, std::size_t epoch) {
    const double steps = static_cast<double>(epoch / s.update_interval);
    return std::max(s.floor, s.tau0 - s.delta * steps);
}

/// Label-preserving perturbation: x plus seeded N(0, strength^2) noise per coordinate.
inline Vector augment(ConstVectorView x, double strength, std::uint64_t seed) {
    Vector out(x.begin(), x.end());
    if (strength == 0.0) return out;
    Rng rng(derive_seed(seed, {stable_hash("augment")}));
    std::normal_distribution<double> noise(0.0, strength);
    for (double& v : out) v += noise(rng);
    return out;
}

struct Confidence {
    std::size_t label = 0;
    double confidence = 0.0;
    Vector averaged;
};

/// Averages the class probabilities of x and of its augmented view.
inline Confidence acpl_confidence(const ModelParams& params, ConstVectorView x, double strength, std::uint64_t seed) {
    const Vector p = forward(params, x).probs;
    const Vector p_aug = strength == 0.0 ? p : forward(params, augment(x, strength, seed)).probs;
    Confidence c;
    c.averaged.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) c.averaged[i] = 0.5 * (p[i] + p_aug[i]);
    c.label = argmax(c.averaged);
    c.confidence = c.averaged[c.label];
    return c;
}

struct PseudoLabel {
    std::size_t index = 0;
    std::size_t label = 0;
    double confidence = 0.0;
};

struct PseudoLabelSet {
    std::vector<PseudoLabel> entries;
    double tau = 1.0;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }
};

/// Keeps the samples whose confidence is strictly greater than the threshold.
inline PseudoLabelSet select_confident(std::span<const Confidence> confidences, double tau) {
    PseudoLabelSet out;
    out.tau = tau;
    for (std::size_t i = 0; i < confidences.size(); ++i)
        if (confidences[i].confidence > tau) out.entries.push_back({i, confidences[i].label, confidences[i].confidence});
    return out;
}

inline PseudoLabelSet assign_pseudo_labels(const ModelParams& params, const SubjectDomain& target,
                                           const ThresholdSchedule& schedule, std::size_t epoch, double strength,
                                           std::uint64_t seed) {
    if (target.empty()) throw DomainError("assign_pseudo_labels: empty target");
    std::vector<Confidence> conf;
    conf.reserve(target.size());
    for (std::size_t i = 0; i < target.size(); ++i)
        conf.push_back(acpl_confidence(params, target.samples[i], strength, derive_seed(seed, {i})));
    return select_confident(conf, current_tau(schedule, epoch));
}

/// Mean per-feature standard deviation; scales the augmentation strength.
inline double mean_feature_std(std::span<const Vector> xs) {
    if (xs.size() < 2) return 0.0;
    const std::size_t dim = xs.front().size();
    double total = 0.0;
    std::vector<double> col(xs.size());
    for (std::size_t d = 0; d < dim; ++d) {
        for (std::size_t i = 0; i < xs.size(); ++i) col[i] = xs[i][d];
        total += stddev(col);
    }
    return total / static_cast<double>(dim);
}

}  // namespace pmsda
