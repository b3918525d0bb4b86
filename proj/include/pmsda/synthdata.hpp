#pragma once

// Seeded synthetic subject domains. Each subject places class anchors on a
// rotated axis and offsets the whole subject by a mean shift; sources sit at
// graded distances from the target so the ground-truth similarity order is known.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "pmsda/domain.hpp"
#include "pmsda/numerics.hpp"
#include "pmsda/random.hpp"

namespace pmsda {

struct SubjectSpec {
    SubjectId subject_id;
    std::size_t class_count = 2;
    std::vector<std::size_t> samples_per_class{100, 100};
    Vector mean_shift;
    std::uint64_t rotation_seed = 0;
    /// Angle (radians) between the subject's class axis and the canonical axis.
    double rotation_angle = 0.0;
    double noise_std = 0.5;
    std::size_t dim = 8;
    double anchor_radius = 2.0;

    void validate() const {
        if (class_count < 2) throw ConfigError(subject_id + ": class_count must be >= 2");
        if (samples_per_class.size() != class_count)
            throw ConfigError(subject_id + ": samples_per_class must have class_count entries");
        if (std::all_of(samples_per_class.begin(), samples_per_class.end(), [](auto n) { return n == 0; }))
            throw ConfigError(subject_id + ": at least one class needs samples");
        if (dim < 2) throw ConfigError(subject_id + ": dim must be >= 2");
        if (mean_shift.size() != dim) throw ConfigError(subject_id + ": mean_shift must have dim entries");
        if (!(noise_std >= 0.0)) throw ConfigError(subject_id + ": noise_std must be >= 0");
        if (!all_finite(mean_shift)) throw ConfigError(subject_id + ": mean_shift must be finite");
    }

    /// Orthonormal pair (a, b): a is the rotated class axis, b completes the anchor plane.
    std::pair<Vector, Vector> class_plane() const {
        Rng rng(derive_seed(rotation_seed, {stable_hash("rotation")}));
        std::normal_distribution<double> n01;
        auto random_orthogonal = [&](const std::vector<Vector>& basis) {
            for (;;) {
                Vector v(dim);
                for (double& x : v) x = n01(rng);
                for (const auto& e : basis) {
                    const double p = dot(v, e);
                    for (std::size_t i = 0; i < dim; ++i) v[i] -= p * e[i];
                }
                const double n = l2_norm(v);
                if (n > 1e-8) {
                    for (double& x : v) x /= n;
                    return v;
                }
            }
        };
        Vector e0(dim, 0.0);
        e0[0] = 1.0;
        const Vector v = random_orthogonal({e0});
        Vector a(dim);
        for (std::size_t i = 0; i < dim; ++i) a[i] = std::cos(rotation_angle) * e0[i] + std::sin(rotation_angle) * v[i];
        Vector b = dim > 2 ? random_orthogonal({a}) : Vector{-a[1], a[0]};
        return {a, b};
    }

    Vector class_center(std::size_t c) const {
        const auto [a, b] = class_plane();
        Vector center(mean_shift);
        double ca, cb;
        if (class_count == 2) {
            ca = c == 0 ? -anchor_radius : anchor_radius;
            cb = 0.0;
        } else {
            const double phi = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(class_count);
            ca = anchor_radius * std::cos(phi);
            cb = anchor_radius * std::sin(phi);
        }
        for (std::size_t i = 0; i < dim; ++i) center[i] += ca * a[i] + cb * b[i];
        return center;
    }
};

inline SubjectDomain generate_subject(const SubjectSpec& spec, std::uint64_t master_seed) {
    spec.validate();
    Rng rng(derive_seed(master_seed, {stable_hash(spec.subject_id)}));
    std::normal_distribution<double> n01;
    SubjectDomain d{spec.subject_id, spec.dim, {}, std::vector<std::size_t>{}, {}, {}};
    for (std::size_t c = 0; c < spec.class_count; ++c) {
        const Vector center = spec.class_center(c);
        for (std::size_t k = 0; k < spec.samples_per_class[c]; ++k) {
            Vector x(center);
            for (double& v : x) v += spec.noise_std * n01(rng);
            d.samples.push_back(std::move(x));
            d.labels->push_back(c);
        }
    }
    std::vector<std::size_t> perm(d.samples.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t n_train = (d.samples.size() * 4 + 4) / 5;
    d.train_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    d.test_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(d.train_idx.begin(), d.train_idx.end());
    std::sort(d.test_idx.begin(), d.test_idx.end());
    return d;
}

enum class BenchmarkKind { standard, imbalanced, missing_class, cross_shift };

inline BenchmarkKind parse_benchmark(const std::string& name) {
    if (name == "standard") return BenchmarkKind::standard;
    if (name == "imbalanced") return BenchmarkKind::imbalanced;
    if (name == "missing_class") return BenchmarkKind::missing_class;
    if (name == "cross_shift") return BenchmarkKind::cross_shift;
    throw ConfigError("unknown benchmark '" + name + "' (expected standard|imbalanced|missing_class|cross_shift)");
}

inline std::string to_string(BenchmarkKind k) {
    switch (k) {
        case BenchmarkKind::standard: return "standard";
        case BenchmarkKind::imbalanced: return "imbalanced";
        case BenchmarkKind::missing_class: return "missing_class";
        case BenchmarkKind::cross_shift: return "cross_shift";
    }
    return "standard";
}

/// Geometry of the generated benchmarks. Source j sits at distance
/// shift_base + shift_step*j from the target and its class axis is rotated
/// by rotation_step*j, so farther sources are also less label-compatible.
struct BenchmarkGeometry {
    std::size_t dim = 8;
    std::size_t samples_per_subject = 200;
    double noise_std = 0.5;
    double shift_base = 0.2;
    double shift_step = 0.2;
    double rotation_step = 0.4;
    double cross_offset = 8.0;
};

struct Benchmark {
    BenchmarkKind kind = BenchmarkKind::standard;
    std::vector<SubjectSpec> source_specs;
    SubjectSpec target_spec;
    std::vector<SubjectDomain> sources;
    SubjectDomain target;  // labeled; labels are hidden from adaptation by the trainer

    /// Source ids sorted by configured center distance to the target (closest first).
    std::vector<SubjectId> ground_truth_order() const {
        std::vector<std::pair<double, SubjectId>> d;
        for (const auto& s : source_specs) d.emplace_back(std::sqrt(squared_euclidean(s.mean_shift, target_spec.mean_shift)), s.subject_id);
        std::stable_sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<SubjectId> out;
        for (auto& [_, id] : d) out.push_back(id);
        return out;
    }
};

inline std::string source_id(std::size_t j) {
    std::string n = std::to_string(j + 1);
    return "src" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

inline Benchmark generate_benchmark(BenchmarkKind kind, std::size_t n_sources, std::uint64_t seed,
                                    const BenchmarkGeometry& geo = {}) {
    if (n_sources < 3) throw ConfigError("n_sources must be >= 3 (got " + std::to_string(n_sources) + ")");
    Rng rng(derive_seed(seed, {stable_hash("benchmark-layout")}));
    std::normal_distribution<double> n01;
    auto unit = [&] {
        Vector u(geo.dim);
        double n = 0.0;
        while (n < 1e-8) {
            for (double& x : u) x = n01(rng);
            n = l2_norm(u);
        }
        for (double& x : u) x /= n;
        return u;
    };

    Benchmark b;
    b.kind = kind;
    const std::size_t half = geo.samples_per_subject / 2;

    b.target_spec.subject_id = "target";
    b.target_spec.dim = geo.dim;
    b.target_spec.noise_std = geo.noise_std;
    b.target_spec.rotation_seed = derive_seed(seed, {stable_hash("target-rotation")});
    b.target_spec.mean_shift = Vector(geo.dim, 0.0);
    b.target_spec.samples_per_class = {half, half};
    if (kind == BenchmarkKind::imbalanced) {
        const std::size_t quarter = geo.samples_per_subject / 4;
        b.target_spec.samples_per_class = {geo.samples_per_subject - quarter, quarter};
    }

    const Vector common = unit();
    // All sources rotate within one shared plane, so large angles flip the target's labelling.
    const std::uint64_t rotation_seed = derive_seed(seed, {stable_hash("source-rotation")});
    for (std::size_t j = 0; j < n_sources; ++j) {
        SubjectSpec s;
        s.subject_id = source_id(j);
        s.dim = geo.dim;
        s.noise_std = geo.noise_std;
        s.rotation_seed = rotation_seed;
        s.rotation_angle = geo.rotation_step * static_cast<double>(j);
        const double magnitude = geo.shift_base + geo.shift_step * static_cast<double>(j);
        const Vector dir = unit();
        s.mean_shift = Vector(geo.dim);
        for (std::size_t i = 0; i < geo.dim; ++i) {
            s.mean_shift[i] = magnitude * dir[i];
            if (kind == BenchmarkKind::cross_shift) s.mean_shift[i] += geo.cross_offset * common[i];
        }
        s.samples_per_class = {half, half};
        if (kind == BenchmarkKind::missing_class && j % 2 == 1) s.samples_per_class = {geo.samples_per_subject, 0};
        b.source_specs.push_back(std::move(s));
    }

    b.target = generate_subject(b.target_spec, seed);
    for (const auto& s : b.source_specs) b.sources.push_back(generate_subject(s, seed));
    return b;
}

}  // namespace pmsda
