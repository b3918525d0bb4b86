#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "pmsda/numerics.hpp"

namespace pmsda {

using SubjectId = std::string;

/// One subject's samples, labels (absent for an unlabeled target) and train/test split.
struct SubjectDomain {
    SubjectId subject_id;
    std::size_t dim = 0;
    std::vector<Vector> samples;
    std::optional<std::vector<std::size_t>> labels;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    bool labeled() const noexcept { return labels.has_value(); }

    std::size_t label(std::size_t i) const {
        if (!labels) throw DomainError("subject " + subject_id + " is unlabeled");
        return (*labels)[i];
    }

    /// Subset in the given order; split indices refer to the new positions (all train).
    SubjectDomain subset(std::span<const std::size_t> idx) const {
        SubjectDomain out{subject_id, dim, {}, std::nullopt, {}, {}};
        out.samples.reserve(idx.size());
        if (labels) out.labels.emplace();
        for (std::size_t k = 0; k < idx.size(); ++k) {
            out.samples.push_back(samples.at(idx[k]));
            if (labels) out.labels->push_back((*labels)[idx[k]]);
            out.train_idx.push_back(k);
        }
        return out;
    }

    SubjectDomain train_part() const { return subset(train_idx); }
    SubjectDomain test_part() const { return subset(test_idx); }

    SubjectDomain without_labels() const {
        SubjectDomain out = *this;
        out.labels.reset();
        return out;
    }

    /// Checks label alignment and that the split is disjoint and covering.
    bool valid() const {
        if (labels && labels->size() != samples.size()) return false;
        for (const auto& s : samples)
            if (s.size() != dim || !all_finite(s)) return false;
        std::vector<int> seen(samples.size(), 0);
        for (auto i : train_idx) {
            if (i >= samples.size()) return false;
            ++seen[i];
        }
        for (auto i : test_idx) {
            if (i >= samples.size()) return false;
            ++seen[i];
        }
        for (int s : seen)
            if (s != 1) return false;
        return true;
    }
};

inline nlohmann::json to_json(const SubjectDomain& d) {
    nlohmann::json j{{"subject_id", d.subject_id},
                     {"dim", d.dim},
                     {"samples", d.samples},
                     {"train_idx", d.train_idx},
                     {"test_idx", d.test_idx}};
    j["labels"] = d.labels ? nlohmann::json(*d.labels) : nlohmann::json(nullptr);
    return j;
}

inline SubjectDomain domain_from_json(const nlohmann::json& j) {
    SubjectDomain d;
    d.subject_id = j.at("subject_id").get<std::string>();
    d.dim = j.at("dim").get<std::size_t>();
    d.samples = j.at("samples").get<std::vector<Vector>>();
    if (j.contains("labels") && !j.at("labels").is_null())
        d.labels = j.at("labels").get<std::vector<std::size_t>>();
    d.train_idx = j.at("train_idx").get<std::vector<std::size_t>>();
    d.test_idx = j.at("test_idx").get<std::vector<std::size_t>>();
    if (!d.valid()) throw ConfigError("subject " + d.subject_id + ": invalid domain file");
    return d;
}

}  // namespace pmsda
