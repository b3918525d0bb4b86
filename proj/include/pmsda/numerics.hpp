#pragma once

// Dense vector/matrix primitives, kernels and classification helpers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmsda {

/// Raised when an operation receives arguments outside its mathematical domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised for invalid configuration values (unknown names, violated invariants).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Vector = std::vector<double>;
using ConstVectorView = std::span<const double>;

/// Row-major dense matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (values_.size() != rows_ * cols_) {
            throw DomainError("Matrix: value count " + std::to_string(values_.size()) +
                              " does not match shape " + std::to_string(rows_) + "x" +
                              std::to_string(cols_));
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {values_.data() + r * cols_, cols_};
    }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

namespace detail {

inline void require_same_dim(ConstVectorView a, ConstVectorView b, const char* op) {
    if (a.size() != b.size()) {
        throw DomainError(std::string(op) + ": dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
    }
}

}  // namespace detail

inline double dot(ConstVectorView a, ConstVectorView b) {
    detail::require_same_dim(a, b, "dot");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double l2_norm(ConstVectorView a) { return std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0)); }

inline bool all_finite(ConstVectorView a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

inline double cosine_similarity(ConstVectorView a, ConstVectorView b) {
    detail::require_same_dim(a, b, "cosine_similarity");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0) throw DomainError("cosine_similarity: first argument has zero norm");
    if (nb == 0.0) throw DomainError("cosine_similarity: second argument has zero norm");
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

inline double squared_euclidean(ConstVectorView a, ConstVectorView b) {
    detail::require_same_dim(a, b, "squared_euclidean");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double gaussian_kernel(ConstVectorView a, ConstVectorView b, double bandwidth) {
    if (!(bandwidth > 0.0)) throw DomainError("gaussian_kernel: bandwidth must be positive");
    return std::exp(-squared_euclidean(a, b) / (2.0 * bandwidth * bandwidth));
}

inline Vector softmax(ConstVectorView logits) {
    if (logits.empty()) throw DomainError("softmax: empty input");
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

inline constexpr double kLogClamp = 1e-12;

inline double cross_entropy(ConstVectorView probs, std::size_t label) {
    if (label >= probs.size()) {
        throw DomainError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                          std::to_string(probs.size()) + " classes");
    }
    return -std::log(std::max(probs[label], kLogClamp));
}

/// Index of the first maximal entry.
inline std::size_t argmax(ConstVectorView v) {
    if (v.empty()) throw DomainError("argmax: empty input");
    return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

inline double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
inline double stddev(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw DomainError("median: empty input");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

/// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw DomainError("pearson: need two equal-length series");
    const double ma = mean(a), mb = mean(b);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    return pearson(ra, rb);
}

}  // namespace pmsda
