#pragma once

// Parameter sampling plans and the input normalization shared by training and
// evaluation. Sampling happens in a per-axis "sampling coordinate" s, mapped
// to the physical parameter by an AxisTransform (e.g. μ = 10^s).

#include "errors.hpp"
#include "linalg.hpp"
#include "random.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rbrom::rom {

enum class AxisTransform { identity, pow10, neg_pow10 };

inline std::string_view to_string(AxisTransform t) {
    switch (t) {
    case AxisTransform::identity: return "identity";
    case AxisTransform::pow10: return "pow10";
    case AxisTransform::neg_pow10: return "neg_pow10";
    }
    return "?";
}

inline std::optional<AxisTransform> parse_transform(std::string_view s) {
    for (auto t : {AxisTransform::identity, AxisTransform::pow10, AxisTransform::neg_pow10}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    return std::nullopt;
}

/// Sampling coordinate → parameter value.
inline double forward(AxisTransform t, double s) {
    switch (t) {
    case AxisTransform::identity: return s;
    case AxisTransform::pow10: return std::pow(10.0, s);
    case AxisTransform::neg_pow10: return -std::pow(10.0, s);
    }
    return s;
}

/// Parameter value → sampling coordinate.
inline double inverse(AxisTransform t, double mu) {
    switch (t) {
    case AxisTransform::identity: return mu;
    case AxisTransform::pow10:
        if (!(mu > 0.0)) {
            throw DomainError("pow10 axis needs a positive parameter, got " + std::to_string(mu));
        }
        return std::log10(mu);
    case AxisTransform::neg_pow10:
        if (!(mu < 0.0)) {
            throw DomainError("neg_pow10 axis needs a negative parameter, got " + std::to_string(mu));
        }
        return std::log10(-mu);
    }
    return mu;
}

/// Axis-aligned box in sampling coordinates.
struct Box {
    Vector lo;
    Vector hi;

    [[nodiscard]] std::size_t dim() const noexcept { return lo.size(); }

    void validate() const {
        if (lo.empty() || lo.size() != hi.size()) {
            throw DomainError("parameter box is empty or has mismatched bounds");
        }
        for (std::size_t d = 0; d < lo.size(); ++d) {
            if (!std::isfinite(lo[d]) || !std::isfinite(hi[d]) || lo[d] > hi[d]) {
                throw DomainError("parameter box axis " + std::to_string(d) + " is empty");
            }
        }
    }

    friend bool operator==(const Box&, const Box&) = default;
};

namespace detail {

inline std::vector<AxisTransform> transforms_or_identity(std::span<const AxisTransform> t, std::size_t dim) {
    if (t.empty()) {
        return std::vector<AxisTransform>(dim, AxisTransform::identity);
    }
    if (t.size() != dim) {
        throw DimensionError("expected one axis transform per parameter");
    }
    return {t.begin(), t.end()};
}

} // namespace detail

/// Cartesian product of per-axis uniform grids (endpoints included),
/// transforms applied after gridding. The last axis varies fastest.
inline std::vector<Vector> grid_sample(const Box& box, std::span<const std::size_t> counts,
                                       std::span<const AxisTransform> transforms = {}) {
    box.validate();
    if (counts.size() != box.dim()) {
        throw DimensionError("grid_sample: one count per axis required");
    }
    const auto tr = detail::transforms_or_identity(transforms, box.dim());
    std::size_t total = 1;
    for (auto c : counts) {
        if (c == 0) {
            throw DomainError("grid_sample: zero points on an axis");
        }
        total *= c;
    }
    std::vector<Vector> out;
    out.reserve(total);
    std::vector<std::size_t> idx(box.dim(), 0);
    for (std::size_t n = 0; n < total; ++n) {
        Vector mu(box.dim());
        for (std::size_t d = 0; d < box.dim(); ++d) {
            const double frac = counts[d] == 1 ? 0.0 : static_cast<double>(idx[d]) / static_cast<double>(counts[d] - 1);
            // the last point is pinned to hi so the endpoint carries no round-off
            const double s = idx[d] + 1 == counts[d] && counts[d] > 1 ? box.hi[d] : box.lo[d] + frac * (box.hi[d] - box.lo[d]);
            mu[d] = forward(tr[d], s);
        }
        out.push_back(std::move(mu));
        for (std::size_t d = box.dim(); d-- > 0;) {
            if (++idx[d] < counts[d]) {
                break;
            }
            idx[d] = 0;
        }
    }
    return out;
}

/// Latin hypercube sample of n points: on every axis each of the n equal
/// strata holds exactly one point.
inline std::vector<Vector> lhs_sample(const Box& box, std::size_t n, std::uint64_t seed,
                                      std::span<const AxisTransform> transforms = {}) {
    box.validate();
    if (n == 0) {
        throw DomainError("lhs_sample: n must be at least 1");
    }
    const auto tr = detail::transforms_or_identity(transforms, box.dim());
    std::mt19937_64 rng(seed);
    std::vector<Vector> out(n, Vector(box.dim()));
    std::vector<std::size_t> perm(n);
    for (std::size_t d = 0; d < box.dim(); ++d) {
        for (std::size_t i = 0; i < n; ++i) {
            perm[i] = i;
        }
        for (std::size_t i = n; i > 1; --i) {
            std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
        }
        const double width = (box.hi[d] - box.lo[d]) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double s = box.lo[d] + (static_cast<double>(perm[i]) + unit_uniform(rng)) * width;
            out[i][d] = forward(tr[d], s);
        }
    }
    return out;
}

/// Maps a physical parameter to the network input: inverse axis transform,
/// then affine onto [-1, 1] over the sampling box.
struct Normalization {
    Box box;
    std::vector<AxisTransform> transforms;

    [[nodiscard]] std::size_t dim() const noexcept { return box.dim(); }

    [[nodiscard]] Vector apply(std::span<const double> mu) const {
        if (mu.size() != dim()) {
            throw DimensionError("normalization expects " + std::to_string(dim()) + " parameters, got " +
                                 std::to_string(mu.size()));
        }
        Vector z(dim());
        for (std::size_t d = 0; d < dim(); ++d) {
            const double s = inverse(transforms.empty() ? AxisTransform::identity : transforms[d], mu[d]);
            const double w = box.hi[d] - box.lo[d];
            z[d] = w > 0.0 ? 2.0 * (s - box.lo[d]) / w - 1.0 : 0.0;
        }
        return z;
    }

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

} // namespace rbrom::rom
