#pragma once

// Mass-weighted POD, the time-then-parameter two-stage compression and the
// L² projection of snapshots onto the reduced basis.

#include "errors.hpp"
#include "fom.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "sampling.hpp"

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rbrom::pod {

using linalg::CholeskyFactor;
using linalg::CsrMatrix;
using linalg::DenseMatrix;

/// Smallest m such that Σ_{i>m} σᵢ² / Σ σᵢ² ≤ ε. Values below 1e-14·σ₁ are
/// treated as round-off and excluded from both sums.
inline std::size_t select_rank(std::span<const double> sigma, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) {
        throw DomainError("select_rank: tolerance must lie in (0, 1)");
    }
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        if (!(sigma[i] >= 0.0) || (i > 0 && sigma[i] > sigma[i - 1])) {
            throw DomainError("select_rank: singular values must be nonnegative and nonincreasing");
        }
    }
    if (sigma.empty() || sigma[0] == 0.0) {
        throw NumericalError("select_rank: all singular values are zero (rank 0)");
    }
    std::size_t r = 0;
    while (r < sigma.size() && sigma[r] > 1e-14 * sigma[0]) {
        ++r;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        total += sigma[i] * sigma[i];
    }
    // Tail sums accumulated from the small end for accuracy.
    std::vector<double> tail(r + 1, 0.0);
    for (std::size_t i = r; i-- > 0;) {
        tail[i] = tail[i + 1] + sigma[i] * sigma[i];
    }
    for (std::size_t m = 1; m <= r; ++m) {
        if (tail[m] / total <= eps) {
            return m;
        }
    }
    return r;
}

struct PodResult {
    DenseMatrix basis; ///< M-orthonormal columns
    Vector sigma;      ///< all singular values of LᵀA
};

/// Flips each column so that its largest-magnitude entry is positive.
inline void normalize_signs(DenseMatrix& u) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < u.rows(); ++i) {
            if (std::abs(u(i, j)) > std::abs(u(best, j))) {
                best = i;
            }
        }
        if (u.rows() > 0 && u(best, j) < 0.0) {
            for (std::size_t i = 0; i < u.rows(); ++i) {
                u(i, j) = -u(i, j);
            }
        }
    }
}

/// POD in the M inner product, M = LLᵀ: the SVD of LᵀA gives Euclidean
/// modes U, and L⁻ᵀU are the M-orthonormal modes of A.
inline PodResult pod_with_values(const DenseMatrix& a, double eps, const CholeskyFactor& mass) {
    if (a.rows() != mass.dim()) {
        throw DimensionError("pod: snapshot rows " + std::to_string(a.rows()) + " vs mass dimension " +
                             std::to_string(mass.dim()));
    }
    if (a.cols() == 0 || linalg::max_abs(a) == 0.0) {
        throw NumericalError("pod: snapshot matrix is zero");
    }
    auto svd = linalg::thin_svd(mass.apply_upper(a));
    const std::size_t m = select_rank(svd.sigma, eps);
    DenseMatrix basis = mass.solve_upper(svd.u.leading_columns(m));
    normalize_signs(basis);
    return {std::move(basis), std::move(svd.sigma)};
}

inline DenseMatrix pod(const DenseMatrix& a, double eps, const CholeskyFactor& mass) {
    return pod_with_values(a, eps, mass).basis;
}

inline constexpr std::string_view basis_magic = "RBBAS101";

struct PodBasis {
    DenseMatrix w; ///< N_h × N_rb
    double eps_t = 0.0;
    double eps_mu = 0.0;
    Vector sigma; ///< retained second-stage singular values
    double retained_energy = 1.0;

    [[nodiscard]] std::size_t n_h() const noexcept { return w.rows(); }
    [[nodiscard]] std::size_t n_rb() const noexcept { return w.cols(); }

    /// Precomputes M·W so that projections cost O(N_h·N_rb).
    void attach_mass(const CsrMatrix& mass) {
        if (mass.rows() != n_h()) {
            throw CompatibilityError("basis has N_h = " + std::to_string(n_h()) + " but mass matrix has " +
                                     std::to_string(mass.rows()) + " rows");
        }
        mw_ = std::make_shared<const DenseMatrix>(linalg::csr_matmul(mass, w));
    }

    [[nodiscard]] bool has_mass() const noexcept { return static_cast<bool>(mw_); }

    [[nodiscard]] const DenseMatrix& mass_times_basis() const {
        if (!mw_) {
            throw CompatibilityError("basis has no mass matrix attached");
        }
        return *mw_;
    }

  private:
    std::shared_ptr<const DenseMatrix> mw_;
};

/// Two-stage POD of the deviation snapshots: per-parameter compression in
/// time (ε_t), then compression of the concatenated stage-1 bases (ε_μ).
inline PodBasis two_stage_pod(const fom::SnapshotSet& snapshots, const CsrMatrix& mass, double eps_t, double eps_mu,
                              std::size_t threads = 1) {
    if (snapshots.n_params == 0) {
        throw DomainError("two_stage_pod: empty snapshot set");
    }
    if (mass.rows() != snapshots.n_h) {
        throw DimensionError("two_stage_pod: mass matrix does not match snapshot dimension");
    }
    const CholeskyFactor factor = linalg::cholesky(mass.to_dense());
    std::vector<DenseMatrix> stage1(snapshots.n_params);
    parallel_for(snapshots.n_params, threads, [&](std::size_t i) {
        stage1[i] = pod(snapshots.trajectory_matrix(i), eps_t, factor);
    });
    std::size_t total = 0;
    for (const auto& b : stage1) {
        total += b.cols();
    }
    DenseMatrix concat(snapshots.n_h, total);
    std::size_t col = 0;
    for (const auto& b : stage1) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            concat.set_column(col++, b.column(j));
        }
    }
    auto result = pod_with_values(concat, eps_mu, factor);
    PodBasis basis;
    basis.w = std::move(result.basis);
    basis.eps_t = eps_t;
    basis.eps_mu = eps_mu;
    double kept = 0.0;
    double all = 0.0;
    for (std::size_t i = 0; i < result.sigma.size(); ++i) {
        all += result.sigma[i] * result.sigma[i];
        if (i < basis.w.cols()) {
            kept += result.sigma[i] * result.sigma[i];
        }
    }
    basis.sigma.assign(result.sigma.begin(), result.sigma.begin() + static_cast<std::ptrdiff_t>(basis.w.cols()));
    basis.retained_energy = kept / all;
    basis.attach_mass(mass);
    return basis;
}

/// c = Wᵀ M y, the L²-orthogonal projection coefficients of y.
inline Vector project(const PodBasis& basis, std::span<const double> y) {
    if (y.size() != basis.n_h()) {
        throw DimensionError("project: vector of size " + std::to_string(y.size()) + " vs basis N_h " +
                             std::to_string(basis.n_h()));
    }
    return linalg::matvec_transposed(basis.mass_times_basis(), y);
}

/// u0 + W c.
inline Vector reconstruct(const PodBasis& basis, std::span<const double> u0, std::span<const double> c) {
    if (u0.size() != basis.n_h() || c.size() != basis.n_rb()) {
        throw DimensionError("reconstruct: expected N_h = " + std::to_string(basis.n_h()) + " and N_rb = " +
                             std::to_string(basis.n_rb()));
    }
    Vector u(u0.begin(), u0.end());
    linalg::axpy(1.0, linalg::matvec(basis.w, c), u);
    return u;
}

inline std::string serialize(const PodBasis& b) {
    io::BinaryWriter w(basis_magic);
    w.u64(b.n_h());
    w.u64(b.n_rb());
    w.f64(b.eps_t);
    w.f64(b.eps_mu);
    for (std::size_t j = 0; j < b.n_rb(); ++j) {
        w.f64s(b.w.column(j));
    }
    w.f64s(b.sigma);
    return std::move(w).finish();
}

inline PodBasis deserialize_basis(std::string bytes) {
    io::BinaryReader r(std::move(bytes), basis_magic);
    const std::size_t n_h = r.u64();
    const std::size_t n_rb = r.u64();
    io::checked_product({n_h, n_rb});
    PodBasis b;
    b.eps_t = r.f64();
    b.eps_mu = r.f64();
    b.w = DenseMatrix(n_h, n_rb);
    for (std::size_t j = 0; j < n_rb; ++j) {
        b.w.set_column(j, r.f64s(n_h));
    }
    b.sigma = r.f64s(n_rb);
    r.expect_end();
    return b;
}

inline void write_basis(const std::string& path, const PodBasis& b) { io::write_file(path, serialize(b)); }

inline PodBasis read_basis(const std::string& path) { return deserialize_basis(io::read_file(path)); }

// ---------------------------------------------------------------------------
// Training targets

inline constexpr std::string_view dataset_magic = "RBCOEF01";

/// Projected coefficient trajectories c(t_k; μ_i) with the parameter
/// normalization used as network input.
struct CoefficientDataset {
    std::size_t n_params = 0;
    std::size_t n_saved = 0;
    std::size_t n_rb = 0;
    std::size_t p = 0;
    rom::Normalization normalization;
    Vector params; ///< physical parameters, n_params × p
    Vector coeffs; ///< (parameter, time, coefficient)

    [[nodiscard]] std::span<const double> mu(std::size_t i) const { return {params.data() + i * p, p}; }
    [[nodiscard]] std::span<const double> coeff(std::size_t i, std::size_t k) const {
        return {coeffs.data() + (i * n_saved + k) * n_rb, n_rb};
    }
    [[nodiscard]] Vector normalized_mu(std::size_t i) const { return normalization.apply(mu(i)); }

    friend bool operator==(const CoefficientDataset&, const CoefficientDataset&) = default;
};

inline CoefficientDataset build_targets(const PodBasis& basis, const fom::SnapshotSet& snapshots,
                                        rom::Normalization normalization) {
    if (snapshots.n_h != basis.n_h()) {
        throw DimensionError("build_targets: snapshot N_h " + std::to_string(snapshots.n_h) + " vs basis N_h " +
                             std::to_string(basis.n_h()));
    }
    if (normalization.dim() != snapshots.p) {
        throw DimensionError("build_targets: normalization dimension does not match parameter count");
    }
    CoefficientDataset d;
    d.n_params = snapshots.n_params;
    d.n_saved = snapshots.n_saved;
    d.n_rb = basis.n_rb();
    d.p = snapshots.p;
    d.normalization = std::move(normalization);
    d.params = snapshots.params;
    d.coeffs.resize(d.n_params * d.n_saved * d.n_rb);
    for (std::size_t i = 0; i < d.n_params; ++i) {
        for (std::size_t k = 0; k < d.n_saved; ++k) {
            const Vector c = project(basis, snapshots.deviation(i, k));
            std::copy(c.begin(), c.end(), d.coeffs.begin() + static_cast<std::ptrdiff_t>((i * d.n_saved + k) * d.n_rb));
        }
    }
    return d;
}

inline std::string serialize(const CoefficientDataset& d) {
    io::BinaryWriter w(dataset_magic);
    w.u64(d.n_params);
    w.u64(d.n_saved);
    w.u64(d.n_rb);
    w.u64(d.p);
    for (std::size_t a = 0; a < d.p; ++a) {
        w.u64(static_cast<std::uint64_t>(d.normalization.transforms.empty() ? rom::AxisTransform::identity
                                                                            : d.normalization.transforms[a]));
        w.f64(d.normalization.box.lo[a]);
        w.f64(d.normalization.box.hi[a]);
    }
    w.f64s(d.params);
    w.f64s(d.coeffs);
    return std::move(w).finish();
}

inline CoefficientDataset deserialize_dataset(std::string bytes) {
    io::BinaryReader r(std::move(bytes), dataset_magic);
    CoefficientDataset d;
    d.n_params = r.u64();
    d.n_saved = r.u64();
    d.n_rb = r.u64();
    d.p = r.u64();
    io::checked_product({d.p, 3});
    for (std::size_t a = 0; a < d.p; ++a) {
        const auto t = r.u64();
        if (t > static_cast<std::uint64_t>(rom::AxisTransform::neg_pow10)) {
            throw ArchiveError("coefficient dataset: unknown axis transform " + std::to_string(t));
        }
        d.normalization.transforms.push_back(static_cast<rom::AxisTransform>(t));
        d.normalization.box.lo.push_back(r.f64());
        d.normalization.box.hi.push_back(r.f64());
    }
    d.params = r.f64s(io::checked_product({d.n_params, d.p}));
    d.coeffs = r.f64s(io::checked_product({d.n_params, d.n_saved, d.n_rb}));
    r.expect_end();
    return d;
}

inline void write_dataset(const std::string& path, const CoefficientDataset& d) { io::write_file(path, serialize(d)); }

inline CoefficientDataset read_dataset(const std::string& path) { return deserialize_dataset(io::read_file(path)); }

} // namespace rbrom::pod
