#include "rbrom/pod.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rbrom;
using namespace rbrom::pod;
using linalg::CsrMatrix;
using linalg::DenseMatrix;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    DenseMatrix a(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            a(i, j) = n(rng);
        }
    }
    return a;
}

/// P = W Wᵀ M, the M-orthogonal projector onto span W.
DenseMatrix projector(const DenseMatrix& w, const CsrMatrix& m) {
    return linalg::matmul(w, linalg::csr_matmul(m, w).transposed());
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            d = std::max(d, std::abs(a(i, j) - b(i, j)));
        }
    }
    return d;
}

fom::SnapshotSet small_1d_snapshots(std::vector<Vector> mus) {
    std::vector<fom::FomProblem> problems;
    for (auto& mu : mus) {
        auto pr = fom::preset_problem(fom::ProblemId::advdiff_1d, std::move(mu));
        pr.resolution = 40;
        pr.steps = 200;
        problems.push_back(pr);
    }
    return fom::generate_snapshots(problems);
}

CsrMatrix mass_1d() { return fom::Discretization::for_problem(fom::ProblemId::advdiff_1d, 40).mass(); }

} // namespace

TEST(SelectRank, Examples) {
    EXPECT_EQ(select_rank(Vector{2, 1, 1}, 0.5), 1u);
    EXPECT_EQ(select_rank(Vector{4, 3}, 0.3), 2u);
    EXPECT_EQ(select_rank(Vector{1}, 0.1), 1u);
    EXPECT_EQ(select_rank(Vector{1, 1e-20}, 1e-30 + 1e-12), 1u);
}

TEST(SelectRank, InvalidInput) {
    EXPECT_THROW(select_rank(Vector{1, 2}, 0.1), DomainError);
    EXPECT_THROW(select_rank(Vector{1}, 0.0), DomainError);
    EXPECT_THROW(select_rank(Vector{1}, 1.0), DomainError);
    EXPECT_THROW(select_rank(Vector{0, 0}, 0.1), NumericalError);
    EXPECT_THROW(select_rank(Vector{}, 0.1), NumericalError);
}

TEST(SelectRank, TailBoundHolds) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Vector s(1 + trial % 12);
        for (double& x : s) {
            x = std::pow(10.0, -6.0 * u(rng));
        }
        std::sort(s.rbegin(), s.rend());
        const double eps = std::pow(10.0, -5.0 * u(rng));
        const std::size_t m = select_rank(s, eps);
        double total = 0.0;
        for (double x : s) {
            total += x * x;
        }
        auto tail = [&](std::size_t k) {
            double t = 0.0;
            for (std::size_t i = k; i < s.size(); ++i) {
                t += s[i] * s[i];
            }
            return t / total;
        };
        EXPECT_LE(tail(m), eps * (1.0 + 1e-12));
        if (m > 1) {
            EXPECT_GT(tail(m - 1), eps);
        }
    }
}

TEST(Pod, SingleColumnIsNormalized) {
    const CsrMatrix m = mass_1d();
    std::mt19937_64 rng(1);
    const auto a = random_matrix(m.rows(), 1, rng);
    const auto w = pod::pod(a, 0.01, linalg::cholesky(m.to_dense()));
    ASSERT_EQ(w.cols(), 1u);
    const Vector col = a.column(0);
    const double n = std::sqrt(linalg::dot(col, linalg::csr_matvec(m, col)));
    const double sign = w(0, 0) * col[0] > 0.0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < col.size(); ++i) {
        EXPECT_NEAR(w(i, 0), sign * col[i] / n, 1e-12);
    }
}

TEST(Pod, DuplicatedColumnsGiveOneVector) {
    const CsrMatrix m = mass_1d();
    std::mt19937_64 rng(2);
    const Vector v = random_matrix(m.rows(), 1, rng).column(0);
    const auto a = DenseMatrix::from_columns({v, v, v});
    EXPECT_EQ(pod::pod(a, 1e-10, linalg::cholesky(m.to_dense())).cols(), 1u);
}

TEST(Pod, IdentityMassMatchesSvd) {
    std::mt19937_64 rng(4);
    const auto a = random_matrix(30, 8, rng);
    const auto id = CsrMatrix::identity(30);
    const auto res = pod_with_values(a, 1e-12, linalg::cholesky(id.to_dense()));
    const auto svd = linalg::thin_svd(a);
    ASSERT_EQ(res.basis.cols(), 8u);
    for (std::size_t j = 0; j < 8; ++j) {
        EXPECT_NEAR(res.sigma[j], svd.sigma[j], 1e-12);
        const double s = linalg::dot(res.basis.column(j), svd.u.column(j)) > 0.0 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < 30; ++i) {
            EXPECT_NEAR(res.basis(i, j), s * svd.u(i, j), 1e-10);
        }
    }
}

TEST(Pod, MassOrthonormalAndSignConvention) {
    const auto snaps = small_1d_snapshots({{-1.0, 0.1}, {-0.3, 0.8}, {-1.8, 0.3}});
    const CsrMatrix m = mass_1d();
    const auto basis = two_stage_pod(snaps, m, 1e-8, 1e-8);
    EXPECT_GT(basis.n_rb(), 3u);
    EXPECT_LE(oracle::orthonormality_defect(basis.w, m), 1e-8);
    for (std::size_t j = 0; j < basis.n_rb(); ++j) {
        double big = 0.0;
        for (std::size_t i = 0; i < basis.n_h(); ++i) {
            if (std::abs(basis.w(i, j)) > std::abs(big)) {
                big = basis.w(i, j);
            }
        }
        EXPECT_GT(big, 0.0);
    }
}

TEST(TwoStage, SingleParameterMatchesOneStage) {
    const auto snaps = small_1d_snapshots({{-0.7, 0.2}});
    const CsrMatrix m = mass_1d();
    const auto two = two_stage_pod(snaps, m, 1e-7, 1e-12);
    const auto one = pod::pod(snaps.trajectory_matrix(0), 1e-7, linalg::cholesky(m.to_dense()));
    ASSERT_EQ(two.n_rb(), one.cols());
    EXPECT_LE(max_abs_diff(projector(two.w, m), projector(one, m)), 1e-8);
}

TEST(TwoStage, RankShrinksWithTolerance) {
    const auto snaps = small_1d_snapshots({{-1.0, 0.1}, {-0.3, 0.8}, {-1.8, 0.3}, {-0.1, 0.1}});
    const CsrMatrix m = mass_1d();
    std::size_t prev = 0;
    for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
        const auto b = two_stage_pod(snaps, m, eps, eps);
        EXPECT_GE(b.n_rb(), prev);
        prev = b.n_rb();
    }
    const auto a = two_stage_pod(snaps, m, 1e-6, 1e-6, 1);
    const auto b = two_stage_pod(snaps, m, 1e-6, 1e-6, 3);
    EXPECT_EQ(serialize(a), serialize(b));
}

TEST(Projection, OptimalAndResidualOrthogonal) {
    const auto snaps = small_1d_snapshots({{-1.0, 0.1}, {-0.3, 0.8}});
    const CsrMatrix m = mass_1d();
    const auto basis = two_stage_pod(snaps, m, 1e-4, 1e-4);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    for (std::size_t k : {3u, 20u, 60u}) {
        const auto y = snaps.deviation(1, k);
        const Vector c = project(basis, y);
        Vector r(y.begin(), y.end());
        linalg::axpy(-1.0, linalg::matvec(basis.w, c), r);
        const Vector wtmr = linalg::matvec_transposed(basis.w, linalg::csr_matvec(m, r));
        EXPECT_LE(linalg::max_abs(wtmr), 1e-9 * std::max(1.0, fem::l2_norm(m, y)));
        const double best = fem::l2_norm(m, r);
        for (int trial = 0; trial < 100; ++trial) {
            Vector z = c;
            for (double& x : z) {
                x += 0.1 * n(rng);
            }
            Vector e(y.begin(), y.end());
            linalg::axpy(-1.0, linalg::matvec(basis.w, z), e);
            EXPECT_GE(fem::l2_norm(m, e), best);
        }
    }
}

TEST(Projection, ReconstructAndDimensions) {
    const auto snaps = small_1d_snapshots({{-1.0, 0.1}});
    const CsrMatrix m = mass_1d();
    const auto basis = two_stage_pod(snaps, m, 1e-4, 1e-4);
    const Vector u0(basis.n_h(), 1.0);
    const Vector zero(basis.n_rb(), 0.0);
    EXPECT_EQ(reconstruct(basis, u0, zero), u0);
    EXPECT_THROW(reconstruct(basis, u0, Vector(basis.n_rb() + 1)), DimensionError);
    EXPECT_THROW(project(basis, Vector(3)), DimensionError);
    PodBasis bare;
    bare.w = basis.w;
    EXPECT_THROW(project(bare, u0), CompatibilityError);
}

TEST(Archive, BasisRoundTrip) {
    const auto snaps = small_1d_snapshots({{-1.0, 0.1}, {-0.2, 0.5}});
    const CsrMatrix m = mass_1d();
    const auto basis = two_stage_pod(snaps, m, 1e-5, 1e-5);
    const std::string bytes = serialize(basis);
    const auto back = deserialize_basis(bytes);
    EXPECT_EQ(back.w, basis.w);
    EXPECT_EQ(back.sigma, basis.sigma);
    EXPECT_EQ(serialize(back), bytes);
    std::string bad = bytes;
    bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 1);
    EXPECT_THROW(deserialize_basis(bad), ArchiveError);
    EXPECT_THROW(deserialize_dataset(bytes), ArchiveError);
}

TEST(Archive, DatasetRoundTrip) {
    const auto snaps = small_1d_snapshots({{-1.0, 0.1}, {-0.2, 0.5}});
    const CsrMatrix m = mass_1d();
    const auto basis = two_stage_pod(snaps, m, 1e-5, 1e-5);
    rom::Normalization norm{{{-2.0, -1.0}, {-0.1, 0.0}}, {rom::AxisTransform::identity, rom::AxisTransform::pow10}};
    const auto data = build_targets(basis, snaps, norm);
    EXPECT_EQ(data.n_params, 2u);
    EXPECT_EQ(data.n_saved, snaps.n_saved);
    EXPECT_EQ(data.n_rb, basis.n_rb());
    const Vector c = project(basis, snaps.deviation(1, 7));
    for (std::size_t j = 0; j < c.size(); ++j) {
        EXPECT_EQ(data.coeff(1, 7)[j], c[j]);
    }
    const Vector z = data.normalized_mu(0);
    EXPECT_NEAR(z[0], 2.0 / 1.9 - 1.0, 1e-14);
    EXPECT_NEAR(z[1], -1.0, 1e-14);
    const std::string bytes = serialize(data);
    const auto back = deserialize_dataset(bytes);
    EXPECT_EQ(back, data);
    EXPECT_EQ(serialize(back), bytes);
    EXPECT_THROW(deserialize_dataset(bytes.substr(0, 24)), ArchiveError);

    rom::Normalization wrong{{{0.0}, {1.0}}, {}};
    EXPECT_THROW(build_targets(basis, snaps, wrong), DimensionError);
}
