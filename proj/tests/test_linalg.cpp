#include "rbrom/linalg.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rbrom;
using namespace rbrom::linalg;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    DenseMatrix a(r, c);
    for (auto& v : a.data()) {
        v = u(rng);
    }
    return a;
}

DenseMatrix random_spd(std::size_t n, unsigned seed) {
    const auto b = random_matrix(n, n, seed);
    auto a = matmul_transposed_left(b, b);
    for (std::size_t i = 0; i < n; ++i) {
        a(i, i) += static_cast<double>(n);
    }
    return a;
}

double max_diff(const DenseMatrix& a, const DenseMatrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

} // namespace

TEST(Vectors, DotNormAxpy) {
    const Vector x{1.0, 2.0, 2.0};
    const Vector y{3.0, -1.0, 0.5};
    EXPECT_DOUBLE_EQ(dot(x, y), 2.0);
    EXPECT_DOUBLE_EQ(norm2(x), 3.0);
    EXPECT_DOUBLE_EQ(max_abs(y), 3.0);
    Vector z = y;
    axpy(2.0, x, z);
    EXPECT_EQ(z, (Vector{5.0, 3.0, 4.5}));
    EXPECT_THROW(dot(x, Vector{1.0}), DimensionError);
}

TEST(Dense, MatmulByHand) {
    const DenseMatrix a(2, 2, {1, 2, 3, 4});
    const DenseMatrix b(2, 2, {0, 1, 1, 0});
    const auto c = matmul(a, b);
    EXPECT_EQ(c, DenseMatrix(2, 2, {2, 1, 4, 3}));
    EXPECT_EQ(matmul_transposed_left(a, b), DenseMatrix(2, 2, {3, 1, 4, 2}));
    EXPECT_EQ(matvec(a, Vector{1, 1}), (Vector{3, 7}));
    EXPECT_EQ(matvec_transposed(a, Vector{1, 1}), (Vector{4, 6}));
    EXPECT_THROW(matmul(a, DenseMatrix(3, 1)), DimensionError);
}

TEST(Csr, TripletsSumDuplicatesAndMatchDense) {
    const auto a = CsrMatrix::from_triplets(3, 3, {{0, 0, 1.0}, {2, 1, 4.0}, {0, 0, 2.0}, {1, 2, -1.0}});
    EXPECT_EQ(a.nnz(), 3u);
    EXPECT_DOUBLE_EQ(a.at(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(a.at(1, 1), 0.0);
    const auto d = random_matrix(5, 5, 3);
    const auto s = CsrMatrix::from_dense(d);
    const Vector x{1, -2, 3, 0.5, 0.25};
    const auto y1 = csr_matvec(s, x);
    const auto y2 = matvec(d, x);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_NEAR(y1[i], y2[i], 1e-14);
    }
    EXPECT_LT(max_diff(csr_matmul(s, d), matmul(d, d)), 1e-14);
    EXPECT_THROW(CsrMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), DimensionError);
}

TEST(Csr, LinearCombination) {
    const auto a = CsrMatrix::identity(3);
    const auto b = CsrMatrix::from_triplets(3, 3, {{0, 1, 1.0}});
    const auto c = linear_combination(2.0, a, -3.0, b);
    EXPECT_DOUBLE_EQ(c.at(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(c.at(0, 1), -3.0);
}

TEST(Cholesky, FactorReproducesMatrixAndSolves) {
    const auto a = random_spd(12, 5);
    const auto f = cholesky(a);
    const auto& l = f.lower();
    EXPECT_LT(max_diff(matmul(l, l.transposed()), a), 1e-12);
    const Vector b(12, 1.0);
    const auto x = f.solve(b);
    const auto r = matvec(a, x);
    for (double v : r) {
        EXPECT_NEAR(v, 1.0, 1e-12);
    }
}

TEST(Cholesky, RejectsIndefinite) {
    const DenseMatrix a(2, 2, {1, 2, 2, 1});
    EXPECT_THROW(cholesky(a), NotPositiveDefinite);
    EXPECT_THROW(cholesky(DenseMatrix(2, 2, {1, 0.5, 0, 1})), DomainError);
}

TEST(Lu, SolvesGeneralSystem) {
    const auto a = random_matrix(9, 9, 11);
    Vector xs{1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto b = matvec(a, xs);
    const auto x = lu_solve(a, b);
    for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_NEAR(x[i], xs[i], 1e-10);
    }
    EXPECT_THROW(LuFactor(DenseMatrix(2, 2, {1, 2, 2, 4})), SingularMatrix);
}

TEST(BandedLu, AgreesWithDenseLu) {
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t n = 40;
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = (i >= 3 ? i - 3 : 0); j < std::min(n, i + 2); ++j) {
            t.push_back({i, j, u(rng) + (i == j ? 0.5 : 0.0)});
        }
    }
    const auto a = CsrMatrix::from_triplets(n, n, t);
    Vector b(n);
    for (auto& v : b) {
        v = u(rng);
    }
    const auto x1 = BandedLu(a).solve(b);
    const auto x2 = lu_solve(a.to_dense(), b);
    for (std::size_t i = 0; i < n; ++i) {
        EXPECT_NEAR(x1[i], x2[i], 1e-10 * (1.0 + std::abs(x2[i])));
    }
}

TEST(Svd, DiagonalMatrixSingularValuesSorted) {
    DenseMatrix a(4, 3);
    a(0, 0) = 1.0;
    a(1, 1) = -5.0;
    a(2, 2) = 3.0;
    const auto s = thin_svd(a);
    ASSERT_EQ(s.sigma.size(), 3u);
    EXPECT_NEAR(s.sigma[0], 5.0, 1e-14);
    EXPECT_NEAR(s.sigma[1], 3.0, 1e-14);
    EXPECT_NEAR(s.sigma[2], 1.0, 1e-14);
}

TEST(Svd, ReconstructsTallAndWide) {
    for (auto [r, c] : {std::pair{20, 6}, std::pair{5, 17}}) {
        const auto a = random_matrix(r, c, 21);
        const auto s = thin_svd(a);
        DenseMatrix us = s.u;
        for (std::size_t j = 0; j < us.cols(); ++j) {
            for (std::size_t i = 0; i < us.rows(); ++i) {
                us(i, j) *= s.sigma[j];
            }
        }
        EXPECT_LT(max_diff(matmul(us, s.vt), a), 1e-12);
        EXPECT_LT(max_diff(matmul_transposed_left(s.u, s.u), DenseMatrix::identity(s.u.cols())), 1e-12);
        for (std::size_t i = 1; i < s.sigma.size(); ++i) {
            EXPECT_GE(s.sigma[i - 1], s.sigma[i]);
        }
    }
}

TEST(Svd, RankDeficientGivesZeros) {
    // rank 2: third column is a combination of the first two
    auto a = random_matrix(30, 3, 8);
    for (std::size_t i = 0; i < 30; ++i) {
        a(i, 2) = 2.0 * a(i, 0) - a(i, 1);
    }
    const auto s = thin_svd(a);
    EXPECT_GT(s.sigma[1], 1e-3);
    EXPECT_EQ(s.sigma[2], 0.0);
}

namespace {

/// Cyclic Jacobi eigenvalues of a symmetric matrix, used as an independent oracle.
Vector symmetric_eigenvalues(DenseMatrix a) {
    const std::size_t n = a.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                off += a(p, q) * a(p, q);
            }
        }
        if (off < 1e-30) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    Vector ev(n);
    for (std::size_t i = 0; i < n; ++i) {
        ev[i] = a(i, i);
    }
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

} // namespace

TEST(Cholesky, HandExample) {
    const auto f = cholesky(DenseMatrix(2, 2, {4, 2, 2, 3}));
    EXPECT_DOUBLE_EQ(f.lower()(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(f.lower()(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(f.lower()(1, 0), 1.0);
    EXPECT_NEAR(f.lower()(1, 1), std::sqrt(2.0), 1e-15);
    EXPECT_EQ(cholesky(DenseMatrix::identity(4)).lower(), DenseMatrix::identity(4));
    const auto x = solve_spd(DenseMatrix(2, 2, {4, 2, 2, 3}), Vector{8, 7});
    EXPECT_NEAR(x[0], 1.25, 1e-15);
    EXPECT_NEAR(x[1], 1.5, 1e-15);
    EXPECT_EQ(solve_spd(DenseMatrix::identity(2), Vector{0, 0}), (Vector{0, 0}));
}

TEST(Cholesky, RandomSpdResidual) {
    for (std::size_t n : {1, 5, 20, 50}) {
        const auto a = random_spd(n, static_cast<unsigned>(n));
        Vector b(n);
        for (std::size_t i = 0; i < n; ++i) {
            b[i] = std::sin(static_cast<double>(i));
        }
        const auto x = solve_spd(cholesky(a), b);
        auto r = matvec(a, x);
        axpy(-1.0, b, r);
        EXPECT_LE(norm2(r), 1e-10 * (max_abs(a) * static_cast<double>(n) * norm2(x) + norm2(b)));
    }
}

TEST(Lu, SmallExamples) {
    EXPECT_EQ(lu_solve(DenseMatrix(2, 2, {0, 1, 1, 0}), Vector{3, 7}), (Vector{7, 3}));
    EXPECT_EQ(lu_solve(DenseMatrix(2, 2, {2, 0, 0, 4}), Vector{2, 4}), (Vector{1, 1}));
    EXPECT_THROW(lu_solve(DenseMatrix(2, 2, {1, 1, 1, 1}), Vector{1, 2}), SingularMatrix);
}

TEST(Csr, MatvecPropertyAgainstDense) {
    std::mt19937 rng(99);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t r = 1 + rng() % 12;
        const std::size_t c = 1 + rng() % 12;
        auto d = random_matrix(r, c, static_cast<unsigned>(trial));
        for (auto& v : d.data()) {
            if (rng() % 3 == 0) {
                v = 0.0;
            }
        }
        Vector x(c);
        for (std::size_t i = 0; i < c; ++i) {
            x[i] = static_cast<double>(rng() % 100) / 7.0 - 5.0;
        }
        const auto y1 = csr_matvec(CsrMatrix::from_dense(d), x);
        const auto y2 = matvec(d, x);
        for (std::size_t i = 0; i < r; ++i) {
            ASSERT_NEAR(y1[i], y2[i], 1e-13);
        }
    }
    const auto empty_row = CsrMatrix::from_triplets(2, 2, {{0, 0, 1.0}});
    EXPECT_EQ(csr_matvec(empty_row, Vector{4, 5}), (Vector{4, 0}));
    EXPECT_EQ(csr_matvec(CsrMatrix::identity(3), Vector{1, 2, 3}), (Vector{1, 2, 3}));
    EXPECT_THROW(csr_matvec(CsrMatrix::identity(3), Vector{1}), DimensionError);
}

TEST(Svd, SmallExamples) {
    EXPECT_EQ(thin_svd(DenseMatrix(2, 2, {3, 0, 0, 2})).sigma, (Vector{3, 2}));
    EXPECT_EQ(thin_svd(DenseMatrix(3, 2)).sigma, (Vector{0, 0}));
    const auto col = thin_svd(DenseMatrix(2, 1, {3, 4}));
    ASSERT_EQ(col.sigma.size(), 1u);
    EXPECT_NEAR(col.sigma[0], 5.0, 1e-15);
}

TEST(Svd, SingularValuesMatchGramEigenvalues) {
    for (auto [r, c, seed] : {std::tuple{60, 40, 1u}, std::tuple{25, 25, 2u}, std::tuple{10, 3, 3u}}) {
        const auto a = random_matrix(r, c, seed);
        const auto s = thin_svd(a);
        const auto ev = symmetric_eigenvalues(matmul_transposed_left(a, a));
        for (std::size_t i = 0; i < s.sigma.size(); ++i) {
            EXPECT_NEAR(s.sigma[i], std::sqrt(std::max(ev[i], 0.0)), 1e-9 * s.sigma[0]);
        }
    }
}
