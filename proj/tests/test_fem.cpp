#include "rbrom/fem.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace rbrom;
using namespace rbrom::fem;
using linalg::CsrMatrix;

namespace {

constexpr double pi = std::numbers::pi;

Vector row_sums(const CsrMatrix& a) { return linalg::csr_matvec(a, Vector(a.cols(), 1.0)); }

double sum(const Vector& v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s;
}

bool symmetric(const CsrMatrix& a, double tol) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            if (std::abs(a.at(i, j) - a.at(j, i)) > tol) {
                return false;
            }
        }
    }
    return true;
}

} // namespace

TEST(Mass1D, TwoElementsByHand) {
    const Mesh1D mesh(0.0, 1.0, 2);
    const auto m = assemble_mass(mesh, BoundarySpec::natural());
    ASSERT_EQ(m.rows(), 3u);
    EXPECT_NEAR(m.at(0, 0), 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(m.at(1, 1), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(m.at(2, 2), 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(m.at(0, 1), 1.0 / 12.0, 1e-15);
    EXPECT_NEAR(m.at(1, 2), 1.0 / 12.0, 1e-15);
    EXPECT_EQ(m.at(0, 2), 0.0);
}

TEST(Mass1D, AllConstrainedIsEmpty) {
    const Mesh1D mesh(0.0, 1.0, 1);
    const auto m = assemble_mass(mesh, BoundarySpec::dirichlet(mesh));
    EXPECT_EQ(m.rows(), 0u);
}

TEST(Mass2D, TotalIsDomainArea) {
    const auto mesh = TriMesh2D::unit_square(32);
    EXPECT_EQ(mesh.num_elements(), 2048u);
    EXPECT_EQ(mesh.num_nodes(), 1089u);
    const auto m = assemble_mass(mesh, BoundarySpec::natural());
    EXPECT_EQ(m.rows(), 1089u);
    EXPECT_NEAR(sum(row_sums(m)), 1.0, 1e-13);
    EXPECT_TRUE(symmetric(m, 1e-16));
    EXPECT_NEAR(l2_norm(m, Vector(m.rows(), 1.0)), 1.0, 1e-13);
}

TEST(Mass2D, RowSumsEqualHatIntegrals) {
    const auto mesh = TriMesh2D::unit_square(4);
    const auto m = assemble_mass(mesh, BoundarySpec::natural());
    const auto r = row_sums(m);
    // ∫φ_i = (area of the support)/3; interior nodes touch 6 triangles of area 1/32
    for (std::size_t n = 0; n < mesh.num_nodes(); ++n) {
        std::size_t touching = 0;
        for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
            const auto t = mesh.element(e);
            touching += std::count(t.begin(), t.end(), n);
        }
        EXPECT_NEAR(r[n], static_cast<double>(touching) / 32.0 / 3.0, 1e-15);
    }
}

TEST(Stiffness1D, ByHandAndKernel) {
    const Mesh1D mesh(0.0, 1.0, 2);
    const auto k = assemble_stiffness(mesh, BoundarySpec::natural(), 1.0);
    const double expected[3][3] = {{2, -2, 0}, {-2, 4, -2}, {0, -2, 2}};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_NEAR(k.at(i, j), expected[i][j], 1e-14);
        }
    }
    const auto zero = assemble_stiffness(mesh, BoundarySpec::natural(), 0.0);
    for (double v : zero.values()) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_THROW(assemble_stiffness(mesh, BoundarySpec::natural(), -1.0), DomainError);
}

TEST(Stiffness2D, KernelAndEnergyOfLinearFunction) {
    const auto mesh = TriMesh2D::unit_square(6);
    const auto k = assemble_stiffness(mesh, BoundarySpec::natural(), 0.5);
    for (double v : row_sums(k)) {
        EXPECT_NEAR(v, 0.0, 1e-13);
    }
    EXPECT_TRUE(symmetric(k, 1e-14));
    const DofMap dofs(mesh, BoundarySpec::natural());
    const auto x = interpolate<TriMesh2D>(mesh, dofs, [](const TriMesh2D::Point& p) { return p[0]; });
    // a ∫|∇x|² = a
    EXPECT_NEAR(linalg::dot(x, linalg::csr_matvec(k, x)), 0.5, 1e-13);
}

TEST(Advection1D, InteriorRowAndAntisymmetry) {
    const Mesh1D mesh(0.0, 2.0, 7);
    const double v[] = {1.0};
    const auto c = assemble_advection(mesh, BoundarySpec::natural(), v);
    EXPECT_NEAR(c.at(3, 2), -0.5, 1e-14);
    EXPECT_NEAR(c.at(3, 3), 0.0, 1e-14);
    EXPECT_NEAR(c.at(3, 4), 0.5, 1e-14);
    for (std::size_t i = 1; i + 1 < c.rows(); ++i) {
        for (std::size_t j = 1; j + 1 < c.cols(); ++j) {
            EXPECT_NEAR(c.at(i, j), -c.at(j, i), 1e-14);
        }
    }
    const double none[] = {0.0};
    const auto still = assemble_advection(mesh, BoundarySpec::natural(), none);
    for (double x : still.values()) {
        EXPECT_EQ(x, 0.0);
    }
    const double two[] = {1.0, 0.0};
    EXPECT_THROW(assemble_advection(mesh, BoundarySpec::natural(), two), DimensionError);
}

TEST(Advection2D, ActionOnLinearFunctions) {
    // C·x = b_x ∫φ_i and C·y = b_y ∫φ_i, since ∇x and ∇y are constant
    const auto mesh = TriMesh2D::unit_square(2);
    const BoundarySpec bc = BoundarySpec::natural();
    const DofMap dofs(mesh, bc);
    const double b[] = {2.0 * std::cos(0.3), 2.0 * std::sin(0.3)};
    const auto c = assemble_advection(mesh, bc, b);
    const auto hats = row_sums(assemble_mass(mesh, bc));
    const auto x = interpolate<TriMesh2D>(mesh, dofs, [](const TriMesh2D::Point& p) { return p[0]; });
    const auto y = interpolate<TriMesh2D>(mesh, dofs, [](const TriMesh2D::Point& p) { return p[1]; });
    const auto cx = linalg::csr_matvec(c, x);
    const auto cy = linalg::csr_matvec(c, y);
    for (std::size_t i = 0; i < hats.size(); ++i) {
        EXPECT_NEAR(cx[i], b[0] * hats[i], 1e-14);
        EXPECT_NEAR(cy[i], b[1] * hats[i], 1e-14);
    }
    for (double v : row_sums(c)) {
        EXPECT_NEAR(v, 0.0, 1e-14);
    }
}

TEST(Weighted, InverseDistanceValue) {
    const double mu[] = {-1.0, -1.0};
    EXPECT_NEAR(InverseDistanceWeight(mu)({0.0, 0.0}), 1.0 / std::sqrt(2.0), 1e-15);
    const double inside[] = {0.5, -0.5};
    EXPECT_THROW(InverseDistanceWeight{inside}, DomainError);
}

TEST(Weighted, ConstantWeightGivesScaledMass) {
    const auto mesh = TriMesh2D::unit_square(5);
    const auto bc = BoundarySpec::dirichlet(mesh);
    const auto m = assemble_mass(mesh, bc);
    const auto g = assemble_weighted_mass<TriMesh2D>(mesh, bc, [](const TriMesh2D::Point&) { return 3.0; });
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            EXPECT_NEAR(g.at(i, j), 3.0 * m.at(i, j), 1e-15);
        }
    }
    const auto load = assemble_weighted_load<TriMesh2D>(mesh, BoundarySpec::natural(),
                                                        [](const TriMesh2D::Point&) { return 1.0; });
    const auto hats = row_sums(assemble_mass(mesh, BoundarySpec::natural()));
    for (std::size_t i = 0; i < hats.size(); ++i) {
        EXPECT_NEAR(load[i], hats[i], 1e-15);
    }
}

TEST(Weighted, QuadraticWeightMatchesRefinedQuadrature) {
    const auto mesh = TriMesh2D::unit_square(3);
    const auto bc = BoundarySpec::natural();
    const ScalarField<TriMesh2D> g = [](const TriMesh2D::Point& p) { return 1.0 + p[0] * p[0] - 2.0 * p[0] * p[1]; };
    const auto gm = assemble_weighted_mass<TriMesh2D>(mesh, bc, g);
    // Reference: split each triangle into four and apply the rule on each child.
    linalg::DenseMatrix ref(mesh.num_nodes(), mesh.num_nodes());
    const std::array<std::array<std::array<double, 3>, 3>, 4> children{{
        {{{1, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}}},
        {{{0.5, 0.5, 0}, {0, 1, 0}, {0, 0.5, 0.5}}},
        {{{0.5, 0, 0.5}, {0, 0.5, 0.5}, {0, 0, 1}}},
        {{{0.5, 0.5, 0}, {0, 0.5, 0.5}, {0.5, 0, 0.5}}},
    }};
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const auto el = element_geometry(mesh, e);
        for (const auto& child : children) {
            for (const auto& q : quadrature_rule<TriMesh2D>()) {
                std::array<double, 3> bary{};
                for (std::size_t v = 0; v < 3; ++v) {
                    for (std::size_t k = 0; k < 3; ++k) {
                        bary[k] += q.bary[v] * child[v][k];
                    }
                }
                const double w = q.weight * el.measure / 4.0 * g(el.map(bary));
                for (std::size_t i = 0; i < 3; ++i) {
                    for (std::size_t j = 0; j < 3; ++j) {
                        ref(el.nodes[i], el.nodes[j]) += w * bary[i] * bary[j];
                    }
                }
            }
        }
    }
    for (std::size_t i = 0; i < ref.rows(); ++i) {
        for (std::size_t j = 0; j < ref.cols(); ++j) {
            EXPECT_NEAR(gm.at(i, j), ref(i, j), 1e-12);
        }
    }
    EXPECT_TRUE(symmetric(gm, 1e-16));
}

TEST(Interpolate, InitialConditions) {
    const Mesh1D mesh(0.0, 2.0, 2);
    const auto v = interpolate<Mesh1D>(mesh, [](const Mesh1D::Point& p) { return p[0] * (2.0 - p[0]) * std::exp(2.0 * p[0]); });
    EXPECT_NEAR(v[1], 7.38905609893065, 1e-12);
    const auto sq = TriMesh2D::unit_square(2);
    const auto w = interpolate<TriMesh2D>(sq, [](const TriMesh2D::Point& p) { return std::exp(-10.0 * (p[0] * p[0] + p[1] * p[1])); });
    EXPECT_EQ(w[0], 1.0);
    EXPECT_THROW(interpolate<Mesh1D>(mesh, [](const Mesh1D::Point&) { return std::nan(""); }), NumericalError);
}

TEST(Convergence, Poisson1DSecondOrder) {
    for (double s : oracle::poisson_slopes_1d()) {
        EXPECT_GE(s, 1.9);
    }
}

TEST(Convergence, Poisson2DSecondOrder) {
    for (double s : oracle::poisson_slopes_2d()) {
        EXPECT_GE(s, 1.9);
    }
}
