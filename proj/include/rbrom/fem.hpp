#pragma once

// Linear (P1) finite elements on uniform interval and triangle meshes.
//
// All operators are assembled over the free degrees of freedom: nodes with
// a homogeneous Dirichlet constraint are eliminated from rows and columns.

#include "errors.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace rbrom::fem {

using linalg::CsrMatrix;
using linalg::Triplet;

class Mesh1D {
  public:
    static constexpr std::size_t dim = 1;
    using Point = std::array<double, 1>;

    Mesh1D(double a, double b, std::size_t elements) : a_(a), b_(b), n_el_(elements) {
        if (!(a < b)) {
            throw MeshError("Mesh1D: require a < b");
        }
        if (elements == 0) {
            throw MeshError("Mesh1D: at least one element required");
        }
    }

    [[nodiscard]] double a() const noexcept { return a_; }
    [[nodiscard]] double b() const noexcept { return b_; }
    [[nodiscard]] double h() const noexcept { return (b_ - a_) / static_cast<double>(n_el_); }
    [[nodiscard]] std::size_t num_nodes() const noexcept { return n_el_ + 1; }
    [[nodiscard]] std::size_t num_elements() const noexcept { return n_el_; }

    [[nodiscard]] Point point(std::size_t i) const {
        // The last node is pinned to b so the endpoint carries no round-off.
        return {i == n_el_ ? b_ : a_ + static_cast<double>(i) * h()};
    }

    [[nodiscard]] std::array<std::size_t, 2> element(std::size_t e) const { return {e, e + 1}; }

    [[nodiscard]] std::vector<std::size_t> boundary_nodes() const { return {0, n_el_}; }

  private:
    double a_;
    double b_;
    std::size_t n_el_;
};

class TriMesh2D {
  public:
    static constexpr std::size_t dim = 2;
    using Point = std::array<double, 2>;

    TriMesh2D(std::vector<Point> nodes, std::vector<std::array<std::size_t, 3>> triangles,
              std::vector<std::size_t> boundary)
        : nodes_(std::move(nodes)), triangles_(std::move(triangles)), boundary_(std::move(boundary)) {
        for (const auto& t : triangles_) {
            for (std::size_t v : t) {
                if (v >= nodes_.size()) {
                    throw MeshError("TriMesh2D: triangle references node " + std::to_string(v));
                }
            }
        }
    }

    /// (nx+1)² lattice on the unit square; every cell is split along its
    /// lower-left to upper-right diagonal into two counter-clockwise triangles.
    static TriMesh2D unit_square(std::size_t nx) {
        if (nx == 0) {
            throw MeshError("TriMesh2D: nx must be positive");
        }
        const std::size_t n1 = nx + 1;
        std::vector<Point> nodes;
        nodes.reserve(n1 * n1);
        std::vector<std::size_t> boundary;
        for (std::size_t j = 0; j < n1; ++j) {
            for (std::size_t i = 0; i < n1; ++i) {
                nodes.push_back({static_cast<double>(i) / static_cast<double>(nx),
                                 static_cast<double>(j) / static_cast<double>(nx)});
                if (i == 0 || j == 0 || i == nx || j == nx) {
                    boundary.push_back(j * n1 + i);
                }
            }
        }
        std::vector<std::array<std::size_t, 3>> tris;
        tris.reserve(2 * nx * nx);
        for (std::size_t j = 0; j < nx; ++j) {
            for (std::size_t i = 0; i < nx; ++i) {
                const std::size_t n00 = j * n1 + i;
                const std::size_t n10 = n00 + 1;
                const std::size_t n01 = n00 + n1;
                const std::size_t n11 = n01 + 1;
                tris.push_back({n00, n10, n11});
                tris.push_back({n00, n11, n01});
            }
        }
        TriMesh2D mesh(std::move(nodes), std::move(tris), std::move(boundary));
        mesh.nx_ = nx;
        return mesh;
    }

    [[nodiscard]] std::size_t nx() const noexcept { return nx_; }
    [[nodiscard]] std::size_t num_nodes() const noexcept { return nodes_.size(); }
    [[nodiscard]] std::size_t num_elements() const noexcept { return triangles_.size(); }
    [[nodiscard]] Point point(std::size_t i) const { return nodes_[i]; }
    [[nodiscard]] std::array<std::size_t, 3> element(std::size_t e) const { return triangles_[e]; }
    [[nodiscard]] const std::vector<std::size_t>& boundary_nodes() const noexcept { return boundary_; }

  private:
    std::vector<Point> nodes_;
    std::vector<std::array<std::size_t, 3>> triangles_;
    std::vector<std::size_t> boundary_;
    std::size_t nx_ = 0;
};

// ---------------------------------------------------------------------------
// Boundary conditions and DOF numbering

enum class BoundaryKind { dirichlet_homogeneous, neumann_natural };

struct BoundarySpec {
    BoundaryKind kind = BoundaryKind::neumann_natural;
    std::vector<std::size_t> constrained;

    static BoundarySpec natural() { return {}; }

    template <class Mesh>
    static BoundarySpec dirichlet(const Mesh& mesh) {
        const auto& b = mesh.boundary_nodes();
        return {BoundaryKind::dirichlet_homogeneous, std::vector<std::size_t>(b.begin(), b.end())};
    }
};

class DofMap {
  public:
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    template <class Mesh>
    DofMap(const Mesh& mesh, const BoundarySpec& bc) : node_to_free_(mesh.num_nodes(), 0) {
        const auto& boundary = mesh.boundary_nodes();
        for (std::size_t n : bc.constrained) {
            if (n >= mesh.num_nodes() || std::find(boundary.begin(), boundary.end(), n) == boundary.end()) {
                throw MeshError("BoundarySpec: node " + std::to_string(n) + " is not a boundary node");
            }
            node_to_free_[n] = npos;
        }
        for (std::size_t n = 0; n < node_to_free_.size(); ++n) {
            if (node_to_free_[n] != npos) {
                node_to_free_[n] = free_to_node_.size();
                free_to_node_.push_back(n);
            }
        }
    }

    [[nodiscard]] std::size_t free_count() const noexcept { return free_to_node_.size(); }
    [[nodiscard]] std::size_t node_count() const noexcept { return node_to_free_.size(); }
    [[nodiscard]] std::size_t free_index(std::size_t node) const { return node_to_free_[node]; }
    [[nodiscard]] std::size_t node_of(std::size_t free) const { return free_to_node_[free]; }

    /// Free-DOF vector to nodal values, zero on constrained nodes.
    [[nodiscard]] Vector expand(std::span<const double> free) const {
        if (free.size() != free_count()) {
            throw DimensionError("DofMap::expand: expected " + std::to_string(free_count()) + " values");
        }
        Vector nodal(node_count(), 0.0);
        for (std::size_t k = 0; k < free.size(); ++k) {
            nodal[free_to_node_[k]] = free[k];
        }
        return nodal;
    }

    [[nodiscard]] Vector restrict(std::span<const double> nodal) const {
        if (nodal.size() != node_count()) {
            throw DimensionError("DofMap::restrict: expected " + std::to_string(node_count()) + " values");
        }
        Vector free(free_count());
        for (std::size_t k = 0; k < free.size(); ++k) {
            free[k] = nodal[free_to_node_[k]];
        }
        return free;
    }

  private:
    std::vector<std::size_t> node_to_free_;
    std::vector<std::size_t> free_to_node_;
};

// ---------------------------------------------------------------------------
// Element geometry and quadrature

template <std::size_t Dim>
struct Element {
    std::array<std::size_t, Dim + 1> nodes;
    std::array<std::array<double, Dim>, Dim + 1> vertices;
    std::array<std::array<double, Dim>, Dim + 1> grad; ///< gradients of the barycentric hats
    double measure;

    [[nodiscard]] std::array<double, Dim> map(const std::array<double, Dim + 1>& bary) const {
        std::array<double, Dim> x{};
        for (std::size_t v = 0; v <= Dim; ++v) {
            for (std::size_t d = 0; d < Dim; ++d) {
                x[d] += bary[v] * vertices[v][d];
            }
        }
        return x;
    }
};

inline Element<1> element_geometry(const Mesh1D& mesh, std::size_t e) {
    const auto nodes = mesh.element(e);
    const double x0 = mesh.point(nodes[0])[0];
    const double x1 = mesh.point(nodes[1])[0];
    const double h = x1 - x0;
    if (!(h > 0.0)) {
        throw MeshError("degenerate element " + std::to_string(e));
    }
    return {nodes, {{{x0}, {x1}}}, {{{-1.0 / h}, {1.0 / h}}}, h};
}

inline Element<2> element_geometry(const TriMesh2D& mesh, std::size_t e) {
    const auto nodes = mesh.element(e);
    const auto p0 = mesh.point(nodes[0]);
    const auto p1 = mesh.point(nodes[1]);
    const auto p2 = mesh.point(nodes[2]);
    const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    double diam2 = 0.0;
    for (const auto& [a, b] : {std::pair{p0, p1}, std::pair{p1, p2}, std::pair{p2, p0}}) {
        diam2 = std::max(diam2, (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]));
    }
    if (!(det > 1e-14 * diam2)) {
        throw MeshError("degenerate element " + std::to_string(e) + " (signed area " + std::to_string(det / 2) + ")");
    }
    Element<2> el{};
    el.nodes = nodes;
    el.vertices = {p0, p1, p2};
    el.measure = 0.5 * det;
    el.grad[0] = {(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det};
    el.grad[1] = {(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det};
    el.grad[2] = {(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det};
    return el;
}

template <std::size_t Dim>
struct QuadraturePoint {
    std::array<double, Dim + 1> bary;
    double weight; ///< fraction of the element measure
};

/// Three-point Gauss rule on an interval, exact for degree 5.
inline std::vector<QuadraturePoint<1>> quadrature_rule(std::integral_constant<std::size_t, 1>) {
    const double r = std::sqrt(0.6);
    const double a = 0.5 * (1.0 - r);
    const double b = 0.5 * (1.0 + r);
    return {{{0.5, 0.5}, 4.0 / 9.0}, {{1.0 - a, a}, 5.0 / 18.0}, {{1.0 - b, b}, 5.0 / 18.0}};
}

/// Six-point symmetric rule on a triangle, exact for degree 4.
inline std::vector<QuadraturePoint<2>> quadrature_rule(std::integral_constant<std::size_t, 2>) {
    constexpr double a1 = 0.44594849091596488632;
    constexpr double w1 = 0.22338158967801146570;
    constexpr double a2 = 0.09157621350977074346;
    constexpr double w2 = 0.10995174365532186764;
    constexpr double b1 = 1.0 - 2.0 * a1;
    constexpr double b2 = 1.0 - 2.0 * a2;
    return {{{b1, a1, a1}, w1}, {{a1, b1, a1}, w1}, {{a1, a1, b1}, w1},
            {{b2, a2, a2}, w2}, {{a2, b2, a2}, w2}, {{a2, a2, b2}, w2}};
}

template <class Mesh>
inline auto quadrature_rule() {
    return quadrature_rule(std::integral_constant<std::size_t, Mesh::dim>{});
}

template <class Mesh>
using ScalarField = std::function<double(const typename Mesh::Point&)>;

// ---------------------------------------------------------------------------
// Assembly

namespace detail {

template <class Mesh, class LocalMatrix>
CsrMatrix assemble_matrix(const Mesh& mesh, const BoundarySpec& bc, LocalMatrix&& local) {
    constexpr std::size_t nv = Mesh::dim + 1;
    const DofMap dofs(mesh, bc);
    std::vector<Triplet> entries;
    entries.reserve(mesh.num_elements() * nv * nv);
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const auto el = element_geometry(mesh, e);
        const std::array<std::array<double, nv>, nv> ke = local(el);
        for (std::size_t i = 0; i < nv; ++i) {
            const std::size_t fi = dofs.free_index(el.nodes[i]);
            if (fi == DofMap::npos) {
                continue;
            }
            for (std::size_t j = 0; j < nv; ++j) {
                const std::size_t fj = dofs.free_index(el.nodes[j]);
                if (fj != DofMap::npos) {
                    entries.push_back({fi, fj, ke[i][j]});
                }
            }
        }
    }
    return CsrMatrix::from_triplets(dofs.free_count(), dofs.free_count(), std::move(entries));
}

template <std::size_t Dim>
double dot(const std::array<double, Dim>& a, const std::array<double, Dim>& b) {
    double s = 0.0;
    for (std::size_t d = 0; d < Dim; ++d) {
        s += a[d] * b[d];
    }
    return s;
}

} // namespace detail

/// Consistent mass matrix M_ij = (φ_j, φ_i).
template <class Mesh>
CsrMatrix assemble_mass(const Mesh& mesh, const BoundarySpec& bc) {
    constexpr std::size_t nv = Mesh::dim + 1;
    // ∫ λ_i λ_j = |T|(1 + δ_ij) / ((d+1)(d+2))
    return detail::assemble_matrix(mesh, bc, [](const Element<Mesh::dim>& el) {
        std::array<std::array<double, nv>, nv> ke{};
        const double base = el.measure / static_cast<double>(nv * (nv + 1));
        for (std::size_t i = 0; i < nv; ++i) {
            for (std::size_t j = 0; j < nv; ++j) {
                ke[i][j] = (i == j ? 2.0 : 1.0) * base;
            }
        }
        return ke;
    });
}

/// K_ij = ∫ a ∇φ_j·∇φ_i
template <class Mesh>
CsrMatrix assemble_stiffness(const Mesh& mesh, const BoundarySpec& bc, double diffusion) {
    if (!(diffusion >= 0.0)) {
        throw DomainError("assemble_stiffness: diffusion must be nonnegative");
    }
    constexpr std::size_t nv = Mesh::dim + 1;
    return detail::assemble_matrix(mesh, bc, [diffusion](const Element<Mesh::dim>& el) {
        std::array<std::array<double, nv>, nv> ke{};
        for (std::size_t i = 0; i < nv; ++i) {
            for (std::size_t j = 0; j < nv; ++j) {
                ke[i][j] = diffusion * el.measure * detail::dot(el.grad[i], el.grad[j]);
            }
        }
        return ke;
    });
}

/// C_ij = ∫ (v·∇φ_j) φ_i for a constant velocity v.
template <class Mesh>
CsrMatrix assemble_advection(const Mesh& mesh, const BoundarySpec& bc, std::span<const double> velocity) {
    if (velocity.size() != Mesh::dim) {
        throw DimensionError("assemble_advection: velocity has " + std::to_string(velocity.size()) +
                             " components, mesh dimension is " + std::to_string(Mesh::dim));
    }
    constexpr std::size_t nv = Mesh::dim + 1;
    std::array<double, Mesh::dim> v{};
    std::copy(velocity.begin(), velocity.end(), v.begin());
    return detail::assemble_matrix(mesh, bc, [v](const Element<Mesh::dim>& el) {
        std::array<std::array<double, nv>, nv> ke{};
        const double hat_integral = el.measure / static_cast<double>(nv);
        for (std::size_t j = 0; j < nv; ++j) {
            const double slope = detail::dot(v, el.grad[j]);
            for (std::size_t i = 0; i < nv; ++i) {
                ke[i][j] = slope * hat_integral;
            }
        }
        return ke;
    });
}

/// (g u, v) by element quadrature.
template <class Mesh>
CsrMatrix assemble_weighted_mass(const Mesh& mesh, const BoundarySpec& bc, const ScalarField<Mesh>& weight) {
    constexpr std::size_t nv = Mesh::dim + 1;
    const auto rule = quadrature_rule<Mesh>();
    return detail::assemble_matrix(mesh, bc, [&](const Element<Mesh::dim>& el) {
        std::array<std::array<double, nv>, nv> ke{};
        for (const auto& q : rule) {
            const double g = weight(el.map(q.bary)) * q.weight * el.measure;
            for (std::size_t i = 0; i < nv; ++i) {
                for (std::size_t j = 0; j < nv; ++j) {
                    ke[i][j] += g * q.bary[i] * q.bary[j];
                }
            }
        }
        return ke;
    });
}

/// (g, φ_i) by element quadrature, over free DOFs.
template <class Mesh>
Vector assemble_weighted_load(const Mesh& mesh, const BoundarySpec& bc, const ScalarField<Mesh>& weight) {
    constexpr std::size_t nv = Mesh::dim + 1;
    const DofMap dofs(mesh, bc);
    const auto rule = quadrature_rule<Mesh>();
    Vector load(dofs.free_count(), 0.0);
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const auto el = element_geometry(mesh, e);
        for (const auto& q : rule) {
            const double g = weight(el.map(q.bary)) * q.weight * el.measure;
            for (std::size_t i = 0; i < nv; ++i) {
                const std::size_t fi = dofs.free_index(el.nodes[i]);
                if (fi != DofMap::npos) {
                    load[fi] += g * q.bary[i];
                }
            }
        }
    }
    return load;
}

/// g(x; μ) = 1 / |x − μ|, smooth on the closed unit square for μ ∈ [−1, −0.01]².
class InverseDistanceWeight {
  public:
    explicit InverseDistanceWeight(std::span<const double> mu) {
        if (mu.size() != 2) {
            throw DimensionError("InverseDistanceWeight: parameter must have two components");
        }
        constexpr double slack = 1e-12;
        for (double m : mu) {
            if (!(m >= -1.0 - slack && m <= -0.01 + slack)) {
                throw DomainError("InverseDistanceWeight: parameter " + std::to_string(m) +
                                  " outside [-1, -0.01]; the weight would be singular near the domain");
            }
        }
        mu_ = {mu[0], mu[1]};
    }

    double operator()(const TriMesh2D::Point& x) const {
        return 1.0 / std::hypot(x[0] - mu_[0], x[1] - mu_[1]);
    }

  private:
    std::array<double, 2> mu_{};
};

inline CsrMatrix assemble_weighted_mass(const TriMesh2D& mesh, const BoundarySpec& bc, std::span<const double> mu) {
    return assemble_weighted_mass<TriMesh2D>(mesh, bc, InverseDistanceWeight(mu));
}

inline Vector assemble_weighted_load(const TriMesh2D& mesh, const BoundarySpec& bc, std::span<const double> mu) {
    return assemble_weighted_load<TriMesh2D>(mesh, bc, InverseDistanceWeight(mu));
}

// ---------------------------------------------------------------------------
// Nodal interpolation and norms

/// Nodal interpolant over all mesh nodes.
template <class Mesh>
Vector interpolate(const Mesh& mesh, const ScalarField<Mesh>& f) {
    Vector v(mesh.num_nodes());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = f(mesh.point(i));
        if (!std::isfinite(v[i])) {
            throw NumericalError("interpolate: function is not finite at node " + std::to_string(i));
        }
    }
    return v;
}

template <class Mesh>
Vector interpolate(const Mesh& mesh, const DofMap& dofs, const ScalarField<Mesh>& f) {
    return dofs.restrict(interpolate(mesh, f));
}

/// Discrete L² norm √(vᵀ M v).
inline double l2_norm(const CsrMatrix& mass, std::span<const double> v) {
    const Vector mv = linalg::csr_matvec(mass, v);
    return std::sqrt(std::max(0.0, linalg::dot(v, mv)));
}

} // namespace rbrom::fem
