#pragma once
// Independent reference computations shared by the unit tests and the
// acceptance driver.

#include "rbrom/fom.hpp"
#include "rbrom/pod.hpp"
#include "rbrom/train.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace rbrom::oracle {

using linalg::CsrMatrix;
using linalg::DenseMatrix;

/// ‖u_h − u‖_L² by element quadrature of the exact difference.
template <class Mesh>
double l2_error(const Mesh& mesh, const fem::DofMap& dofs, const Vector& uh, const fem::ScalarField<Mesh>& exact) {
    const Vector nodal = dofs.expand(uh);
    double err = 0.0;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const auto el = fem::element_geometry(mesh, e);
        for (const auto& q : fem::quadrature_rule<Mesh>()) {
            double v = 0.0;
            for (std::size_t i = 0; i < el.nodes.size(); ++i) {
                v += q.bary[i] * nodal[el.nodes[i]];
            }
            const double d = v - exact(el.map(q.bary));
            err += q.weight * el.measure * d * d;
        }
    }
    return std::sqrt(err);
}

/// Elliptic projection of sin-type solutions on Dirichlet meshes.
template <class Mesh>
double poisson_error(const Mesh& mesh, const fem::ScalarField<Mesh>& exact, const fem::ScalarField<Mesh>& rhs) {
    const auto bc = fem::BoundarySpec::dirichlet(mesh);
    const fem::DofMap dofs(mesh, bc);
    const auto k = fem::assemble_stiffness(mesh, bc, 1.0);
    const auto f = fem::assemble_weighted_load(mesh, bc, rhs);
    const auto uh = linalg::BandedLu(k).solve(f);
    return l2_error(mesh, dofs, uh, exact);
}

/// log₂ ratios of successive entries.
inline std::vector<double> slopes(const std::vector<double>& errors) {
    std::vector<double> s;
    for (std::size_t i = 1; i < errors.size(); ++i) {
        s.push_back(std::log2(errors[i - 1] / errors[i]));
    }
    return s;
}

/// Spatial orders for −Δu = f with u = sin πx on (0,2) and sin πx sin πy on the unit square.
inline std::vector<double> poisson_slopes_1d() {
    constexpr double pi = std::numbers::pi;
    std::vector<double> errors;
    for (std::size_t n : {10, 20, 40, 80}) {
        errors.push_back(poisson_error<fem::Mesh1D>(
            fem::Mesh1D(0.0, 2.0, n), [](const fem::Mesh1D::Point& p) { return std::sin(pi * p[0]); },
            [](const fem::Mesh1D::Point& p) { return pi * pi * std::sin(pi * p[0]); }));
    }
    return slopes(errors);
}

inline std::vector<double> poisson_slopes_2d() {
    constexpr double pi = std::numbers::pi;
    using P = fem::TriMesh2D::Point;
    std::vector<double> errors;
    for (std::size_t n : {4, 8, 16, 32}) {
        errors.push_back(poisson_error<fem::TriMesh2D>(
            fem::TriMesh2D::unit_square(n), [](const P& p) { return std::sin(pi * p[0]) * std::sin(pi * p[1]); },
            [](const P& p) { return 2.0 * pi * pi * std::sin(pi * p[0]) * std::sin(pi * p[1]); }));
    }
    return slopes(errors);
}

/// Classical RK4 on M u' = s(t)ℓ − A u with a dense mass solve.
inline Vector rk4_reference(const fom::LinearSystem& sys, Vector u, double t_end, std::size_t steps) {
    const linalg::LuFactor mass(sys.mass.to_dense());
    const double h = t_end / static_cast<double>(steps);
    auto rate = [&](double t, const Vector& v) {
        Vector rhs = sys.source(t);
        if (rhs.empty()) {
            rhs.assign(v.size(), 0.0);
        }
        linalg::axpy(-1.0, linalg::csr_matvec(sys.op, v), rhs);
        return mass.solve(rhs);
    };
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * h;
        const Vector k1 = rate(t, u);
        Vector tmp = u;
        linalg::axpy(0.5 * h, k1, tmp);
        const Vector k2 = rate(t + 0.5 * h, tmp);
        tmp = u;
        linalg::axpy(0.5 * h, k2, tmp);
        const Vector k3 = rate(t + 0.5 * h, tmp);
        tmp = u;
        linalg::axpy(h, k3, tmp);
        const Vector k4 = rate(t + h, tmp);
        for (std::size_t i = 0; i < u.size(); ++i) {
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    return u;
}

/// Observed temporal orders of the final-time M-norm error under dt halving.
inline std::vector<double> temporal_slopes(fom::FomProblem problem, double t_end, std::size_t coarse_steps,
                                           std::size_t levels) {
    const auto disc = fom::Discretization::for_problem(problem.id, problem.resolution);
    const auto sys = fom::assemble_system(problem, disc);
    Vector start = fom::initial_state(problem.id, disc);
    if (problem.id == fom::ProblemId::nonaffine_2d) {
        // a nonzero start so both the homogeneous and forced parts matter
        start = fem::interpolate<fem::TriMesh2D>(std::get<fem::TriMesh2D>(disc.mesh()), disc.dofs(),
                                                 [](const fem::TriMesh2D::Point& p) {
                                                     return std::sin(std::numbers::pi * p[0]) * p[1] * (1.0 - p[1]);
                                                 });
    }
    const Vector exact = rk4_reference(sys, start, t_end, 40000);
    std::vector<double> errors;
    for (std::size_t l = 0; l < levels; ++l) {
        const std::size_t n = coarse_steps << l;
        const double dt = t_end / static_cast<double>(n);
        const fom::TimeStepper stepper(sys, problem.integrator, dt);
        Vector u = start;
        for (std::size_t k = 0; k < n; ++k) {
            u = stepper.step(u, static_cast<double>(k) * dt);
        }
        linalg::axpy(-1.0, exact, u);
        errors.push_back(fem::l2_norm(sys.mass, u));
    }
    return slopes(errors);
}

/// max |WᵀMW − I|.
inline double orthonormality_defect(const DenseMatrix& w, const CsrMatrix& m) {
    const auto g = linalg::matmul_transposed_left(w, linalg::csr_matmul(m, w));
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) {
            worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

/// W = L⁻ᵀ spans everything and is M-orthonormal.
inline pod::PodBasis full_basis(const CsrMatrix& mass) {
    const auto chol = linalg::cholesky(mass.to_dense());
    pod::PodBasis b;
    b.w = chol.solve_upper(DenseMatrix::identity(mass.rows()));
    b.attach_mass(mass);
    return b;
}

/// Largest M-norm relative error over a trajectory.
inline double worst_relative(const std::vector<Vector>& ref, const std::vector<Vector>& approx, const CsrMatrix& m) {
    double worst = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) {
        Vector d = approx[k];
        linalg::axpy(-1.0, ref[k], d);
        worst = std::max(worst, fem::l2_norm(m, d) / std::max(1e-300, fem::l2_norm(m, ref[k])));
    }
    return worst;
}

inline Vector random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Vector v(n);
    for (double& x : v) {
        x = dist(rng);
    }
    return v;
}

inline net::TrainingSet random_set(std::size_t n_rb, std::size_t p, std::size_t n_params, std::size_t n_saved,
                                   std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vector> mus;
    for (std::size_t i = 0; i < n_params; ++i) {
        Vector mu(p);
        for (double& x : mu) {
            x = u(rng);
        }
        mus.push_back(mu);
    }
    return {n_rb, n_saved, mus, random_vector(n_params * n_saved * n_rb, rng, 0.5)};
}

/// Central differences against the analytic gradient, max-norm relative error.
inline double gradient_check(const net::ResNet& net, const Vector& params, const net::TrainingSet& set,
                             std::size_t m) {
    const auto batch = net::all_samples(set);
    const Vector g = net::gradient(net, params, set, batch, m);
    constexpr double h = 1e-6;
    double err = 0.0;
    Vector x = params;
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = params[i] + h;
        const double fp = net::loss_multi(net, x, set, batch, m);
        x[i] = params[i] - h;
        const double fm = net::loss_multi(net, x, set, batch, m);
        x[i] = params[i];
        err = std::max(err, std::abs((fp - fm) / (2.0 * h) - g[i]));
    }
    return err / linalg::max_abs(g);
}

} // namespace rbrom::oracle
