#pragma once

// Full-order time integration of the three parabolic benchmarks and the
// snapshot archive that feeds the POD stage.

#include "errors.hpp"
#include "fem.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "parallel.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rbrom::fom {

using fem::BoundarySpec;
using fem::DofMap;
using fem::Mesh1D;
using fem::TriMesh2D;
using linalg::CsrMatrix;

enum class ProblemId { advdiff_1d, advdiff_2d, nonaffine_2d };
enum class Integrator { crank_nicolson, backward_euler };

inline std::string_view to_string(ProblemId id) {
    switch (id) {
    case ProblemId::advdiff_1d: return "advdiff-1d";
    case ProblemId::advdiff_2d: return "advdiff-2d";
    case ProblemId::nonaffine_2d: return "nonaffine-2d";
    }
    return "?";
}

inline std::optional<ProblemId> parse_problem(std::string_view s) {
    for (auto id : {ProblemId::advdiff_1d, ProblemId::advdiff_2d, ProblemId::nonaffine_2d}) {
        if (to_string(id) == s) {
            return id;
        }
    }
    return std::nullopt;
}

inline std::string_view to_string(Integrator i) {
    return i == Integrator::crank_nicolson ? "crank-nicolson" : "backward-euler";
}

inline std::optional<Integrator> parse_integrator(std::string_view s) {
    if (s == "crank-nicolson") {
        return Integrator::crank_nicolson;
    }
    if (s == "backward-euler") {
        return Integrator::backward_euler;
    }
    return std::nullopt;
}

/// Number of parameters P of each benchmark.
inline std::size_t parameter_dimension(ProblemId id) { return id == ProblemId::advdiff_2d ? 1 : 2; }

inline bool is_affine(ProblemId id) { return id != ProblemId::nonaffine_2d; }

// Fixed constants of the 2D advection-diffusion benchmark.
inline constexpr double advdiff2d_diffusion = 0.5;
inline constexpr double advdiff2d_speed = 2.0;

struct FomProblem {
    ProblemId id = ProblemId::advdiff_1d;
    Vector mu;
    std::size_t resolution = 101; ///< elements (1D) or cells per side (2D)
    Integrator integrator = Integrator::crank_nicolson;
    double dt = 3e-4;
    std::size_t steps = 1000;
    std::size_t save_every = 10;

    void validate() const {
        if (mu.size() != parameter_dimension(id)) {
            throw DimensionError(std::string(to_string(id)) + " expects " + std::to_string(parameter_dimension(id)) +
                                 " parameters, got " + std::to_string(mu.size()));
        }
        if (!(dt > 0.0) || !std::isfinite(dt)) {
            throw DomainError("time step must be positive");
        }
        if (steps == 0 || save_every == 0 || resolution == 0) {
            throw DomainError("steps, save_every and resolution must be positive");
        }
    }

    [[nodiscard]] double final_time() const { return dt * static_cast<double>(steps); }
    [[nodiscard]] std::size_t saved_count() const { return 1 + steps / save_every; }

    /// Same mesh, integrator and time grid.
    [[nodiscard]] bool same_setup(const FomProblem& o) const {
        return id == o.id && resolution == o.resolution && integrator == o.integrator && dt == o.dt &&
               steps == o.steps && save_every == o.save_every;
    }
};

/// Rejects parameters outside the range where the problem is well posed.
inline void check_parameter(ProblemId id, std::span<const double> mu) {
    if (mu.size() != parameter_dimension(id)) {
        throw DimensionError(std::string(to_string(id)) + " expects " + std::to_string(parameter_dimension(id)) +
                             " parameters");
    }
    for (double m : mu) {
        if (!std::isfinite(m)) {
            throw DomainError("parameter is not finite");
        }
    }
    if (id == ProblemId::advdiff_1d && !(mu[1] > 0.0)) {
        throw DomainError("diffusion coefficient must be positive, got " + std::to_string(mu[1]));
    }
    if (id == ProblemId::nonaffine_2d) {
        (void)fem::InverseDistanceWeight(mu);
    }
}

/// Discretization settings used for each benchmark in the reference experiments.
inline FomProblem preset_problem(ProblemId id, Vector mu) {
    switch (id) {
    case ProblemId::advdiff_1d:
        return {id, std::move(mu), 101, Integrator::crank_nicolson, 3e-4, 1000, 10};
    case ProblemId::advdiff_2d:
        return {id, std::move(mu), 32, Integrator::backward_euler, 1e-3, 500, 10};
    case ProblemId::nonaffine_2d:
        return {id, std::move(mu), 32, Integrator::backward_euler, 1e-2, 200, 10};
    }
    throw DomainError("unknown problem");
}

// ---------------------------------------------------------------------------

class Discretization {
  public:
    static Discretization for_problem(ProblemId id, std::size_t resolution) {
        if (id == ProblemId::advdiff_1d) {
            Mesh1D mesh(0.0, 2.0, resolution);
            auto bc = BoundarySpec::dirichlet(mesh);
            return Discretization(std::move(mesh), std::move(bc));
        }
        auto mesh = TriMesh2D::unit_square(resolution);
        auto bc = id == ProblemId::advdiff_2d ? BoundarySpec::natural() : BoundarySpec::dirichlet(mesh);
        return Discretization(std::move(mesh), std::move(bc));
    }

    template <class Mesh>
    Discretization(Mesh mesh, BoundarySpec bc) : dofs_(mesh, bc), mesh_(std::move(mesh)), bc_(std::move(bc)) {}

    [[nodiscard]] const std::variant<Mesh1D, TriMesh2D>& mesh() const noexcept { return mesh_; }
    [[nodiscard]] const BoundarySpec& boundary() const noexcept { return bc_; }
    [[nodiscard]] const DofMap& dofs() const noexcept { return dofs_; }
    [[nodiscard]] std::size_t free_count() const noexcept { return dofs_.free_count(); }

    [[nodiscard]] CsrMatrix mass() const {
        return std::visit([&](const auto& m) { return fem::assemble_mass(m, bc_); }, mesh_);
    }

  private:
    DofMap dofs_;
    std::variant<Mesh1D, TriMesh2D> mesh_;
    BoundarySpec bc_;
};

/// Semi-discrete system M u' + A u = s(t)·ℓ.
struct LinearSystem {
    CsrMatrix mass;
    CsrMatrix op;
    Vector load;                          ///< empty when unforced
    std::function<double(double)> signal; ///< time profile of the load

    [[nodiscard]] Vector source(double t) const {
        Vector f(load.size());
        if (!load.empty()) {
            const double s = signal ? signal(t) : 1.0;
            for (std::size_t i = 0; i < f.size(); ++i) {
                f[i] = s * load[i];
            }
        }
        return f;
    }
};

/// Assembles the full operator for μ directly (no affine splitting).
inline LinearSystem assemble_system(const FomProblem& problem, const Discretization& disc) {
    problem.validate();
    LinearSystem sys;
    sys.mass = disc.mass();
    const auto& bc = disc.boundary();
    switch (problem.id) {
    case ProblemId::advdiff_1d: {
        // u_t + μ₁ u_x = μ₂ u_xx
        const auto& mesh = std::get<Mesh1D>(disc.mesh());
        const double velocity[] = {problem.mu[0]};
        sys.op = linalg::linear_combination(1.0, fem::assemble_stiffness(mesh, bc, problem.mu[1]), 1.0,
                                            fem::assemble_advection(mesh, bc, velocity));
        break;
    }
    case ProblemId::advdiff_2d: {
        // u_t − aΔu + b(cos μ, sin μ)·∇u = 0
        const auto& mesh = std::get<TriMesh2D>(disc.mesh());
        const double velocity[] = {advdiff2d_speed * std::cos(problem.mu[0]),
                                   advdiff2d_speed * std::sin(problem.mu[0])};
        sys.op = linalg::linear_combination(1.0, fem::assemble_stiffness(mesh, bc, advdiff2d_diffusion), 1.0,
                                            fem::assemble_advection(mesh, bc, velocity));
        break;
    }
    case ProblemId::nonaffine_2d: {
        // u_t − Δu + g u = sin(2πt) g
        const auto& mesh = std::get<TriMesh2D>(disc.mesh());
        sys.op = linalg::linear_combination(1.0, fem::assemble_stiffness(mesh, bc, 1.0), 1.0,
                                            fem::assemble_weighted_mass(mesh, bc, problem.mu));
        sys.load = fem::assemble_weighted_load(mesh, bc, problem.mu);
        sys.signal = [](double t) { return std::sin(2.0 * std::numbers::pi * t); };
        break;
    }
    }
    return sys;
}

inline Vector initial_state(ProblemId id, const Discretization& disc) {
    switch (id) {
    case ProblemId::advdiff_1d: {
        const auto& mesh = std::get<Mesh1D>(disc.mesh());
        return fem::interpolate<Mesh1D>(mesh, disc.dofs(), [](const Mesh1D::Point& p) {
            const double x = p[0];
            return x * (2.0 - x) * std::exp(2.0 * x);
        });
    }
    case ProblemId::advdiff_2d: {
        const auto& mesh = std::get<TriMesh2D>(disc.mesh());
        return fem::interpolate<TriMesh2D>(mesh, disc.dofs(), [](const TriMesh2D::Point& p) {
            return std::exp(-10.0 * (p[0] * p[0] + p[1] * p[1]));
        });
    }
    case ProblemId::nonaffine_2d:
        return Vector(disc.free_count(), 0.0);
    }
    return {};
}

/// A(μ) = Σ θ_j(μ) A_j for the affine benchmarks.
struct AffineDecomposition {
    ProblemId id;
    CsrMatrix mass;
    std::vector<CsrMatrix> terms;

    [[nodiscard]] Vector coefficients(std::span<const double> mu) const {
        if (mu.size() != parameter_dimension(id)) {
            throw DimensionError("affine coefficients: wrong parameter dimension");
        }
        if (id == ProblemId::advdiff_1d) {
            return {mu[1], mu[0]};
        }
        return {advdiff2d_diffusion, advdiff2d_speed * std::cos(mu[0]), advdiff2d_speed * std::sin(mu[0])};
    }
};

inline AffineDecomposition affine_decomposition(ProblemId id, const Discretization& disc) {
    if (!is_affine(id)) {
        throw DomainError(std::string(to_string(id)) + " has no affine parameter decomposition");
    }
    AffineDecomposition d{id, disc.mass(), {}};
    const auto& bc = disc.boundary();
    if (id == ProblemId::advdiff_1d) {
        const auto& mesh = std::get<Mesh1D>(disc.mesh());
        const double unit[] = {1.0};
        d.terms.push_back(fem::assemble_stiffness(mesh, bc, 1.0));
        d.terms.push_back(fem::assemble_advection(mesh, bc, unit));
    } else {
        const auto& mesh = std::get<TriMesh2D>(disc.mesh());
        const double ex[] = {1.0, 0.0};
        const double ey[] = {0.0, 1.0};
        d.terms.push_back(fem::assemble_stiffness(mesh, bc, 1.0));
        d.terms.push_back(fem::assemble_advection(mesh, bc, ex));
        d.terms.push_back(fem::assemble_advection(mesh, bc, ey));
    }
    return d;
}

// ---------------------------------------------------------------------------
// Time stepping

/// Implicit one-step integrator with the system matrix factored once.
///   Crank–Nicolson:  (M + Δt/2·A) u⁺ = (M − Δt/2·A) u + Δt·f(t + Δt/2)
///   backward Euler:  (M + Δt·A) u⁺ = M u + Δt·f(t + Δt)
class TimeStepper {
  public:
    TimeStepper(LinearSystem system, Integrator integrator, double dt)
        : system_(std::move(system)), integrator_(integrator), dt_(dt),
          explicit_part_(integrator == Integrator::crank_nicolson
                             ? linalg::linear_combination(1.0, system_.mass, -0.5 * dt, system_.op)
                             : system_.mass),
          implicit_(linalg::linear_combination(
              1.0, system_.mass, integrator == Integrator::crank_nicolson ? 0.5 * dt : dt, system_.op)) {
        if (!(dt > 0.0)) {
            throw DomainError("TimeStepper: dt must be positive");
        }
    }

    [[nodiscard]] Vector step(std::span<const double> u, double t) const {
        Vector rhs = linalg::csr_matvec(explicit_part_, u);
        if (!system_.load.empty()) {
            const double t_eval = integrator_ == Integrator::crank_nicolson ? t + 0.5 * dt_ : t + dt_;
            linalg::axpy(dt_, system_.source(t_eval), rhs);
        }
        return implicit_.solve(rhs);
    }

    [[nodiscard]] double dt() const noexcept { return dt_; }
    [[nodiscard]] std::size_t dim() const noexcept { return implicit_.dim(); }

  private:
    LinearSystem system_;
    Integrator integrator_;
    double dt_;
    CsrMatrix explicit_part_;
    linalg::BandedLu implicit_;
};

inline Vector step(const LinearSystem& system, Integrator integrator, double dt, std::span<const double> u, double t) {
    return TimeStepper(system, integrator, dt).step(u, t);
}

struct Trajectory {
    std::vector<Vector> states;      ///< saved states, first one at t = 0
    std::vector<std::size_t> steps;  ///< fine step index of each saved state
};

/// Integrates one parameter and keeps step 0 and every save_every-th step.
inline Trajectory run_fom(const FomProblem& problem, const Discretization& disc) {
    problem.validate();
    const TimeStepper stepper(assemble_system(problem, disc), problem.integrator, problem.dt);
    Trajectory traj;
    traj.states.reserve(problem.saved_count());
    Vector u = initial_state(problem.id, disc);
    traj.states.push_back(u);
    traj.steps.push_back(0);
    for (std::size_t k = 0; k < problem.steps; ++k) {
        try {
            u = stepper.step(u, static_cast<double>(k) * problem.dt);
        } catch (const Error& e) {
            throw SolverError("full-order step " + std::to_string(k + 1) + " failed: " + e.what());
        }
        if (!linalg::all_finite(u)) {
            throw SolverError("full-order step " + std::to_string(k + 1) + " produced a non-finite state");
        }
        if ((k + 1) % problem.save_every == 0) {
            traj.states.push_back(u);
            traj.steps.push_back(k + 1);
        }
    }
    return traj;
}

inline Trajectory run_fom(const FomProblem& problem) {
    return run_fom(problem, Discretization::for_problem(problem.id, problem.resolution));
}

// ---------------------------------------------------------------------------
// Snapshot archive

inline constexpr std::string_view snapshot_magic = "RBSNAP01";

/// Saved DOF trajectories stored as deviations from each parameter's
/// initial state, in (parameter, time, dof) order.
struct SnapshotSet {
    std::size_t n_params = 0;
    std::size_t n_saved = 0;
    std::size_t n_h = 0;
    std::size_t p = 0;
    Vector params;
    Vector initial;
    Vector deviations;

    [[nodiscard]] std::span<const double> mu(std::size_t i) const { return {params.data() + i * p, p}; }
    [[nodiscard]] std::span<const double> initial_state(std::size_t i) const {
        return {initial.data() + i * n_h, n_h};
    }
    [[nodiscard]] std::span<const double> deviation(std::size_t i, std::size_t k) const {
        return {deviations.data() + (i * n_saved + k) * n_h, n_h};
    }

    /// N_h × N_saved matrix of the deviations of parameter i.
    [[nodiscard]] linalg::DenseMatrix trajectory_matrix(std::size_t i) const {
        linalg::DenseMatrix s(n_h, n_saved);
        for (std::size_t k = 0; k < n_saved; ++k) {
            s.set_column(k, deviation(i, k));
        }
        return s;
    }

    friend bool operator==(const SnapshotSet&, const SnapshotSet&) = default;
};

/// Runs every problem and stores its saved states; `seconds` receives the
/// per-parameter solve time when given.
inline SnapshotSet generate_snapshots(const std::vector<FomProblem>& problems, std::size_t threads = 1,
                                      std::vector<double>* seconds = nullptr) {
    if (problems.empty()) {
        throw DomainError("generate_snapshots: no parameters");
    }
    for (const auto& pr : problems) {
        pr.validate();
        if (!pr.same_setup(problems.front())) {
            throw DomainError("generate_snapshots: all problems must share mesh and time settings");
        }
    }
    const auto& first = problems.front();
    const Discretization disc = Discretization::for_problem(first.id, first.resolution);
    SnapshotSet set;
    set.n_params = problems.size();
    set.n_saved = first.saved_count();
    set.n_h = disc.free_count();
    set.p = parameter_dimension(first.id);
    set.params.resize(set.n_params * set.p);
    set.initial.resize(set.n_params * set.n_h);
    set.deviations.resize(set.n_params * set.n_saved * set.n_h);
    if (seconds) {
        seconds->assign(problems.size(), 0.0);
    }
    parallel_for(problems.size(), threads, [&](std::size_t i) {
        const auto start = std::chrono::steady_clock::now();
        const Trajectory traj = run_fom(problems[i], disc);
        if (seconds) {
            (*seconds)[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        std::copy(problems[i].mu.begin(), problems[i].mu.end(), set.params.begin() + static_cast<std::ptrdiff_t>(i * set.p));
        const Vector& u0 = traj.states.front();
        std::copy(u0.begin(), u0.end(), set.initial.begin() + static_cast<std::ptrdiff_t>(i * set.n_h));
        for (std::size_t k = 0; k < set.n_saved; ++k) {
            double* out = set.deviations.data() + (i * set.n_saved + k) * set.n_h;
            for (std::size_t j = 0; j < set.n_h; ++j) {
                out[j] = traj.states[k][j] - u0[j];
            }
        }
    });
    return set;
}

inline std::string serialize(const SnapshotSet& s) {
    io::BinaryWriter w(snapshot_magic);
    w.u64(s.n_params);
    w.u64(s.n_saved);
    w.u64(s.n_h);
    w.u64(s.p);
    w.f64s(s.params);
    w.f64s(s.initial);
    w.f64s(s.deviations);
    return std::move(w).finish();
}

inline SnapshotSet deserialize_snapshots(std::string bytes) {
    io::BinaryReader r(std::move(bytes), snapshot_magic);
    SnapshotSet s;
    s.n_params = r.u64();
    s.n_saved = r.u64();
    s.n_h = r.u64();
    s.p = r.u64();
    s.params = r.f64s(io::checked_product({s.p, s.n_params}));
    s.initial = r.f64s(io::checked_product({s.n_params, s.n_h}));
    s.deviations = r.f64s(io::checked_product({s.n_params, s.n_saved, s.n_h}));
    r.expect_end();
    return s;
}

inline void write_snapshots(const std::string& path, const SnapshotSet& s) { io::write_file(path, serialize(s)); }

inline SnapshotSet read_snapshots(const std::string& path) { return deserialize_snapshots(io::read_file(path)); }

} // namespace rbrom::fom
