#pragma once

// Online stage: neural rollouts, Galerkin-POD baselines and error metrics.

#include "errors.hpp"
#include "fom.hpp"
#include "linalg.hpp"
#include "pod.hpp"
#include "resnet.hpp"
#include "sampling.hpp"
#include "train.hpp"

#include <chrono>
#include <functional>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace rbrom::rom {

using linalg::CsrMatrix;
using linalg::DenseMatrix;
using pod::PodBasis;
using pod::reconstruct;

struct RolloutResult {
    std::vector<Vector> coeffs; ///< v₀ … v_N̂, v₀ = 0
    double seconds = 0.0;       ///< wall time of the stepping loop
    Vector mu;
    std::size_t widest_buffer = 0; ///< largest object the loop touched
};

/// Network rollout from the zero initial deviation.
inline RolloutResult rollout(const net::TrainedModel& model, const net::ResNet& network, std::span<const double> mu,
                             std::size_t steps) {
    if (mu.size() != model.spec.p) {
        throw CompatibilityError("model expects P = " + std::to_string(model.spec.p) + " parameters, got " +
                                 std::to_string(mu.size()));
    }
    if (model.coeff_scale.size() != model.spec.n_rb) {
        throw CompatibilityError("model has " + std::to_string(model.coeff_scale.size()) +
                                 " coefficient scales for N_rb = " + std::to_string(model.spec.n_rb));
    }
    RolloutResult r;
    r.mu.assign(mu.begin(), mu.end());
    const Vector mu_norm = model.normalization.apply(mu);
    const Vector zero(model.spec.n_rb, 0.0);
    const auto start = std::chrono::steady_clock::now();
    r.coeffs = net::rollout_coefficients(network, model.params, zero, mu_norm, steps, &r.widest_buffer);
    for (auto& c : r.coeffs) {
        for (std::size_t j = 0; j < c.size(); ++j) {
            c[j] *= model.coeff_scale[j];
        }
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

inline RolloutResult rollout(const net::TrainedModel& model, std::span<const double> mu, std::size_t steps) {
    return rollout(model, net::ResNet(model.spec), mu, steps);
}

// ---------------------------------------------------------------------------
// Galerkin-POD

/// Reduced system for the deviation d = W c from the initial state u₀:
///   (WᵀMW) c' + (WᵀAW) c = −WᵀA u₀ + s(t)·Wᵀℓ.
struct ReducedSystem {
    DenseMatrix mass;
    DenseMatrix op;
    Vector constant_source;
    Vector load;                          ///< empty when unforced
    std::function<double(double)> signal;
};

namespace detail {

inline DenseMatrix galerkin_matrix(const PodBasis& basis, const CsrMatrix& a) {
    return linalg::matmul_transposed_left(basis.w, linalg::csr_matmul(a, basis.w));
}

inline DenseMatrix weighted_sum(const std::vector<DenseMatrix>& terms, std::span<const double> theta) {
    DenseMatrix out(terms.front().rows(), terms.front().cols());
    for (std::size_t j = 0; j < terms.size(); ++j) {
        for (std::size_t i = 0; i < out.rows(); ++i) {
            for (std::size_t k = 0; k < out.cols(); ++k) {
                out(i, k) += theta[j] * terms[j](i, k);
            }
        }
    }
    return out;
}

} // namespace detail

/// Steps the reduced system with the full-order integrator at the fine Δt
/// and keeps every save_every-th state, starting from c = 0.
inline std::vector<Vector> integrate_reduced(const ReducedSystem& sys, fom::Integrator integrator, double dt,
                                             std::size_t steps, std::size_t save_every) {
    const std::size_t n = sys.mass.rows();
    const double theta = integrator == fom::Integrator::crank_nicolson ? 0.5 : 1.0;
    DenseMatrix lhs(n, n);
    DenseMatrix rhs(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            lhs(i, j) = sys.mass(i, j) + theta * dt * sys.op(i, j);
            rhs(i, j) = sys.mass(i, j) - (1.0 - theta) * dt * sys.op(i, j);
        }
    }
    const linalg::LuFactor factor(lhs);
    std::vector<Vector> saved;
    Vector c(n, 0.0);
    saved.push_back(c);
    for (std::size_t k = 0; k < steps; ++k) {
        Vector b = linalg::matvec(rhs, c);
        linalg::axpy(dt, sys.constant_source, b);
        if (!sys.load.empty()) {
            const double t = static_cast<double>(k) * dt + theta * dt;
            const double s = sys.signal ? sys.signal(t) : 1.0;
            linalg::axpy(dt * s, sys.load, b);
        }
        c = factor.solve(b);
        if (!linalg::all_finite(c)) {
            throw SolverError("Galerkin step " + std::to_string(k + 1) + " produced a non-finite state");
        }
        if ((k + 1) % save_every == 0) {
            saved.push_back(c);
        }
    }
    return saved;
}

/// Galerkin-POD with reduced operators precomputed once per affine term;
/// the online cost per parameter is independent of N_h.
class GalerkinAffine {
  public:
    GalerkinAffine(const PodBasis& basis, const fom::AffineDecomposition& decomposition, std::span<const double> u0)
        : id_(decomposition.id), mass_(detail::galerkin_matrix(basis, decomposition.mass)) {
        if (!fom::is_affine(decomposition.id)) {
            throw DomainError("Galerkin affine baseline needs an affine problem");
        }
        if (u0.size() != basis.n_h()) {
            throw DimensionError("initial state does not match the basis dimension");
        }
        for (const auto& term : decomposition.terms) {
            terms_.push_back(detail::galerkin_matrix(basis, term));
            initial_.push_back(linalg::matvec_transposed(basis.w, linalg::csr_matvec(term, u0)));
        }
        decomposition_ = decomposition;
    }

    [[nodiscard]] ReducedSystem system(std::span<const double> mu) const {
        const Vector theta = decomposition_.coefficients(mu);
        ReducedSystem sys{mass_, detail::weighted_sum(terms_, theta), Vector(mass_.rows(), 0.0), {}, {}};
        for (std::size_t j = 0; j < initial_.size(); ++j) {
            linalg::axpy(-theta[j], initial_[j], sys.constant_source);
        }
        return sys;
    }

    [[nodiscard]] std::vector<Vector> solve(const fom::FomProblem& problem) const {
        if (problem.id != id_) {
            throw CompatibilityError("Galerkin baseline built for a different problem");
        }
        return integrate_reduced(system(problem.mu), problem.integrator, problem.dt, problem.steps,
                                 problem.save_every);
    }

  private:
    fom::ProblemId id_;
    DenseMatrix mass_;
    std::vector<DenseMatrix> terms_;
    std::vector<Vector> initial_;
    fom::AffineDecomposition decomposition_;
};

inline std::vector<Vector> galerkin_affine(const PodBasis& basis, const fom::FomProblem& problem) {
    if (!fom::is_affine(problem.id)) {
        throw DomainError(std::string(fom::to_string(problem.id)) + " is not affine in its parameters");
    }
    const auto disc = fom::Discretization::for_problem(problem.id, problem.resolution);
    const Vector u0 = fom::initial_state(problem.id, disc);
    return GalerkinAffine(basis, fom::affine_decomposition(problem.id, disc), u0).solve(problem);
}

/// Assembles the full operator for μ and projects it: cost scales with N_h.
inline std::vector<Vector> galerkin_reassembled(const PodBasis& basis, const fom::FomProblem& problem,
                                                const fom::Discretization& disc) {
    const auto full = fom::assemble_system(problem, disc);
    if (full.mass.rows() != basis.n_h()) {
        throw CompatibilityError("basis N_h = " + std::to_string(basis.n_h()) + " but problem has " +
                                 std::to_string(full.mass.rows()) + " DOFs");
    }
    const Vector u0 = fom::initial_state(problem.id, disc);
    ReducedSystem sys;
    sys.mass = detail::galerkin_matrix(basis, full.mass);
    sys.op = detail::galerkin_matrix(basis, full.op);
    sys.constant_source = linalg::matvec_transposed(basis.w, linalg::csr_matvec(full.op, u0));
    for (double& v : sys.constant_source) {
        v = -v;
    }
    if (!full.load.empty()) {
        sys.load = linalg::matvec_transposed(basis.w, full.load);
        sys.signal = full.signal;
    }
    return integrate_reduced(sys, problem.integrator, problem.dt, problem.steps, problem.save_every);
}

inline std::vector<Vector> galerkin_reassembled(const PodBasis& basis, const fom::FomProblem& problem) {
    return galerkin_reassembled(basis, problem, fom::Discretization::for_problem(problem.id, problem.resolution));
}

// ---------------------------------------------------------------------------
// Error metrics

/// Per-time ‖u_ref − u‖_M / ‖u_ref‖_M; empty entries mark times where the
/// reference vanishes.
inline std::vector<std::optional<double>> relative_l2_error(const std::vector<Vector>& reference,
                                                            const std::vector<Vector>& approx,
                                                            const CsrMatrix& mass) {
    if (reference.size() != approx.size()) {
        throw DimensionError("relative_l2_error: trajectories have " + std::to_string(reference.size()) + " and " +
                             std::to_string(approx.size()) + " states");
    }
    std::vector<std::optional<double>> out(reference.size());
    for (std::size_t k = 0; k < reference.size(); ++k) {
        const double denom = fem::l2_norm(mass, reference[k]);
        if (denom == 0.0) {
            continue;
        }
        Vector diff = reference[k];
        linalg::axpy(-1.0, approx[k], diff);
        out[k] = fem::l2_norm(mass, diff) / denom;
    }
    return out;
}

/// |ĉᵢ(t) − cᵢ(t)| / max_t |cᵢ(t)|, one row per time, one column per
/// coefficient. Coefficients whose reference trace is zero stay absolute.
inline DenseMatrix coefficient_errors(const std::vector<Vector>& reference, const std::vector<Vector>& approx) {
    if (reference.size() != approx.size() || reference.empty()) {
        throw DimensionError("coefficient_errors: trajectories differ in length or are empty");
    }
    const std::size_t n = reference.front().size();
    Vector scale(n, 0.0);
    for (const auto& c : reference) {
        if (c.size() != n) {
            throw DimensionError("coefficient_errors: inconsistent coefficient count");
        }
        for (std::size_t i = 0; i < n; ++i) {
            scale[i] = std::max(scale[i], std::abs(c[i]));
        }
    }
    DenseMatrix out(reference.size(), n);
    for (std::size_t k = 0; k < reference.size(); ++k) {
        if (approx[k].size() != n) {
            throw DimensionError("coefficient_errors: inconsistent coefficient count");
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double e = std::abs(approx[k][i] - reference[k][i]);
            out(k, i) = scale[i] > 0.0 ? e / scale[i] : e;
        }
    }
    return out;
}

/// Peclet number of the 1D benchmark, |μ₁|·L/μ₂ with L = 2.
inline double peclet(std::span<const double> mu) { return std::abs(mu[0]) * 2.0 / mu[1]; }

/// ‖c − v‖₂ / ‖u₀ + W c‖_M: network error against the exact projection,
/// relative to the projected field.
inline double projection_relative_error(const PodBasis& basis, const CsrMatrix& mass, std::span<const double> u0,
                                        std::span<const double> c, std::span<const double> v) {
    Vector diff(c.begin(), c.end());
    linalg::axpy(-1.0, v, diff);
    const double denom = fem::l2_norm(mass, reconstruct(basis, u0, c));
    return denom > 0.0 ? linalg::norm2(diff) / denom : linalg::norm2(diff);
}

// ---------------------------------------------------------------------------
// Test-set summaries

struct TimeStatistics {
    Vector mean;
    Vector stddev;
    std::vector<std::size_t> count; ///< parameters contributing at each time
};

/// Mean and population standard deviation over parameters at every time,
/// ignoring flagged (empty) entries.
inline TimeStatistics time_statistics(const std::vector<std::vector<std::optional<double>>>& errors) {
    TimeStatistics st;
    if (errors.empty()) {
        return st;
    }
    const std::size_t nt = errors.front().size();
    st.mean.assign(nt, 0.0);
    st.stddev.assign(nt, 0.0);
    st.count.assign(nt, 0);
    for (std::size_t k = 0; k < nt; ++k) {
        double sum = 0.0;
        for (const auto& e : errors) {
            if (e.at(k)) {
                sum += *e[k];
                ++st.count[k];
            }
        }
        if (st.count[k] == 0) {
            st.mean[k] = std::nan("");
            st.stddev[k] = std::nan("");
            continue;
        }
        st.mean[k] = sum / static_cast<double>(st.count[k]);
        double var = 0.0;
        for (const auto& e : errors) {
            if (e[k]) {
                var += (*e[k] - st.mean[k]) * (*e[k] - st.mean[k]);
            }
        }
        st.stddev[k] = std::sqrt(var / static_cast<double>(st.count[k]));
    }
    return st;
}

struct TraceSummary {
    double mean = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

inline TraceSummary summarize(const std::vector<std::optional<double>>& trace) {
    TraceSummary s;
    for (const auto& e : trace) {
        if (e) {
            s.mean += *e;
            s.max = std::max(s.max, *e);
            ++s.count;
        }
    }
    s.mean = s.count > 0 ? s.mean / static_cast<double>(s.count) : std::nan("");
    return s;
}

/// Fraction of parameters whose error is below `bound` at time k (flagged
/// entries are not counted either way).
inline double fraction_below(const std::vector<std::vector<std::optional<double>>>& errors, std::size_t k,
                             double bound) {
    std::size_t total = 0;
    std::size_t below = 0;
    for (const auto& e : errors) {
        if (e.at(k)) {
            ++total;
            below += *e[k] < bound ? 1 : 0;
        }
    }
    return total > 0 ? static_cast<double>(below) / static_cast<double>(total) : 1.0;
}

} // namespace rbrom::rom
