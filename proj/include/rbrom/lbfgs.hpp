#pragma once

// Limited-memory BFGS with a strong-Wolfe line search (cubic interpolation
// and zoom), following the structure of the widely used PyTorch optimizer.

#include "errors.hpp"
#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace rbrom::net {

/// Objective callable: returns f(x) and writes ∇f(x) into grad.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsOptions {
    std::size_t history = 10;
    std::size_t max_iterations = 100;
    double grad_tolerance = 1e-10; ///< on ‖∇f‖_∞
    double change_tolerance = 1e-12; ///< smallest meaningful step or bracket width
    double learning_rate = 1.0;
    double c1 = 1e-4;
    double c2 = 0.9;
    std::size_t max_line_search = 25;
};

enum class StopReason { gradient_tolerance, max_iterations, line_search_failure, non_finite, callback };

inline std::string_view to_string(StopReason r) {
    switch (r) {
    case StopReason::gradient_tolerance: return "gradient-tolerance";
    case StopReason::max_iterations: return "max-iterations";
    case StopReason::line_search_failure: return "line-search-failure";
    case StopReason::non_finite: return "non-finite";
    case StopReason::callback: return "callback";
    }
    return "?";
}

struct IterateRecord {
    std::size_t iteration;
    double value;
    double grad_inf;
    double step;
    std::size_t evaluations;
};

struct LbfgsResult {
    Vector x;
    double value = 0.0;
    StopReason reason = StopReason::max_iterations;
    std::vector<IterateRecord> log;
    std::size_t evaluations = 0;
};

/// Called after every accepted iteration; returning true stops the run.
using IterationCallback = std::function<bool(std::size_t iteration, std::span<const double> x, double value)>;

namespace detail {

/// Minimizer of the cubic through (x1, f1, g1), (x2, f2, g2), clamped to bounds.
inline double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2, double lo,
                                double hi) {
    const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    const double d2_square = d1 * d1 - g1 * g2;
    if (d2_square >= 0.0) {
        const double d2 = std::sqrt(d2_square);
        const double min_pos = x1 <= x2 ? x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
                                        : x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
        if (std::isfinite(min_pos)) {
            return std::min(std::max(min_pos, lo), hi);
        }
    }
    return 0.5 * (lo + hi);
}

inline double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2) {
    return cubic_interpolate(x1, f1, g1, x2, f2, g2, std::min(x1, x2), std::max(x1, x2));
}

struct Probe {
    double t;
    double f;
    Vector g;
    double gtd;
};

struct LineSearchOutcome {
    Probe best;
    std::size_t evaluations;
    bool non_finite;
};

inline LineSearchOutcome strong_wolfe(const Objective& fn, std::span<const double> x, double t,
                                      std::span<const double> d, double f, std::span<const double> g, double gtd,
                                      const LbfgsOptions& opt) {
    const double d_norm = linalg::max_abs(d);
    Vector xt(x.size());
    std::size_t evals = 0;
    auto evaluate = [&](double step) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            xt[i] = x[i] + step * d[i];
        }
        Probe p{step, 0.0, Vector(x.size()), 0.0};
        p.f = fn(xt, p.g);
        ++evals;
        p.gtd = linalg::dot(p.g, d);
        return p;
    };
    auto finite = [](const Probe& p) { return std::isfinite(p.f) && std::isfinite(p.gtd); };

    const Probe start{0.0, f, Vector(g.begin(), g.end()), gtd};
    Probe prev = start;
    Probe cur = evaluate(t);
    if (!finite(cur)) {
        return {start, evals, true};
    }
    std::vector<Probe> bracket;
    bool done = false;
    std::size_t iter = 0;
    while (iter < opt.max_line_search) {
        if (cur.f > f + opt.c1 * cur.t * gtd || (iter > 1 && cur.f >= prev.f)) {
            bracket = {prev, cur};
            break;
        }
        if (std::abs(cur.gtd) <= -opt.c2 * gtd) {
            bracket = {cur};
            done = true;
            break;
        }
        if (cur.gtd >= 0.0) {
            bracket = {prev, cur};
            break;
        }
        const double min_step = cur.t + 0.01 * (cur.t - prev.t);
        const double max_step = cur.t * 10.0;
        const double next = cubic_interpolate(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, min_step, max_step);
        prev = std::move(cur);
        cur = evaluate(next);
        if (!finite(cur)) {
            return {prev, evals, true};
        }
        ++iter;
    }
    if (iter == opt.max_line_search) {
        bracket = {start, cur};
    }

    // Zoom until the bracket holds a point satisfying the strong Wolfe conditions.
    bool insufficient = false;
    std::size_t low = 0;
    std::size_t high = 1;
    if (bracket.size() == 2 && bracket[0].f > bracket[1].f) {
        std::swap(low, high);
    }
    while (!done && iter < opt.max_line_search) {
        if (std::abs(bracket[1].t - bracket[0].t) * d_norm < opt.change_tolerance) {
            break;
        }
        double t_new = cubic_interpolate(bracket[0].t, bracket[0].f, bracket[0].gtd, bracket[1].t, bracket[1].f,
                                         bracket[1].gtd);
        const double b_max = std::max(bracket[0].t, bracket[1].t);
        const double b_min = std::min(bracket[0].t, bracket[1].t);
        const double eps = 0.1 * (b_max - b_min);
        if (std::min(b_max - t_new, t_new - b_min) < eps) {
            if (insufficient || t_new >= b_max || t_new <= b_min) {
                t_new = std::abs(t_new - b_max) < std::abs(t_new - b_min) ? b_max - eps : b_min + eps;
                insufficient = false;
            } else {
                insufficient = true;
            }
        } else {
            insufficient = false;
        }
        Probe p = evaluate(t_new);
        ++iter;
        if (!finite(p)) {
            return {bracket[low], evals, true};
        }
        if (p.f > f + opt.c1 * p.t * gtd || p.f >= bracket[low].f) {
            bracket[high] = std::move(p);
        } else {
            if (std::abs(p.gtd) <= -opt.c2 * gtd) {
                done = true;
            } else if (p.gtd * (bracket[high].t - bracket[low].t) >= 0.0) {
                bracket[high] = bracket[low];
            }
            bracket[low] = std::move(p);
        }
        if (bracket[0].f <= bracket[1].f) {
            low = 0;
            high = 1;
        } else {
            low = 1;
            high = 0;
        }
    }
    return {std::move(bracket[bracket.size() == 1 ? 0 : low]), evals, false};
}

} // namespace detail

inline LbfgsResult lbfgs_minimize(const Objective& fn, Vector x0, const LbfgsOptions& opt = {},
                                  const IterationCallback& callback = {}) {
    LbfgsResult res;
    res.x = std::move(x0);
    const std::size_t n = res.x.size();
    Vector g(n);
    res.value = fn(res.x, g);
    res.evaluations = 1;
    if (!std::isfinite(res.value) || !linalg::all_finite(g)) {
        throw NumericalError("lbfgs: objective is not finite at the starting point");
    }
    if (linalg::max_abs(g) <= opt.grad_tolerance) {
        res.reason = StopReason::gradient_tolerance;
        return res;
    }

    std::deque<Vector> s_hist;
    std::deque<Vector> y_hist;
    std::deque<double> rho;
    double h_diag = 1.0;
    Vector d(n);
    Vector prev_g;
    double t = 0.0;
    std::vector<double> alpha(opt.history);

    for (std::size_t iter = 1;; ++iter) {
        if (iter > opt.max_iterations) {
            res.reason = StopReason::max_iterations;
            break;
        }
        if (iter == 1) {
            for (std::size_t i = 0; i < n; ++i) {
                d[i] = -g[i];
            }
        } else {
            Vector y(n);
            Vector s(n);
            for (std::size_t i = 0; i < n; ++i) {
                y[i] = g[i] - prev_g[i];
                s[i] = t * d[i];
            }
            const double ys = linalg::dot(y, s);
            if (ys > 1e-10) {
                if (s_hist.size() == opt.history) {
                    s_hist.pop_front();
                    y_hist.pop_front();
                    rho.pop_front();
                }
                h_diag = ys / linalg::dot(y, y);
                s_hist.push_back(std::move(s));
                y_hist.push_back(std::move(y));
                rho.push_back(1.0 / ys);
            }
            // two-loop recursion
            for (std::size_t i = 0; i < n; ++i) {
                d[i] = -g[i];
            }
            for (std::size_t k = s_hist.size(); k-- > 0;) {
                alpha[k] = linalg::dot(s_hist[k], d) * rho[k];
                linalg::axpy(-alpha[k], y_hist[k], d);
            }
            for (double& v : d) {
                v *= h_diag;
            }
            for (std::size_t k = 0; k < s_hist.size(); ++k) {
                const double beta = linalg::dot(y_hist[k], d) * rho[k];
                linalg::axpy(alpha[k] - beta, s_hist[k], d);
            }
        }
        prev_g = g;
        double g_l1 = 0.0;
        for (double v : g) {
            g_l1 += std::abs(v);
        }
        t = iter == 1 ? std::min(1.0, 1.0 / g_l1) * opt.learning_rate : opt.learning_rate;
        const double gtd = linalg::dot(g, d);
        if (!(gtd < 0.0) || gtd > -opt.change_tolerance * opt.change_tolerance) {
            res.reason = StopReason::line_search_failure;
            break;
        }
        auto ls = detail::strong_wolfe(fn, res.x, t, d, res.value, g, gtd, opt);
        res.evaluations += ls.evaluations;
        const bool moved = ls.best.t > 0.0 && ls.best.f <= res.value;
        if (moved) {
            t = ls.best.t;
            linalg::axpy(t, d, res.x);
            res.value = ls.best.f;
            g = std::move(ls.best.g);
            res.log.push_back({iter, res.value, linalg::max_abs(g), t, ls.evaluations});
            if (ls.non_finite) {
                res.reason = StopReason::non_finite;
                break;
            }
            if (linalg::max_abs(g) <= opt.grad_tolerance) {
                res.reason = StopReason::gradient_tolerance;
                break;
            }
            if (callback && callback(iter, res.x, res.value)) {
                res.reason = StopReason::callback;
                break;
            }
            if (linalg::max_abs(d) * t <= opt.change_tolerance) {
                res.reason = StopReason::line_search_failure;
                break;
            }
        } else {
            res.reason = ls.non_finite ? StopReason::non_finite : StopReason::line_search_failure;
            break;
        }
    }
    return res;
}

} // namespace rbrom::net
