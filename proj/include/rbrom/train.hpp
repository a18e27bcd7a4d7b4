#pragma once

// Full-batch L-BFGS training with random restarts, selection by rollout
// error on the training parameters, and the JSON model archive.

#include "errors.hpp"
#include "lbfgs.hpp"
#include "pod.hpp"
#include "resnet.hpp"
#include "sampling.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace rbrom::net {

/// How coefficients are scaled before they reach the network.
enum class CoefficientScaling {
    none,    ///< raw projection coefficients
    max_abs, ///< each coefficient divided by its largest magnitude in the training data
};

inline std::string_view to_string(CoefficientScaling s) { return s == CoefficientScaling::none ? "none" : "max_abs"; }

inline std::optional<CoefficientScaling> parse_scaling(std::string_view s) {
    if (s == "none") {
        return CoefficientScaling::none;
    }
    if (s == "max_abs") {
        return CoefficientScaling::max_abs;
    }
    return std::nullopt;
}

struct TrainConfig {
    std::size_t horizon = 2; ///< multi-step length m
    std::size_t max_epochs = 1250;
    std::size_t iterations_per_epoch = 20; ///< L-BFGS iterations per optimizer step
    std::size_t restarts = 5;
    std::size_t history = 10;
    std::uint64_t seed = 0;
    double grad_tolerance = 1e-10;
    std::size_t patience = 0;        ///< early stopping on Ĉ, 0 disables
    std::size_t validate_every = 50; ///< iterations between early-stopping checks
    std::size_t threads = 1;
    CoefficientScaling scaling = CoefficientScaling::none;

    void validate(std::size_t steps) const {
        if (horizon == 0) {
            throw ConfigError("multi-step horizon m must be at least 1");
        }
        if (horizon * 4 > steps) {
            throw ConfigError("multi-step horizon m = " + std::to_string(horizon) + " exceeds N/4 for N = " +
                              std::to_string(steps) + " network steps");
        }
        if (restarts == 0 || max_epochs == 0 || iterations_per_epoch == 0 || history == 0) {
            throw ConfigError("restarts, max_epochs, iterations_per_epoch and history must be positive");
        }
    }
};

/// Total L-BFGS iteration budget of one restart.
inline std::size_t checked_iterations(const TrainConfig& cfg) {
    if (cfg.iterations_per_epoch != 0 && cfg.max_epochs > std::numeric_limits<std::size_t>::max() / cfg.iterations_per_epoch) {
        throw ConfigError("max_epochs * iterations_per_epoch overflows");
    }
    return cfg.max_epochs * cfg.iterations_per_epoch;
}

struct RestartLog {
    std::size_t restart = 0;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    double c_hat = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    std::string stop_reason;
    bool diverged = false;
};

struct TrainedModel {
    ResNetSpec spec;
    rom::Normalization normalization;
    Vector coeff_scale; ///< the network steps c ./ coeff_scale
    Vector params;
    std::uint64_t seed = 0;
    std::size_t chosen_restart = 0;
    double final_loss = 0.0;
    double c_hat = 0.0;
    std::vector<RestartLog> restarts;

    friend bool operator==(const TrainedModel& a, const TrainedModel& b) {
        return a.spec == b.spec && a.normalization == b.normalization && a.coeff_scale == b.coeff_scale &&
               a.params == b.params && a.seed == b.seed &&
               a.chosen_restart == b.chosen_restart && a.final_loss == b.final_loss && a.c_hat == b.c_hat;
    }
};

/// Ĉ: mean over parameters of ‖v_N̂ − c(t_N̂)‖² for rollouts started at c(t₀).
inline double rollout_validation(const ResNet& net, std::span<const double> params, const TrainingSet& set) {
    double total = 0.0;
    for (std::size_t i = 0; i < set.n_params(); ++i) {
        const auto traj = rollout_coefficients(net, params, set.coeff(i, 0), set.mu(i), set.steps());
        const auto target = set.coeff(i, set.steps());
        double e = 0.0;
        for (std::size_t r = 0; r < set.n_rb(); ++r) {
            e += (traj.back()[r] - target[r]) * (traj.back()[r] - target[r]);
        }
        total += e;
    }
    return total / static_cast<double>(set.n_params());
}

struct RestartOutcome {
    Vector params;
    RestartLog log;
};

inline RestartOutcome train_once(const ResNet& net, const TrainingSet& set, const TrainConfig& cfg,
                                 std::size_t restart) {
    const auto batch = all_samples(set);
    RestartOutcome out;
    out.log.restart = restart;
    out.log.seed = cfg.seed + restart;
    const Objective objective = [&](std::span<const double> x, std::span<double> g) {
        try {
            return loss_and_gradient(net, x, set, batch, cfg.horizon, g, cfg.threads);
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    LbfgsOptions opt;
    opt.history = cfg.history;
    opt.max_iterations = checked_iterations(cfg);
    opt.grad_tolerance = cfg.grad_tolerance;

    Vector best_params;
    double best_c = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    IterationCallback callback;
    if (cfg.patience > 0) {
        callback = [&](std::size_t iter, std::span<const double> x, double) {
            if (iter % cfg.validate_every != 0) {
                return false;
            }
            double c = std::numeric_limits<double>::infinity();
            try {
                c = rollout_validation(net, x, set);
            } catch (const NumericalError&) {
            }
            if (c < best_c) {
                best_c = c;
                best_params.assign(x.begin(), x.end());
                stale = 0;
                return false;
            }
            return ++stale >= cfg.patience;
        };
    }
    LbfgsResult res;
    try {
        res = lbfgs_minimize(objective, glorot_init(net, out.log.seed), opt, callback);
    } catch (const NumericalError&) {
        out.log.diverged = true;
        out.log.stop_reason = "non-finite";
        return out;
    }
    out.params = std::move(res.x);
    out.log.final_loss = res.value;
    out.log.iterations = res.log.size();
    out.log.stop_reason = std::string(to_string(res.reason));
    try {
        out.log.c_hat = rollout_validation(net, out.params, set);
    } catch (const NumericalError&) {
        out.log.c_hat = std::numeric_limits<double>::infinity();
    }
    if (!best_params.empty() && best_c < out.log.c_hat) {
        out.params = std::move(best_params);
        out.log.c_hat = best_c;
        out.log.final_loss = loss_multi(net, out.params, set, batch, cfg.horizon, cfg.threads);
    }
    out.log.diverged = !std::isfinite(out.log.final_loss) || !std::isfinite(out.log.c_hat);
    return out;
}

/// Per-coefficient divisors; modes that are identically zero keep scale 1.
inline Vector coefficient_scale(const pod::CoefficientDataset& data, CoefficientScaling scaling) {
    Vector s(data.n_rb, 1.0);
    if (scaling == CoefficientScaling::none) {
        return s;
    }
    Vector big(data.n_rb, 0.0);
    for (std::size_t n = 0; n < data.coeffs.size(); ++n) {
        big[n % data.n_rb] = std::max(big[n % data.n_rb], std::abs(data.coeffs[n]));
    }
    for (std::size_t r = 0; r < data.n_rb; ++r) {
        if (big[r] > 0.0) {
            s[r] = big[r];
        }
    }
    return s;
}

/// Trains `restarts` independently initialized networks and keeps the one
/// with the smallest rollout validation error Ĉ.
inline TrainedModel train(const pod::CoefficientDataset& data, const ResNetSpec& spec, const TrainConfig& cfg) {
    const Vector scale = coefficient_scale(data, cfg.scaling);
    pod::CoefficientDataset scaled = data;
    for (std::size_t n = 0; n < scaled.coeffs.size(); ++n) {
        scaled.coeffs[n] /= scale[n % data.n_rb];
    }
    const TrainingSet set(scaled);
    if (spec.n_rb != data.n_rb || spec.p != data.p) {
        throw CompatibilityError("network spec is N_rb = " + std::to_string(spec.n_rb) + ", P = " +
                                 std::to_string(spec.p) + " but dataset is N_rb = " + std::to_string(data.n_rb) +
                                 ", P = " + std::to_string(data.p));
    }
    cfg.validate(set.steps());
    const ResNet net(spec);
    TrainedModel model;
    model.spec = spec;
    model.normalization = data.normalization;
    model.coeff_scale = scale;
    model.seed = cfg.seed;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        auto outcome = train_once(net, set, cfg, r);
        if (!outcome.log.diverged && outcome.log.c_hat < best) {
            best = outcome.log.c_hat;
            model.params = std::move(outcome.params);
            model.chosen_restart = r;
            model.final_loss = outcome.log.final_loss;
            model.c_hat = outcome.log.c_hat;
        }
        model.restarts.push_back(std::move(outcome.log));
    }
    if (model.params.empty()) {
        throw TrainingError("all " + std::to_string(cfg.restarts) + " restarts diverged");
    }
    return model;
}

// ---------------------------------------------------------------------------
// Model archive

inline constexpr std::string_view model_format = "RBNET-1";

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline double number_or_inf(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

} // namespace detail

inline std::string serialize(const TrainedModel& m) {
    using nlohmann::json;
    json blocks = json::array();
    for (const auto& b : m.spec.blocks) {
        blocks.push_back({{"in", b.in}, {"out", b.out}, {"hidden", b.hidden}});
    }
    json transforms = json::array();
    for (auto t : m.normalization.transforms) {
        transforms.push_back(std::string(rom::to_string(t)));
    }
    json restarts = json::array();
    for (const auto& r : m.restarts) {
        restarts.push_back({{"restart", r.restart},
                            {"seed", r.seed},
                            {"final_loss", detail::finite_or_null(r.final_loss)},
                            {"c_hat", detail::finite_or_null(r.c_hat)},
                            {"iterations", r.iterations},
                            {"stop_reason", r.stop_reason},
                            {"diverged", r.diverged}});
    }
    json doc = {
        {"format", model_format},
        {"spec",
         {{"n_rb", m.spec.n_rb},
          {"p", m.spec.p},
          {"activation", to_string(m.spec.activation)},
          {"contraction_block", m.spec.contraction_block()},
          {"blocks", blocks}}},
        {"normalization", {{"lo", m.normalization.box.lo}, {"hi", m.normalization.box.hi}, {"transforms", transforms}}},
        {"coefficient_scale", m.coeff_scale},
        {"params", m.params},
        {"training",
         {{"seed", m.seed},
          {"chosen_restart", m.chosen_restart},
          {"final_loss", m.final_loss},
          {"c_hat", m.c_hat},
          {"restarts", restarts}}},
    };
    return doc.dump(1) + "\n";
}

inline TrainedModel deserialize_model(const std::string& text) {
    using nlohmann::json;
    try {
        const json doc = json::parse(text);
        if (doc.at("format").get<std::string>() != model_format) {
            throw ArchiveError("model format '" + doc.at("format").get<std::string>() + "' is not " +
                               std::string(model_format));
        }
        TrainedModel m;
        const auto& spec = doc.at("spec");
        m.spec.n_rb = spec.at("n_rb").get<std::size_t>();
        m.spec.p = spec.at("p").get<std::size_t>();
        const auto act = parse_activation(spec.at("activation").get<std::string>());
        if (!act) {
            throw ArchiveError("model has unknown activation");
        }
        m.spec.activation = *act;
        for (const auto& b : spec.at("blocks")) {
            m.spec.blocks.push_back(
                {b.at("in").get<std::size_t>(), b.at("out").get<std::size_t>(), b.at("hidden").get<std::vector<std::size_t>>()});
        }
        m.spec.validate();
        const auto& norm = doc.at("normalization");
        m.normalization.box.lo = norm.at("lo").get<Vector>();
        m.normalization.box.hi = norm.at("hi").get<Vector>();
        for (const auto& t : norm.at("transforms")) {
            const auto parsed = rom::parse_transform(t.get<std::string>());
            if (!parsed) {
                throw ArchiveError("model has unknown axis transform");
            }
            m.normalization.transforms.push_back(*parsed);
        }
        if (m.normalization.dim() != m.spec.p || m.normalization.transforms.size() != m.spec.p) {
            throw ArchiveError("model normalization does not match parameter dimension");
        }
        m.coeff_scale = doc.at("coefficient_scale").get<Vector>();
        if (m.coeff_scale.size() != m.spec.n_rb) {
            throw ArchiveError("model coefficient scale has " + std::to_string(m.coeff_scale.size()) +
                               " entries, N_rb is " + std::to_string(m.spec.n_rb));
        }
        for (double v : m.coeff_scale) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw ArchiveError("model coefficient scale must be positive and finite");
            }
        }
        m.params = doc.at("params").get<Vector>();
        if (m.params.size() != ResNet(m.spec).param_count()) {
            throw ArchiveError("model parameter array has " + std::to_string(m.params.size()) + " entries, spec needs " +
                               std::to_string(ResNet(m.spec).param_count()));
        }
        const auto& tr = doc.at("training");
        m.seed = tr.at("seed").get<std::uint64_t>();
        m.chosen_restart = tr.at("chosen_restart").get<std::size_t>();
        m.final_loss = tr.at("final_loss").get<double>();
        m.c_hat = tr.at("c_hat").get<double>();
        for (const auto& r : tr.at("restarts")) {
            m.restarts.push_back({r.at("restart").get<std::size_t>(), r.at("seed").get<std::uint64_t>(),
                                  detail::number_or_inf(r.at("final_loss")), detail::number_or_inf(r.at("c_hat")),
                                  r.at("iterations").get<std::size_t>(), r.at("stop_reason").get<std::string>(),
                                  r.at("diverged").get<bool>()});
        }
        return m;
    } catch (const json::exception& e) {
        throw ArchiveError(std::string("malformed model file: ") + e.what());
    } catch (const DimensionError& e) {
        throw ArchiveError(std::string("model spec is inconsistent: ") + e.what());
    }
}

inline void write_model(const std::string& path, const TrainedModel& m) { io::write_file(path, serialize(m)); }

inline TrainedModel read_model(const std::string& path) { return deserialize_model(io::read_file(path)); }

} // namespace rbrom::net
