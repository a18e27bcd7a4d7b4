#pragma once

// Config-driven experiment stages. Each stage reads and writes artifacts in
// the output directory so it can be rerun on its own.

#include "errors.hpp"
#include "fom.hpp"
#include "parallel.hpp"
#include "pod.hpp"
#include "report.hpp"
#include "resnet.hpp"
#include "rom.hpp"
#include "sampling.hpp"
#include "train.hpp"

#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace rbrom::pipeline {

using nlohmann::json;

struct SamplingPlan {
    enum class Kind { grid, lhs };
    Kind kind = Kind::grid;
    rom::Box box;
    std::vector<rom::AxisTransform> transforms;
    std::vector<std::size_t> counts; ///< grid only
    std::size_t n = 0;               ///< LHS only
    std::uint64_t seed = 0;          ///< LHS only

    [[nodiscard]] std::vector<Vector> points() const {
        return kind == Kind::grid ? rom::grid_sample(box, counts, transforms)
                                  : rom::lhs_sample(box, n, seed, transforms);
    }
    [[nodiscard]] rom::Normalization normalization() const { return {box, transforms}; }
};

struct ExperimentConfig {
    fom::FomProblem setup; ///< mesh and time settings; mu unused
    SamplingPlan training;
    SamplingPlan test;
    double eps_t = 1e-4;
    double eps_mu = 1e-4;
    std::vector<std::vector<std::size_t>> hidden;
    std::size_t contraction = 0;
    net::Activation activation = net::Activation::elu;
    net::TrainConfig train;
    std::string output = "out";

    [[nodiscard]] fom::FomProblem problem(const Vector& mu) const {
        fom::FomProblem p = setup;
        p.mu = mu;
        return p;
    }
    [[nodiscard]] std::size_t p() const { return fom::parameter_dimension(setup.id); }
    [[nodiscard]] std::size_t network_steps() const { return setup.steps / setup.save_every; }
    [[nodiscard]] net::ResNetSpec spec(std::size_t n_rb) const {
        return net::make_spec(n_rb, p(), hidden, contraction, activation);
    }
    [[nodiscard]] std::filesystem::path path(const std::string& name) const {
        return std::filesystem::path(output) / name;
    }
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

inline void allow_keys(const json& obj, std::initializer_list<std::string_view> keys, const std::string& where) {
    if (!obj.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    const std::set<std::string_view> allowed(keys);
    for (const auto& [k, v] : obj.items()) {
        if (!allowed.contains(k)) {
            throw ConfigError("unknown key '" + k + "' in " + where);
        }
    }
}

template <class T>
T get(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) {
        throw ConfigError("missing key '" + key + "' in " + where);
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("key '" + key + "' in " + where + " has the wrong type");
    }
}

template <class T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& where) {
    return obj.contains(key) ? get<T>(obj, key, where) : fallback;
}

inline SamplingPlan parse_plan(const json& j, const std::string& where, std::size_t p) {
    allow_keys(j, {"kind", "lo", "hi", "transforms", "counts", "n", "seed"}, where);
    SamplingPlan plan;
    const auto kind = get<std::string>(j, "kind", where);
    if (kind == "grid") {
        plan.kind = SamplingPlan::Kind::grid;
        plan.counts = get<std::vector<std::size_t>>(j, "counts", where);
        if (j.contains("n") || j.contains("seed")) {
            throw ConfigError(where + ": 'n' and 'seed' apply to lhs plans only");
        }
    } else if (kind == "lhs") {
        plan.kind = SamplingPlan::Kind::lhs;
        plan.n = get<std::size_t>(j, "n", where);
        plan.seed = get<std::uint64_t>(j, "seed", where);
        if (j.contains("counts")) {
            throw ConfigError(where + ": 'counts' applies to grid plans only");
        }
        if (plan.n == 0) {
            throw ConfigError(where + ": n must be positive");
        }
    } else {
        throw ConfigError(where + ": kind must be 'grid' or 'lhs', got '" + kind + "'");
    }
    plan.box.lo = get<Vector>(j, "lo", where);
    plan.box.hi = get<Vector>(j, "hi", where);
    for (const auto& t : get_or<std::vector<std::string>>(j, "transforms", {}, where)) {
        const auto parsed = rom::parse_transform(t);
        if (!parsed) {
            throw ConfigError(where + ": unknown transform '" + t + "'");
        }
        plan.transforms.push_back(*parsed);
    }
    if (plan.transforms.empty()) {
        plan.transforms.assign(p, rom::AxisTransform::identity);
    }
    if (plan.box.lo.size() != p || plan.box.hi.size() != p || plan.transforms.size() != p ||
        (plan.kind == SamplingPlan::Kind::grid && plan.counts.size() != p)) {
        throw ConfigError(where + ": bounds, transforms and counts need one entry per parameter (P = " +
                          std::to_string(p) + ")");
    }
    for (auto c : plan.counts) {
        if (c == 0) {
            throw ConfigError(where + ": grid counts must be positive");
        }
    }
    try {
        (void)plan.points();
    } catch (const Error& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return plan;
}

} // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
    using detail::get;
    using detail::get_or;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    detail::allow_keys(doc, {"problem", "mesh", "time", "training_set", "test_set", "pod", "network", "training", "output"},
                       "config");
    ExperimentConfig cfg;
    const auto id = fom::parse_problem(get<std::string>(doc, "problem", "config"));
    if (!id) {
        throw ConfigError("unknown problem '" + doc.at("problem").get<std::string>() + "'");
    }
    cfg.setup = fom::preset_problem(*id, Vector(fom::parameter_dimension(*id), 0.0));

    if (doc.contains("mesh")) {
        const auto& m = doc.at("mesh");
        detail::allow_keys(m, {"resolution"}, "mesh");
        cfg.setup.resolution = get_or<std::size_t>(m, "resolution", cfg.setup.resolution, "mesh");
    }
    if (doc.contains("time")) {
        const auto& t = doc.at("time");
        detail::allow_keys(t, {"integrator", "dt", "steps", "save_every"}, "time");
        if (t.contains("integrator")) {
            const auto integ = fom::parse_integrator(get<std::string>(t, "integrator", "time"));
            if (!integ) {
                throw ConfigError("unknown integrator '" + t.at("integrator").get<std::string>() + "'");
            }
            cfg.setup.integrator = *integ;
        }
        cfg.setup.dt = get_or<double>(t, "dt", cfg.setup.dt, "time");
        cfg.setup.steps = get_or<std::size_t>(t, "steps", cfg.setup.steps, "time");
        cfg.setup.save_every = get_or<std::size_t>(t, "save_every", cfg.setup.save_every, "time");
    }
    try {
        cfg.setup.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("time/mesh settings: ") + e.what());
    }
    if (cfg.setup.steps % cfg.setup.save_every != 0) {
        throw ConfigError("steps must be a multiple of save_every");
    }

    cfg.training = detail::parse_plan(get<json>(doc, "training_set", "config"), "training_set", cfg.p());
    cfg.test = detail::parse_plan(get<json>(doc, "test_set", "config"), "test_set", cfg.p());
    for (const auto* plan : {&cfg.training, &cfg.test}) {
        for (const auto& mu : plan->points()) {
            try {
                fom::check_parameter(cfg.setup.id, mu);
            } catch (const Error& e) {
                throw ConfigError(std::string(plan == &cfg.training ? "training_set" : "test_set") + ": " + e.what());
            }
        }
    }

    if (doc.contains("pod")) {
        const auto& p = doc.at("pod");
        detail::allow_keys(p, {"eps_t", "eps_mu"}, "pod");
        cfg.eps_t = get_or<double>(p, "eps_t", cfg.eps_t, "pod");
        cfg.eps_mu = get_or<double>(p, "eps_mu", cfg.eps_mu, "pod");
    }
    if (!(cfg.eps_t > 0.0 && cfg.eps_t < 1.0 && cfg.eps_mu > 0.0 && cfg.eps_mu < 1.0)) {
        throw ConfigError("POD tolerances must lie in (0, 1)");
    }

    const json n = get<json>(doc, "network", "config");
    detail::allow_keys(n, {"hidden", "contraction", "activation"}, "network");
    cfg.hidden = get<std::vector<std::vector<std::size_t>>>(n, "hidden", "network");
    cfg.contraction = get_or<std::size_t>(n, "contraction", 0, "network");
    if (n.contains("activation")) {
        const auto act = net::parse_activation(get<std::string>(n, "activation", "network"));
        if (!act) {
            throw ConfigError("unknown activation '" + n.at("activation").get<std::string>() + "'");
        }
        cfg.activation = *act;
    }
    try {
        (void)cfg.spec(1);
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("network: ") + e.what());
    }

    if (doc.contains("training")) {
        const auto& t = doc.at("training");
        detail::allow_keys(t, {"horizon", "max_epochs", "iterations_per_epoch", "restarts", "history", "seed",
                               "grad_tolerance", "patience", "validate_every", "coefficient_scaling"},
                           "training");
        auto& tc = cfg.train;
        tc.horizon = get_or<std::size_t>(t, "horizon", tc.horizon, "training");
        tc.max_epochs = get_or<std::size_t>(t, "max_epochs", tc.max_epochs, "training");
        tc.iterations_per_epoch = get_or<std::size_t>(t, "iterations_per_epoch", tc.iterations_per_epoch, "training");
        tc.restarts = get_or<std::size_t>(t, "restarts", tc.restarts, "training");
        tc.history = get_or<std::size_t>(t, "history", tc.history, "training");
        tc.seed = get_or<std::uint64_t>(t, "seed", tc.seed, "training");
        tc.grad_tolerance = get_or<double>(t, "grad_tolerance", tc.grad_tolerance, "training");
        tc.patience = get_or<std::size_t>(t, "patience", tc.patience, "training");
        tc.validate_every = get_or<std::size_t>(t, "validate_every", tc.validate_every, "training");
        const auto scaling = get_or<std::string>(t, "coefficient_scaling", std::string(net::to_string(tc.scaling)), "training");
        const auto parsed = net::parse_scaling(scaling);
        if (!parsed) {
            throw ConfigError("training.coefficient_scaling must be none or max_abs, got '" + scaling + "'");
        }
        tc.scaling = *parsed;
        if (tc.validate_every == 0) {
            throw ConfigError("training.validate_every must be positive");
        }
    }
    cfg.train.validate(cfg.network_steps());
    (void)net::checked_iterations(cfg.train);
    cfg.output = get_or<std::string>(doc, "output", cfg.output, "config");
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    try {
        return parse_config(io::read_file(path));
    } catch (const ArchiveError& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Stages

inline constexpr const char* snapshot_file = "snapshots.rbsnap";
inline constexpr const char* basis_file = "basis.rbbas";
inline constexpr const char* dataset_file = "dataset.rbcoef";
inline constexpr const char* model_file = "model.json";

struct RunOptions {
    std::size_t threads = 1;
    bool svg = false;
    std::ostream* log = nullptr;
};

namespace detail {

inline void ensure_output(const ExperimentConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output, ec);
    if (ec) {
        throw ArchiveError("cannot create output directory " + cfg.output + ": " + ec.message());
    }
}

inline std::ostream* sink(const RunOptions& opt) { return opt.log; }

} // namespace detail

inline fom::SnapshotSet cmd_fom(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
    detail::ensure_output(cfg);
    std::vector<fom::FomProblem> problems;
    for (const auto& mu : cfg.training.points()) {
        problems.push_back(cfg.problem(mu));
    }
    std::vector<double> seconds;
    auto snaps = fom::generate_snapshots(problems, opt.threads, &seconds);
    fom::write_snapshots(cfg.path(snapshot_file).string(), snaps);
    if (auto* log = detail::sink(opt)) {
        double total = 0.0;
        for (std::size_t i = 0; i < seconds.size(); ++i) {
            *log << "param " << i << " (";
            for (std::size_t d = 0; d < cfg.p(); ++d) {
                *log << (d ? ", " : "") << report::number(snaps.mu(i)[d]);
            }
            *log << ") " << report::number(seconds[i]) << " s\n";
            total += seconds[i];
        }
        *log << "snapshots: " << snaps.n_params << " parameters x " << snaps.n_saved << " states x " << snaps.n_h
             << " DOFs, " << report::number(total) << " s\n";
    }
    return snaps;
}

struct PodArtifacts {
    pod::PodBasis basis;
    pod::CoefficientDataset dataset;
};

inline void check_snapshots(const ExperimentConfig& cfg, const fom::SnapshotSet& snaps,
                            const fom::Discretization& disc) {
    if (snaps.n_h != disc.free_count() || snaps.p != cfg.p() || snaps.n_saved != cfg.setup.saved_count()) {
        throw CompatibilityError("snapshot archive (N_h = " + std::to_string(snaps.n_h) + ", P = " +
                                 std::to_string(snaps.p) + ", states = " + std::to_string(snaps.n_saved) +
                                 ") does not match config (N_h = " + std::to_string(disc.free_count()) + ", P = " +
                                 std::to_string(cfg.p()) + ", states = " + std::to_string(cfg.setup.saved_count()) +
                                 ")");
    }
}

inline PodArtifacts cmd_pod(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
    detail::ensure_output(cfg);
    const auto snaps = fom::read_snapshots(cfg.path(snapshot_file).string());
    const auto disc = fom::Discretization::for_problem(cfg.setup.id, cfg.setup.resolution);
    check_snapshots(cfg, snaps, disc);
    PodArtifacts out;
    out.basis = pod::two_stage_pod(snaps, disc.mass(), cfg.eps_t, cfg.eps_mu, opt.threads);
    out.dataset = pod::build_targets(out.basis, snaps, cfg.training.normalization());
    pod::write_basis(cfg.path(basis_file).string(), out.basis);
    pod::write_dataset(cfg.path(dataset_file).string(), out.dataset);
    if (auto* log = detail::sink(opt)) {
        *log << "N_rb = " << out.basis.n_rb() << "\nretained energy = " << report::number(out.basis.retained_energy)
             << "\n";
    }
    return out;
}

inline net::TrainedModel cmd_train(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
    detail::ensure_output(cfg);
    const auto data = pod::read_dataset(cfg.path(dataset_file).string());
    if (data.p != cfg.p() || data.n_saved != cfg.setup.saved_count()) {
        throw CompatibilityError("dataset (P = " + std::to_string(data.p) + ", states = " +
                                 std::to_string(data.n_saved) + ") does not match config (P = " +
                                 std::to_string(cfg.p()) + ", states = " + std::to_string(cfg.setup.saved_count()) +
                                 ")");
    }
    net::TrainConfig tc = cfg.train;
    tc.threads = opt.threads;
    const auto model = net::train(data, cfg.spec(data.n_rb), tc);
    net::write_model(cfg.path(model_file).string(), model);
    if (auto* log = detail::sink(opt)) {
        for (const auto& r : model.restarts) {
            *log << "restart " << r.restart << " seed " << r.seed << ": loss " << report::number(r.final_loss)
                 << ", C_hat " << report::number(r.c_hat) << ", " << r.iterations << " iterations (" << r.stop_reason
                 << ")" << (r.diverged ? " diverged" : "") << "\n";
        }
        *log << "chosen restart " << model.chosen_restart << " with C_hat " << report::number(model.c_hat) << "\n";
    }
    return model;
}

// ---------------------------------------------------------------------------
// Evaluation

using ErrorTable = std::vector<std::vector<std::optional<double>>>;

struct EvalReport {
    Vector times;
    std::vector<Vector> mu;
    ErrorTable full_error;       ///< vs full order, per parameter and saved time
    ErrorTable projection_error; ///< vs the exact projection
    std::vector<linalg::DenseMatrix> coefficient_error;
    std::vector<double> online_seconds;
    std::vector<std::size_t> online_widest; ///< largest buffer touched by the online loop
    std::size_t worst = 0;                  ///< parameter with the largest mean full-order error

    [[nodiscard]] double mean_at(const ErrorTable& t, std::size_t k) const { return rom::time_statistics(t).mean.at(k); }
};

/// Reference solves for the test set: full-order states and their projections.
struct TestReference {
    std::vector<Vector> mu;
    std::vector<std::vector<Vector>> states;
    std::vector<std::vector<Vector>> coeffs;
    Vector u0;
};

inline TestReference reference_solutions(const ExperimentConfig& cfg, const pod::PodBasis& basis,
                                         const fom::Discretization& disc, std::size_t threads) {
    TestReference ref;
    ref.mu = cfg.test.points();
    ref.u0 = fom::initial_state(cfg.setup.id, disc);
    ref.states.resize(ref.mu.size());
    ref.coeffs.resize(ref.mu.size());
    parallel_for(ref.mu.size(), threads, [&](std::size_t i) {
        auto traj = fom::run_fom(cfg.problem(ref.mu[i]), disc);
        for (const auto& u : traj.states) {
            Vector d = u;
            linalg::axpy(-1.0, ref.u0, d);
            ref.coeffs[i].push_back(pod::project(basis, d));
        }
        ref.states[i] = std::move(traj.states);
    });
    return ref;
}

/// Fills the error tables of one method given its coefficient trajectories.
inline EvalReport score(const ExperimentConfig& cfg, const pod::PodBasis& basis, const fom::Discretization& disc,
                        const TestReference& ref, const std::vector<std::vector<Vector>>& approx) {
    const auto mass = disc.mass();
    EvalReport rep;
    rep.mu = ref.mu;
    for (std::size_t k = 0; k < cfg.setup.saved_count(); ++k) {
        rep.times.push_back(static_cast<double>(k * cfg.setup.save_every) * cfg.setup.dt);
    }
    rep.full_error.resize(ref.mu.size());
    rep.projection_error.resize(ref.mu.size());
    rep.coefficient_error.resize(ref.mu.size());
    double worst_mean = -1.0;
    for (std::size_t i = 0; i < ref.mu.size(); ++i) {
        std::vector<Vector> fields;
        for (const auto& c : approx[i]) {
            fields.push_back(pod::reconstruct(basis, ref.u0, c));
        }
        rep.full_error[i] = rom::relative_l2_error(ref.states[i], fields, mass);
        rep.projection_error[i].resize(approx[i].size());
        for (std::size_t k = 0; k < approx[i].size(); ++k) {
            const double denom = fem::l2_norm(mass, pod::reconstruct(basis, ref.u0, ref.coeffs[i][k]));
            if (denom > 0.0) {
                Vector diff = approx[i][k];
                linalg::axpy(-1.0, ref.coeffs[i][k], diff);
                rep.projection_error[i][k] = linalg::norm2(diff) / denom;
            }
        }
        rep.coefficient_error[i] = rom::coefficient_errors(ref.coeffs[i], approx[i]);
        const double m = rom::summarize(rep.full_error[i]).mean;
        if (m > worst_mean) {
            worst_mean = m;
            rep.worst = i;
        }
    }
    return rep;
}

inline void write_report(const ExperimentConfig& cfg, const EvalReport& rep, const std::string& prefix, bool svg,
                         const std::string& label) {
    report::time_table(rep.times, rep.full_error).save(cfg.path(prefix + "_l2_error.csv").string());
    report::time_table(rep.times, rep.projection_error).save(cfg.path(prefix + "_projection_error.csv").string());

    const auto stats = rom::time_statistics(rep.full_error);
    const auto pstats = rom::time_statistics(rep.projection_error);
    report::CsvWriter mean({"time", "mean", "std", "count", "projection_mean", "projection_std"});
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
        mean.row({report::number(rep.times[k]), report::number(stats.mean[k]), report::number(stats.stddev[k]),
                  std::to_string(stats.count[k]), report::number(pstats.mean[k]), report::number(pstats.stddev[k])});
    }
    mean.save(cfg.path(prefix + "_mean_std.csv").string());

    const bool with_pe = cfg.setup.id == fom::ProblemId::advdiff_1d;
    std::vector<std::string> header{"parameter"};
    for (std::size_t d = 0; d < cfg.p(); ++d) {
        header.push_back("mu_" + std::to_string(d + 1));
    }
    for (const char* h : {"mean_error", "max_error", "final_projection_error", "online_seconds"}) {
        header.emplace_back(h);
    }
    if (with_pe) {
        header.emplace_back("peclet");
    }
    report::CsvWriter summary(header);
    for (std::size_t i = 0; i < rep.mu.size(); ++i) {
        const auto s = rom::summarize(rep.full_error[i]);
        std::vector<std::string> row{std::to_string(i)};
        for (double v : rep.mu[i]) {
            row.push_back(report::number(v));
        }
        row.push_back(report::number(s.mean));
        row.push_back(report::number(s.max));
        row.push_back(report::number(rep.projection_error[i].back()));
        row.push_back(report::number(rep.online_seconds.empty() ? std::nan("") : rep.online_seconds[i]));
        if (with_pe) {
            row.push_back(report::number(rom::peclet(rep.mu[i])));
        }
        summary.row(row);
    }
    summary.save(cfg.path(prefix + "_summary.csv").string());

    const std::size_t w = rep.worst;
    const auto& ce = rep.coefficient_error[w];
    std::vector<std::string> wh{"time", "l2_error"};
    for (std::size_t j = 0; j < ce.cols(); ++j) {
        wh.push_back("coeff_" + std::to_string(j + 1));
    }
    report::CsvWriter worst(wh);
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
        std::vector<std::string> row{report::number(rep.times[k]), report::number(rep.full_error[w][k])};
        for (std::size_t j = 0; j < ce.cols(); ++j) {
            row.push_back(report::number(ce(k, j)));
        }
        worst.row(row);
    }
    worst.save(cfg.path(prefix + "_worst.csv").string());

    if (svg) {
        io::write_file(cfg.path(prefix + "_mean_std.svg").string(),
                       report::svg_plot(label + ": relative L2 error vs full order", rep.times,
                                        {{label + " mean", stats.mean, stats.stddev, "#c0392b"}}));
    }
}

inline void log_report(std::ostream* log, const EvalReport& rep, const std::string& label) {
    if (!log) {
        return;
    }
    const auto stats = rom::time_statistics(rep.full_error);
    const auto pstats = rom::time_statistics(rep.projection_error);
    *log << label << ": " << rep.mu.size() << " test parameters\n"
         << "  final-time mean error vs full order  " << report::number(stats.mean.back()) << "\n"
         << "  final-time mean error vs projection  " << report::number(pstats.mean.back()) << "\n"
         << "  worst parameter " << rep.worst << ", mean error " << report::number(rom::summarize(rep.full_error[rep.worst]).mean)
         << "\n";
}

inline void check_basis(const ExperimentConfig& cfg, const pod::PodBasis& basis, const fom::Discretization& disc) {
    if (basis.n_h() != disc.free_count()) {
        throw CompatibilityError("basis N_h = " + std::to_string(basis.n_h()) + " but config mesh has " +
                                 std::to_string(disc.free_count()) + " DOFs");
    }
    (void)cfg;
}

inline EvalReport cmd_eval(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
    detail::ensure_output(cfg);
    const auto model = net::read_model(cfg.path(model_file).string());
    auto basis = pod::read_basis(cfg.path(basis_file).string());
    const auto disc = fom::Discretization::for_problem(cfg.setup.id, cfg.setup.resolution);
    check_basis(cfg, basis, disc);
    basis.attach_mass(disc.mass());
    if (model.spec.n_rb != basis.n_rb() || model.spec.p != cfg.p()) {
        throw CompatibilityError("model is N_rb = " + std::to_string(model.spec.n_rb) + ", P = " +
                                 std::to_string(model.spec.p) + " but basis/config give N_rb = " +
                                 std::to_string(basis.n_rb()) + ", P = " + std::to_string(cfg.p()));
    }
    const auto ref = reference_solutions(cfg, basis, disc, opt.threads);
    const net::ResNet network(model.spec);
    std::vector<std::vector<Vector>> approx(ref.mu.size());
    std::vector<double> seconds(ref.mu.size());
    std::vector<std::size_t> widest(ref.mu.size());
    for (std::size_t i = 0; i < ref.mu.size(); ++i) {
        auto r = rom::rollout(model, network, ref.mu[i], cfg.network_steps());
        approx[i] = std::move(r.coeffs);
        seconds[i] = r.seconds;
        widest[i] = r.widest_buffer;
    }
    auto rep = score(cfg, basis, disc, ref, approx);
    rep.online_seconds = std::move(seconds);
    rep.online_widest = std::move(widest);
    write_report(cfg, rep, "eval", opt.svg, "network");
    log_report(opt.log, rep, "network");
    return rep;
}

inline EvalReport cmd_baseline(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
    detail::ensure_output(cfg);
    auto basis = pod::read_basis(cfg.path(basis_file).string());
    const auto disc = fom::Discretization::for_problem(cfg.setup.id, cfg.setup.resolution);
    check_basis(cfg, basis, disc);
    basis.attach_mass(disc.mass());
    const auto ref = reference_solutions(cfg, basis, disc, opt.threads);
    std::vector<std::vector<Vector>> approx(ref.mu.size());
    std::vector<double> seconds(ref.mu.size());
    const bool affine = fom::is_affine(cfg.setup.id);
    std::optional<rom::GalerkinAffine> galerkin;
    if (affine) {
        galerkin.emplace(basis, fom::affine_decomposition(cfg.setup.id, disc), ref.u0);
    }
    for (std::size_t i = 0; i < ref.mu.size(); ++i) {
        const auto problem = cfg.problem(ref.mu[i]);
        const auto start = std::chrono::steady_clock::now();
        approx[i] = affine ? galerkin->solve(problem) : rom::galerkin_reassembled(basis, problem, disc);
        seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    auto rep = score(cfg, basis, disc, ref, approx);
    rep.online_seconds = std::move(seconds);
    const std::string label = affine ? "galerkin-affine" : "galerkin-reassembled";
    write_report(cfg, rep, "baseline", opt.svg, label);
    log_report(opt.log, rep, label + (affine ? "" : " (cost grows with N_h)"));
    return rep;
}

} // namespace rbrom::pipeline
