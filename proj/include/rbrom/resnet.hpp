#pragma once

// Residual time-stepping network: a chain of blocks y = skip(z) + R(z), where
// R is a small fully connected subnet and skip is the identity except in the
// single contraction block, whose skip path keeps only the coefficient slots.
// Losses and exact reverse-mode gradients over unrolled multi-step chains.

#include "errors.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "pod.hpp"
#include "random.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rbrom::net {

enum class Activation { elu, tanh };

inline std::string_view to_string(Activation a) { return a == Activation::elu ? "elu" : "tanh"; }

inline std::optional<Activation> parse_activation(std::string_view s) {
    if (s == "elu") {
        return Activation::elu;
    }
    if (s == "tanh") {
        return Activation::tanh;
    }
    return std::nullopt;
}

/// eˣ − 1 for x ≤ 0 with ~1 ulp accuracy, written without library calls so
/// the activation loops vectorize (the ELU dominates training time).
inline double expm1_nonpositive(double x) {
    constexpr double inv_ln2 = 0x1.71547652b82fep0;
    constexpr double ln2_hi = 0x1.62e42fee00000p-1;
    constexpr double ln2_lo = 0x1.a39ef35793c76p-33;
    constexpr double shifter = 0x1.8p52;
    x = x < -700.0 ? -700.0 : x;
    const double shifted = x * inv_ln2 + shifter; // k sits in the low mantissa bits
    const double kd = shifted - shifter;          // k = round(x / ln2)
    const double r = (x - kd * ln2_hi) - kd * ln2_lo;    // |r| ≤ ln2/2
    // Taylor series of eʳ − 1 through r¹³ (truncation < 1e-17)
    double t = 1.0 / 6227020800.0;
    t = t * r + 1.0 / 479001600.0;
    t = t * r + 1.0 / 39916800.0;
    t = t * r + 1.0 / 3628800.0;
    t = t * r + 1.0 / 362880.0;
    t = t * r + 1.0 / 40320.0;
    t = t * r + 1.0 / 5040.0;
    t = t * r + 1.0 / 720.0;
    t = t * r + 1.0 / 120.0;
    t = t * r + 1.0 / 24.0;
    t = t * r + 1.0 / 6.0;
    t = t * r + 0.5;
    t = t * r * r + r;
    const double scale =
        std::bit_cast<double>((std::bit_cast<std::uint64_t>(shifted) << 52) + (std::uint64_t{1023} << 52));
    // 2ᵏ(eʳ − 1) + (2ᵏ − 1); exact split when k = 0
    return scale * t + (scale - 1.0);
}

inline double activate(Activation a, double x) {
    if (a == Activation::tanh) {
        return std::tanh(x);
    }
    return x >= 0.0 ? x : expm1_nonpositive(x);
}

/// h = σ(a) elementwise; the ELU path is branch-free so it vectorizes.
inline void activate_row(Activation act, const double* a, double* h, std::size_t n) {
    if (act == Activation::tanh) {
        for (std::size_t s = 0; s < n; ++s) {
            h[s] = std::tanh(a[s]);
        }
        return;
    }
    // max(a, 0) + (e^min(a, 0) − 1) equals the ELU for either sign of a
    for (std::size_t s = 0; s < n; ++s) {
        h[s] = std::max(a[s], 0.0) + expm1_nonpositive(std::min(a[s], 0.0));
    }
}

/// Derivative expressed through the pre-activation x and the output h.
inline double activate_derivative(Activation a, double x, double h) {
    if (a == Activation::tanh) {
        return 1.0 - h * h;
    }
    return x >= 0.0 ? 1.0 : h + 1.0;
}

struct BlockSpec {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<std::size_t> hidden;

    friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct ResNetSpec {
    std::size_t n_rb = 0;
    std::size_t p = 0;
    std::vector<BlockSpec> blocks;
    Activation activation = Activation::elu;

    [[nodiscard]] std::size_t input_dim() const noexcept { return n_rb + p; }

    void validate() const {
        if (n_rb == 0 || blocks.empty()) {
            throw DimensionError("network needs at least one block and one coefficient");
        }
        if (blocks.front().in != input_dim()) {
            throw DimensionError("first block input " + std::to_string(blocks.front().in) + " must equal N_rb + P = " +
                                 std::to_string(input_dim()));
        }
        if (blocks.back().out != n_rb) {
            throw DimensionError("last block output " + std::to_string(blocks.back().out) + " must equal N_rb = " +
                                 std::to_string(n_rb));
        }
        std::size_t contractions = 0;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const auto& blk = blocks[b];
            if (b > 0 && blk.in != blocks[b - 1].out) {
                throw DimensionError("block " + std::to_string(b) + " input does not match previous output");
            }
            for (auto w : blk.hidden) {
                if (w == 0) {
                    throw DimensionError("block " + std::to_string(b) + " has a zero-width hidden layer");
                }
            }
            if (blk.in != blk.out) {
                ++contractions;
                if (blk.in != blk.out + p || p == 0) {
                    throw DimensionError("contraction block " + std::to_string(b) + " must drop exactly P slots");
                }
            }
        }
        if (contractions != 1 && p > 0) {
            throw DimensionError("network must contain exactly one contraction block, found " +
                                 std::to_string(contractions));
        }
    }

    [[nodiscard]] std::size_t contraction_block() const {
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            if (blocks[b].in != blocks[b].out) {
                return b;
            }
        }
        return 0;
    }

    friend bool operator==(const ResNetSpec&, const ResNetSpec&) = default;
};

/// Blocks before `contraction` carry (c, μ), the contraction block maps to c,
/// later blocks act on c alone.
inline ResNetSpec make_spec(std::size_t n_rb, std::size_t p, const std::vector<std::vector<std::size_t>>& hidden,
                            std::size_t contraction = 0, Activation activation = Activation::elu) {
    if (contraction >= hidden.size()) {
        throw DimensionError("contraction position beyond the last block");
    }
    ResNetSpec spec{n_rb, p, {}, activation};
    for (std::size_t b = 0; b < hidden.size(); ++b) {
        const std::size_t in = b <= contraction ? n_rb + p : n_rb;
        const std::size_t out = b < contraction ? n_rb + p : n_rb;
        spec.blocks.push_back({in, out, hidden[b]});
    }
    spec.validate();
    return spec;
}

struct LayerLayout {
    std::size_t in;
    std::size_t out;
    std::size_t weights; ///< offset of the row-major out × in matrix
    std::size_t bias;    ///< offset of the bias vector
};

/// Structured view of the parameters, one matrix and bias per layer.
struct ResNetParams {
    std::vector<std::vector<linalg::DenseMatrix>> weights;
    std::vector<std::vector<Vector>> biases;
};

/// Sizes and offsets of a network; evaluation works on a flat parameter vector.
class ResNet {
  public:
    explicit ResNet(ResNetSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        std::size_t offset = 0;
        std::size_t tape = spec_.input_dim();
        for (const auto& blk : spec_.blocks) {
            std::vector<LayerLayout> layers;
            std::size_t prev = blk.in;
            auto widths = blk.hidden;
            widths.push_back(blk.out);
            for (auto w : widths) {
                layers.push_back({prev, w, offset, offset + w * prev});
                offset += w * prev + w;
                prev = w;
            }
            layers_.push_back(std::move(layers));
            // Tape slots: each hidden layer stores its pre-activation followed
            // by its activation; the block output follows. A block's input is
            // the previous block's output (or the network input).
            block_in_.push_back(slots_.empty() ? 0 : slots_.back().back());
            auto& slots = slots_.emplace_back();
            for (auto w : blk.hidden) {
                slots.push_back(tape);
                tape += 2 * w;
            }
            slots.push_back(tape);
            tape += blk.out;
            widest_ = std::max({widest_, blk.in, blk.out});
            for (auto w : blk.hidden) {
                widest_ = std::max(widest_, w);
            }
        }
        param_count_ = offset;
        tape_size_ = tape;
    }

    [[nodiscard]] const ResNetSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] std::size_t param_count() const noexcept { return param_count_; }
    [[nodiscard]] std::size_t tape_size() const noexcept { return tape_size_; }
    [[nodiscard]] std::size_t widest_layer() const noexcept { return widest_; }
    [[nodiscard]] const std::vector<std::vector<LayerLayout>>& layers() const noexcept { return layers_; }
    [[nodiscard]] std::size_t output_offset() const noexcept { return tape_size_ - spec_.n_rb; }

    /// Evaluates the network for a batch stored slot-major: tape value v of
    /// sample s lives at tape[v * stride + s]. Inputs occupy slots [0, N_rb + P);
    /// every intermediate value is recorded and the output fills the last N_rb
    /// slots. Only samples s < count are touched.
    void forward_tape(std::span<const double> params, std::span<double> tape, std::size_t stride = 1,
                      std::size_t count = 1) const {
        for (std::size_t b = 0; b < layers_.size(); ++b) {
            const auto& layers = layers_[b];
            const auto& slots = slots_[b];
            const std::size_t hidden = layers.size() - 1;
            const std::size_t z = block_in_[b];
            for (std::size_t j = 0; j <= hidden; ++j) {
                const auto& L = layers[j];
                const double* w = params.data() + L.weights;
                const double* bias = params.data() + L.bias;
                const std::size_t prev = j == 0 ? z : slots[j - 1] + layers[j - 1].out;
                for (std::size_t r = 0; r < L.out; ++r) {
                    double* a = tape.data() + (slots[j] + r) * stride;
                    for (std::size_t s = 0; s < count; ++s) {
                        a[s] = bias[r];
                    }
                    const double* wr = w + r * L.in;
                    for (std::size_t c = 0; c < L.in; ++c) {
                        const double wc = wr[c];
                        const double* x = tape.data() + (prev + c) * stride;
                        for (std::size_t s = 0; s < count; ++s) {
                            a[s] += wc * x[s];
                        }
                    }
                    if (j < hidden) {
                        double* h = a + L.out * stride;
                        activate_row(spec_.activation, a, h, count);
                    } else {
                        const double* skip = tape.data() + (z + r) * stride;
                        for (std::size_t s = 0; s < count; ++s) {
                            a[s] += skip[s];
                        }
                    }
                    unsigned bad = 0;
                    for (std::size_t s = 0; s < count; ++s) {
                        bad |= static_cast<unsigned>(!(std::abs(a[s]) <= std::numeric_limits<double>::max()));
                    }
                    if (bad != 0) {
                        throw NumericalError("network produced a non-finite value in block " + std::to_string(b) +
                                             ", layer " + std::to_string(j));
                    }
                }
            }
        }
    }

    /// Reverse pass over a recorded tape (same layout). `adjoint` must be
    /// zero except for the output slots, which hold dL/dy. Parameter
    /// gradients are added to `grad`; on return the input slots of `adjoint`
    /// hold dL/d(input).
    void backward_tape(std::span<const double> params, std::span<const double> tape, std::span<double> adjoint,
                       std::span<double> grad, std::size_t stride = 1, std::size_t count = 1) const {
        for (std::size_t b = layers_.size(); b-- > 0;) {
            const auto& layers = layers_[b];
            const auto& slots = slots_[b];
            const std::size_t hidden = layers.size() - 1;
            const std::size_t z = block_in_[b];
            for (std::size_t r = 0; r < layers.back().out; ++r) {
                double* dz = adjoint.data() + (z + r) * stride;
                const double* dy = adjoint.data() + (slots[hidden] + r) * stride;
                for (std::size_t s = 0; s < count; ++s) {
                    dz[s] += dy[s];
                }
            }
            for (std::size_t j = hidden + 1; j-- > 0;) {
                const auto& L = layers[j];
                const std::size_t prev = j == 0 ? z : slots[j - 1] + layers[j - 1].out;
                const double* w = params.data() + L.weights;
                double* gw = grad.data() + L.weights;
                double* gb = grad.data() + L.bias;
                for (std::size_t r = 0; r < L.out; ++r) {
                    double* da = adjoint.data() + (slots[j] + r) * stride;
                    if (j < hidden) {
                        const double* a = tape.data() + (slots[j] + r) * stride;
                        const double* h = a + L.out * stride;
                        const double* dh = da + L.out * stride;
                        if (spec_.activation == Activation::tanh) {
                            for (std::size_t s = 0; s < count; ++s) {
                                da[s] = dh[s] * (1.0 - h[s] * h[s]);
                            }
                        } else {
                            for (std::size_t s = 0; s < count; ++s) {
                                da[s] = dh[s] * (std::min(h[s], 0.0) + 1.0);
                            }
                        }
                    }
                    gb[r] += sum(da, count);
                    const double* wr = w + r * L.in;
                    double* gwr = gw + r * L.in;
                    for (std::size_t c = 0; c < L.in; ++c) {
                        const double* x = tape.data() + (prev + c) * stride;
                        double* dx = adjoint.data() + (prev + c) * stride;
                        gwr[c] += dot_rows(da, x, count);
                        const double wc = wr[c];
                        for (std::size_t s = 0; s < count; ++s) {
                            dx[s] += wc * da[s];
                        }
                    }
                }
            }
        }
    }

    /// Single evaluation N_T(c, μ_norm).
    [[nodiscard]] Vector forward(std::span<const double> params, std::span<const double> c,
                                 std::span<const double> mu_norm) const {
        check(params, c, mu_norm);
        Vector tape(tape_size_);
        std::copy(c.begin(), c.end(), tape.begin());
        std::copy(mu_norm.begin(), mu_norm.end(), tape.begin() + static_cast<std::ptrdiff_t>(spec_.n_rb));
        forward_tape(params, tape);
        return {tape.end() - static_cast<std::ptrdiff_t>(spec_.n_rb), tape.end()};
    }

    void check(std::span<const double> params, std::span<const double> c, std::span<const double> mu_norm) const {
        if (params.size() != param_count_) {
            throw DimensionError("network expects " + std::to_string(param_count_) + " parameters, got " +
                                 std::to_string(params.size()));
        }
        if (c.size() != spec_.n_rb || mu_norm.size() != spec_.p) {
            throw DimensionError("network input must be N_rb = " + std::to_string(spec_.n_rb) + " coefficients and P = " +
                                 std::to_string(spec_.p) + " parameters");
        }
    }

  private:
    // Fixed four-way split keeps the summation order independent of the
    // compiler's vectorization choices.
    static double dot_rows(const double* x, const double* y, std::size_t n) {
        double acc[4] = {0.0, 0.0, 0.0, 0.0};
        std::size_t s = 0;
        for (; s + 4 <= n; s += 4) {
            acc[0] += x[s] * y[s];
            acc[1] += x[s + 1] * y[s + 1];
            acc[2] += x[s + 2] * y[s + 2];
            acc[3] += x[s + 3] * y[s + 3];
        }
        for (; s < n; ++s) {
            acc[0] += x[s] * y[s];
        }
        return (acc[0] + acc[1]) + (acc[2] + acc[3]);
    }

    static double sum(const double* x, std::size_t n) {
        double acc[4] = {0.0, 0.0, 0.0, 0.0};
        std::size_t s = 0;
        for (; s + 4 <= n; s += 4) {
            acc[0] += x[s];
            acc[1] += x[s + 1];
            acc[2] += x[s + 2];
            acc[3] += x[s + 3];
        }
        for (; s < n; ++s) {
            acc[0] += x[s];
        }
        return (acc[0] + acc[1]) + (acc[2] + acc[3]);
    }

    ResNetSpec spec_;
    std::vector<std::vector<LayerLayout>> layers_;
    std::vector<std::vector<std::size_t>> slots_;
    std::vector<std::size_t> block_in_;
    std::size_t param_count_ = 0;
    std::size_t tape_size_ = 0;
    std::size_t widest_ = 0;
};

inline ResNetParams unflatten(const ResNet& net, std::span<const double> flat) {
    if (flat.size() != net.param_count()) {
        throw DimensionError("unflatten: expected " + std::to_string(net.param_count()) + " values");
    }
    ResNetParams p;
    for (const auto& block : net.layers()) {
        auto& ws = p.weights.emplace_back();
        auto& bs = p.biases.emplace_back();
        for (const auto& L : block) {
            Vector w(flat.begin() + static_cast<std::ptrdiff_t>(L.weights),
                     flat.begin() + static_cast<std::ptrdiff_t>(L.weights + L.in * L.out));
            ws.emplace_back(L.out, L.in, std::move(w));
            bs.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(L.bias),
                            flat.begin() + static_cast<std::ptrdiff_t>(L.bias + L.out));
        }
    }
    return p;
}

inline Vector flatten(const ResNetParams& p) {
    Vector flat;
    for (std::size_t b = 0; b < p.weights.size(); ++b) {
        for (std::size_t j = 0; j < p.weights[b].size(); ++j) {
            const auto w = p.weights[b][j].data();
            flat.insert(flat.end(), w.begin(), w.end());
            flat.insert(flat.end(), p.biases[b][j].begin(), p.biases[b][j].end());
        }
    }
    return flat;
}

/// Uniform weights in ±√(6/(fan_in + fan_out)), zero biases.
inline Vector glorot_init(const ResNet& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Vector flat(net.param_count(), 0.0);
    for (const auto& block : net.layers()) {
        for (const auto& L : block) {
            const double limit = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
            for (std::size_t i = 0; i < L.in * L.out; ++i) {
                flat[L.weights + i] = (2.0 * unit_uniform(rng) - 1.0) * limit;
            }
        }
    }
    return flat;
}

// ---------------------------------------------------------------------------
// Training data and losses

/// Coefficient trajectories with network-ready (normalized) parameters.
class TrainingSet {
  public:
    TrainingSet(std::size_t n_rb, std::size_t n_saved, std::vector<Vector> mu_norm, Vector coeffs)
        : n_rb_(n_rb), n_saved_(n_saved), mu_(std::move(mu_norm)), coeffs_(std::move(coeffs)) {
        if (mu_.empty() || n_saved_ < 2 || n_rb_ == 0) {
            throw DomainError("training set needs at least one parameter and two saved states");
        }
        p_ = mu_.front().size();
        for (const auto& m : mu_) {
            if (m.size() != p_) {
                throw DimensionError("training set parameters have inconsistent dimension");
            }
        }
        if (coeffs_.size() != mu_.size() * n_saved_ * n_rb_) {
            throw DimensionError("training set coefficient array has the wrong size");
        }
    }

    explicit TrainingSet(const pod::CoefficientDataset& d)
        : TrainingSet(d.n_rb, d.n_saved, normalized(d), d.coeffs) {}

    [[nodiscard]] std::size_t n_params() const noexcept { return mu_.size(); }
    [[nodiscard]] std::size_t n_saved() const noexcept { return n_saved_; }
    [[nodiscard]] std::size_t n_rb() const noexcept { return n_rb_; }
    [[nodiscard]] std::size_t p() const noexcept { return p_; }
    /// Number of network steps per trajectory, N̂.
    [[nodiscard]] std::size_t steps() const noexcept { return n_saved_ - 1; }
    [[nodiscard]] std::span<const double> mu(std::size_t i) const { return mu_[i]; }
    [[nodiscard]] std::span<const double> coeff(std::size_t i, std::size_t k) const {
        return {coeffs_.data() + (i * n_saved_ + k) * n_rb_, n_rb_};
    }

  private:
    static std::vector<Vector> normalized(const pod::CoefficientDataset& d) {
        std::vector<Vector> out;
        for (std::size_t i = 0; i < d.n_params; ++i) {
            out.push_back(d.normalized_mu(i));
        }
        return out;
    }

    std::size_t n_rb_;
    std::size_t n_saved_;
    std::size_t p_ = 0;
    std::vector<Vector> mu_;
    Vector coeffs_;
};

/// Feature (μ_i, t_k): predict from c(t_k; μ_i).
struct Sample {
    std::size_t param;
    std::size_t step;
};

/// Every (parameter, step) pair that has a successor.
inline std::vector<Sample> all_samples(const TrainingSet& set) {
    std::vector<Sample> out;
    out.reserve(set.n_params() * set.steps());
    for (std::size_t i = 0; i < set.n_params(); ++i) {
        for (std::size_t k = 0; k < set.steps(); ++k) {
            out.push_back({i, k});
        }
    }
    return out;
}

/// One transition (c_k, μ, c_{k+1}).
struct Transition {
    Vector c;
    Vector mu;
    Vector next;
};

/// (1/|B|) Σ ‖N_T(c_k, μ) − c_{k+1}‖².
inline double loss_single(const ResNet& net, std::span<const double> params, std::span<const Transition> batch) {
    if (batch.empty()) {
        throw DomainError("loss_single: empty batch");
    }
    double total = 0.0;
    for (const auto& t : batch) {
        const Vector y = net.forward(params, t.c, t.mu);
        if (t.next.size() != y.size()) {
            throw DimensionError("loss_single: target size mismatch");
        }
        double e = 0.0;
        for (std::size_t r = 0; r < y.size(); ++r) {
            e += (y[r] - t.next[r]) * (y[r] - t.next[r]);
        }
        total += e;
    }
    return total / static_cast<double>(batch.size());
}

inline constexpr std::size_t gradient_chunk = 256;

namespace detail {

inline std::size_t chain_length(const TrainingSet& set, const Sample& s, std::size_t m) {
    return std::min(m, set.steps() - s.step);
}

// Loss (and optionally gradient) of one chunk of samples, evaluated together
// in the slot-major tape layout. The chain of each sample is unrolled over
// m' = min(m, N̂ − k) steps; samples must be ordered by nonincreasing m' so
// that the samples still active at step q form a prefix.
inline double chunk_loss(const ResNet& net, std::span<const double> params, const TrainingSet& set,
                         std::span<const Sample> samples, std::size_t m, std::span<double> grad) {
    const std::size_t n = samples.size();
    const std::size_t n_rb = set.n_rb();
    const std::size_t p = set.p();
    const std::size_t tape = net.tape_size() * n;
    const std::size_t out_slot = net.output_offset();
    const std::size_t longest = chain_length(set, samples.front(), m);
    std::vector<std::size_t> active(longest, 0);
    for (const auto& s : samples) {
        if (s.param >= set.n_params() || s.step >= set.steps()) {
            throw DomainError("sample (" + std::to_string(s.param) + ", " + std::to_string(s.step) +
                              ") has no successor state");
        }
        const std::size_t len = chain_length(set, s, m);
        if (len > longest) {
            throw DomainError("chunk samples must be ordered by decreasing chain length");
        }
        for (std::size_t q = 0; q < len; ++q) {
            ++active[q];
        }
    }
    std::vector<double> tapes(longest * tape);
    for (std::size_t q = 0; q < longest; ++q) {
        double* tq = tapes.data() + q * tape;
        const std::size_t count = active[q];
        for (std::size_t s = 0; s < count; ++s) {
            const auto& smp = samples[s];
            const auto mu = set.mu(smp.param);
            for (std::size_t a = 0; a < p; ++a) {
                tq[(n_rb + a) * n + s] = mu[a];
            }
        }
        if (q == 0) {
            for (std::size_t s = 0; s < count; ++s) {
                const auto c0 = set.coeff(samples[s].param, samples[s].step);
                for (std::size_t r = 0; r < n_rb; ++r) {
                    tq[r * n + s] = c0[r];
                }
            }
        } else {
            const double* prev_out = tapes.data() + (q - 1) * tape + out_slot * n;
            std::copy(prev_out, prev_out + n_rb * n, tq);
        }
        net.forward_tape(params, {tq, tape}, n, count);
    }

    // residuals, stored in place of the targets
    std::vector<double> residual(longest * n_rb * n, 0.0);
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        const auto& smp = samples[s];
        for (std::size_t q = 0; q < chain_length(set, smp, m); ++q) {
            const double* y = tapes.data() + q * tape + out_slot * n;
            const auto target = set.coeff(smp.param, smp.step + q + 1);
            double e = 0.0;
            for (std::size_t r = 0; r < n_rb; ++r) {
                const double d = y[r * n + s] - target[r];
                residual[(q * n_rb + r) * n + s] = d;
                e += d * d;
            }
            total += e / static_cast<double>(q + 1);
        }
    }
    if (grad.empty()) {
        return total;
    }
    std::vector<double> adjoint(tape);
    std::vector<double> carry(n_rb * n, 0.0);
    for (std::size_t q = longest; q-- > 0;) {
        const std::size_t count = active[q];
        std::fill(adjoint.begin(), adjoint.end(), 0.0);
        const double weight = 2.0 / static_cast<double>(q + 1);
        for (std::size_t r = 0; r < n_rb; ++r) {
            double* dy = adjoint.data() + (out_slot + r) * n;
            const double* res = residual.data() + (q * n_rb + r) * n;
            const double* cr = carry.data() + r * n;
            for (std::size_t s = 0; s < count; ++s) {
                dy[s] = weight * res[s] + cr[s];
            }
        }
        net.backward_tape(params, {tapes.data() + q * tape, tape}, adjoint, grad, n, count);
        std::copy(adjoint.begin(), adjoint.begin() + static_cast<std::ptrdiff_t>(n_rb * n), carry.begin());
    }
    return total;
}

} // namespace detail

/// Multi-step loss and, when `grad` is non-empty, its exact gradient. The
/// batch is split into fixed chunks whose partial sums are combined in chunk
/// order, so the result is bit-identical for any thread count.
inline double loss_and_gradient(const ResNet& net, std::span<const double> params, const TrainingSet& set,
                                std::span<const Sample> batch, std::size_t m, std::span<double> grad,
                                std::size_t threads = 1) {
    if (m == 0) {
        throw DomainError("multi-step horizon must be at least 1");
    }
    if (batch.empty()) {
        throw DomainError("empty batch");
    }
    if (params.size() != net.param_count() || (!grad.empty() && grad.size() != net.param_count())) {
        throw DimensionError("parameter or gradient vector has the wrong size");
    }
    if (set.n_rb() != net.spec().n_rb || set.p() != net.spec().p) {
        throw CompatibilityError("network is N_rb = " + std::to_string(net.spec().n_rb) + ", P = " +
                                 std::to_string(net.spec().p) + " but data is N_rb = " + std::to_string(set.n_rb()) +
                                 ", P = " + std::to_string(set.p()));
    }
    // Longest chains first, so each chunk's active samples form a prefix.
    std::vector<Sample> ordered(batch.begin(), batch.end());
    std::stable_sort(ordered.begin(), ordered.end(), [&](const Sample& a, const Sample& b) {
        return detail::chain_length(set, a, m) > detail::chain_length(set, b, m);
    });
    const std::span<const Sample> work(ordered);
    const std::size_t chunks = (batch.size() + gradient_chunk - 1) / gradient_chunk;
    std::vector<double> losses(chunks, 0.0);
    std::vector<Vector> grads(grad.empty() ? 0 : chunks);
    parallel_for(chunks, threads, [&](std::size_t c) {
        const std::size_t begin = c * gradient_chunk;
        const std::size_t count = std::min(gradient_chunk, batch.size() - begin);
        std::span<double> g;
        if (!grad.empty()) {
            grads[c].assign(net.param_count(), 0.0);
            g = grads[c];
        }
        losses[c] = detail::chunk_loss(net, params, set, work.subspan(begin, count), m, g);
    });
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (double l : losses) {
        total += l;
    }
    if (!grad.empty()) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& g : grads) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                grad[i] += g[i];
            }
        }
        for (double& g : grad) {
            g *= scale;
        }
    }
    return total * scale;
}

inline double loss_multi(const ResNet& net, std::span<const double> params, const TrainingSet& set,
                         std::span<const Sample> batch, std::size_t m, std::size_t threads = 1) {
    return loss_and_gradient(net, params, set, batch, m, {}, threads);
}

inline Vector gradient(const ResNet& net, std::span<const double> params, const TrainingSet& set,
                       std::span<const Sample> batch, std::size_t m, std::size_t threads = 1) {
    Vector g(net.param_count());
    loss_and_gradient(net, params, set, batch, m, g, threads);
    return g;
}

/// v₀ = c0, v_k = N_T(v_{k−1}, μ_norm) for k = 1..steps. The loop reuses one
/// tape of network size; `widest` reports the largest buffer it touched.
inline std::vector<Vector> rollout_coefficients(const ResNet& net, std::span<const double> params,
                                                std::span<const double> c0, std::span<const double> mu_norm,
                                                std::size_t steps, std::size_t* widest = nullptr) {
    net.check(params, c0, mu_norm);
    const std::size_t n_rb = net.spec().n_rb;
    std::vector<Vector> traj;
    traj.reserve(steps + 1);
    traj.emplace_back(c0.begin(), c0.end());
    Vector tape(net.tape_size());
    std::copy(mu_norm.begin(), mu_norm.end(), tape.begin() + static_cast<std::ptrdiff_t>(n_rb));
    for (std::size_t k = 1; k <= steps; ++k) {
        std::copy(traj.back().begin(), traj.back().end(), tape.begin());
        try {
            net.forward_tape(params, tape);
        } catch (const NumericalError& e) {
            throw NumericalError("rollout diverged at step " + std::to_string(k) + ": " + e.what());
        }
        traj.emplace_back(tape.end() - static_cast<std::ptrdiff_t>(n_rb), tape.end());
    }
    if (widest) {
        *widest = std::max(tape.size(), n_rb);
    }
    return traj;
}

} // namespace rbrom::net
