#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ddekit/errors.hpp"
#include "ddekit/io.hpp"
#include "ddekit/rng.hpp"

namespace ddekit {

enum class Activation { tanh, relu, identity };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
    }
    return "tanh";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw config_error("unknown activation: " + s);
}

/// Multilayer perceptron shape: affine + activation for each hidden layer,
/// linear output layer. All arithmetic is 64-bit; the adjoint integration
/// downstream is too sensitive to interpolation error for anything less.
struct MlpSpec {
    std::vector<int> layer_sizes; // input width, hidden widths..., output width
    Activation activation = Activation::tanh;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int n_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
};

inline void validate(const MlpSpec& spec) {
    if (spec.layer_sizes.size() < 2)
        throw config_error("MlpSpec needs at least input and output widths");
    for (int s : spec.layer_sizes)
        if (s < 1) throw config_error("MlpSpec layer sizes must be >= 1");
}

/// Number of weight/bias entries the spec implies. Delay parameters used by
/// the model layer are appended after these.
inline std::size_t weight_count(const MlpSpec& spec) {
    std::size_t n = 0;
    for (int l = 0; l + 1 < static_cast<int>(spec.layer_sizes.size()); ++l) {
        const std::size_t in = static_cast<std::size_t>(spec.layer_sizes[l]);
        const std::size_t out = static_cast<std::size_t>(spec.layer_sizes[l + 1]);
        n += out * in + out;
    }
    return n;
}

// Parameter layout, frozen so vectors round-trip through files bit-exactly:
// for each layer l in order, W_l row-major (out x in), then b_l; any delay
// parameters follow the final layer's bias.

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. Deterministic
/// given the seed.
inline std::vector<double> mlp_init(const MlpSpec& spec, std::uint64_t seed) {
    validate(spec);
    Rng rng(seed);
    std::vector<double> params;
    params.reserve(weight_count(spec));
    for (int l = 0; l + 1 < static_cast<int>(spec.layer_sizes.size()); ++l) {
        const int in = spec.layer_sizes[l];
        const int out = spec.layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (int i = 0; i < out * in; ++i) params.push_back(rng.uniform(-bound, bound));
        for (int i = 0; i < out; ++i) params.push_back(0.0);
    }
    return params;
}

namespace detail {

inline double activate(Activation a, double x) {
    switch (a) {
        case Activation::tanh: return std::tanh(x);
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::identity: return x;
    }
    return x;
}

// Derivative in terms of the pre-activation z. relu'(0) taken as 0.
inline double activate_grad(Activation a, double z) {
    switch (a) {
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

} // namespace detail

/// Evaluates the network. `params` must hold at least weight_count(spec)
/// entries (extra trailing entries, e.g. delay parameters, are ignored).
inline void mlp_forward(const MlpSpec& spec, std::span<const double> params,
                        std::span<const double> input, std::span<double> output) {
    if (static_cast<int>(input.size()) != spec.input_dim())
        throw dimension_error("mlp_forward: input width " + std::to_string(input.size()) +
                              " != spec input " + std::to_string(spec.input_dim()));
    if (static_cast<int>(output.size()) != spec.output_dim())
        throw dimension_error("mlp_forward: output width mismatch");
    if (params.size() < weight_count(spec))
        throw dimension_error("mlp_forward: params shorter than spec implies");

    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    std::size_t off = 0;
    const int L = spec.n_layers();
    for (int l = 0; l < L; ++l) {
        const int in = spec.layer_sizes[l];
        const int out = spec.layer_sizes[l + 1];
        const double* W = params.data() + off;
        const double* b = W + static_cast<std::size_t>(out) * in;
        next.assign(static_cast<std::size_t>(out), 0.0);
        for (int r = 0; r < out; ++r) {
            double acc = b[r];
            const double* row = W + static_cast<std::size_t>(r) * in;
            for (int c = 0; c < in; ++c) acc += row[c] * cur[c];
            next[r] = (l + 1 < L) ? detail::activate(spec.activation, acc) : acc;
        }
        cur.swap(next);
        off += static_cast<std::size_t>(out) * in + out;
    }
    for (int i = 0; i < spec.output_dim(); ++i) output[i] = cur[i];
}

inline std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                       std::span<const double> input) {
    std::vector<double> out(static_cast<std::size_t>(spec.output_dim()));
    mlp_forward(spec, params, input, out);
    return out;
}

/// Workspace for repeated forward/VJP evaluation without reallocation. All
/// operations are pure with respect to spec/params; a workspace instance is
/// not shareable across threads.
class MlpWorkspace {
public:
    explicit MlpWorkspace(const MlpSpec& spec) : spec_(spec) {
        validate(spec);
        const int L = spec.n_layers();
        acts_.resize(static_cast<std::size_t>(L) + 1);
        preacts_.resize(static_cast<std::size_t>(L));
        for (int l = 0; l <= L; ++l)
            acts_[l].resize(static_cast<std::size_t>(spec.layer_sizes[l]));
        for (int l = 0; l < L; ++l)
            preacts_[l].resize(static_cast<std::size_t>(spec.layer_sizes[l + 1]));
        delta_.resize(max_width());
        delta_next_.resize(max_width());
    }

    const MlpSpec& spec() const { return spec_; }

    /// Forward pass that retains the per-layer activations for a later VJP.
    void forward(std::span<const double> params, std::span<const double> input,
                 std::span<double> output) {
        if (static_cast<int>(input.size()) != spec_.input_dim())
            throw dimension_error("mlp forward: input width mismatch");
        if (params.size() < weight_count(spec_))
            throw dimension_error("mlp forward: params shorter than spec implies");
        const int L = spec_.n_layers();
        std::copy(input.begin(), input.end(), acts_[0].begin());
        std::size_t off = 0;
        for (int l = 0; l < L; ++l) {
            const int in = spec_.layer_sizes[l];
            const int out = spec_.layer_sizes[l + 1];
            const double* W = params.data() + off;
            const double* b = W + static_cast<std::size_t>(out) * in;
            for (int r = 0; r < out; ++r) {
                double acc = b[r];
                const double* row = W + static_cast<std::size_t>(r) * in;
                for (int c = 0; c < in; ++c) acc += row[c] * acts_[l][c];
                preacts_[l][r] = acc;
                acts_[l + 1][r] =
                    (l + 1 < L) ? detail::activate(spec_.activation, acc) : acc;
            }
            off += static_cast<std::size_t>(out) * in + out;
        }
        if (!output.empty()) {
            for (int i = 0; i < spec_.output_dim(); ++i) output[i] = acts_[L][i];
        }
    }

    /// Reverse sweep for the last forward() call: grad_input = v^T ∂f/∂x and
    /// grad_params = v^T ∂f/∂θ, accumulated (+=) into the output spans so a
    /// caller can sum contributions across evaluation points. grad_params has
    /// weight_count(spec) entries in the frozen layout; grad_input is sliceable
    /// into per-delayed-block segments by the caller.
    void vjp_accumulate(std::span<const double> params, std::span<const double> cotangent,
                        std::span<double> grad_input, std::span<double> grad_params,
                        double scale = 1.0) {
        if (static_cast<int>(cotangent.size()) != spec_.output_dim())
            throw dimension_error("mlp vjp: cotangent width mismatch");
        if (!grad_input.empty() &&
            static_cast<int>(grad_input.size()) != spec_.input_dim())
            throw dimension_error("mlp vjp: grad_input width mismatch");
        if (!grad_params.empty() && grad_params.size() < weight_count(spec_))
            throw dimension_error("mlp vjp: grad_params too short");

        const int L = spec_.n_layers();
        for (int i = 0; i < spec_.output_dim(); ++i) delta_[i] = scale * cotangent[i];

        std::size_t off = weight_count(spec_);
        for (int l = L - 1; l >= 0; --l) {
            const int in = spec_.layer_sizes[l];
            const int out = spec_.layer_sizes[l + 1];
            off -= static_cast<std::size_t>(out) * in + out;
            const double* W = params.data() + off;
            // Hidden layers fold the activation derivative into delta first.
            if (l + 1 < L) {
                for (int r = 0; r < out; ++r)
                    delta_[r] *= detail::activate_grad(spec_.activation, preacts_[l][r]);
            }
            if (!grad_params.empty()) {
                double* gW = grad_params.data() + off;
                double* gb = gW + static_cast<std::size_t>(out) * in;
                for (int r = 0; r < out; ++r) {
                    const double d = delta_[r];
                    double* grow = gW + static_cast<std::size_t>(r) * in;
                    for (int c = 0; c < in; ++c) grow[c] += d * acts_[l][c];
                    gb[r] += d;
                }
            }
            if (l > 0 || !grad_input.empty()) {
                for (int c = 0; c < in; ++c) {
                    double acc = 0.0;
                    for (int r = 0; r < out; ++r)
                        acc += W[static_cast<std::size_t>(r) * in + c] * delta_[r];
                    delta_next_[c] = acc;
                }
                std::swap(delta_, delta_next_);
            }
        }
        if (!grad_input.empty()) {
            for (int c = 0; c < spec_.input_dim(); ++c) grad_input[c] += delta_[c];
        }
    }

private:
    std::size_t max_width() const {
        std::size_t m = 0;
        for (int s : spec_.layer_sizes) m = std::max(m, static_cast<std::size_t>(s));
        return m;
    }

    MlpSpec spec_;
    std::vector<std::vector<double>> acts_;
    std::vector<std::vector<double>> preacts_;
    std::vector<double> delta_, delta_next_;
};

struct MlpVjpResult {
    std::vector<double> grad_input;
    std::vector<double> grad_params;
};

/// One-shot convenience wrapper: forward + reverse sweep at a single input.
inline MlpVjpResult mlp_vjp(const MlpSpec& spec, std::span<const double> params,
                            std::span<const double> input,
                            std::span<const double> cotangent) {
    MlpWorkspace ws(spec);
    std::vector<double> out(static_cast<std::size_t>(spec.output_dim()));
    ws.forward(params, input, out);
    MlpVjpResult res;
    res.grad_input.assign(static_cast<std::size_t>(spec.input_dim()), 0.0);
    res.grad_params.assign(weight_count(spec), 0.0);
    ws.vjp_accumulate(params, cotangent, res.grad_input, res.grad_params);
    return res;
}

/// Param file: one JSON header line (spec + delay count), then the values as
/// little-endian 64-bit reals.
inline void save_params(const std::filesystem::path& path, const MlpSpec& spec,
                        int n_delays, std::span<const double> values) {
    json header = {{"layer_sizes", spec.layer_sizes},
                   {"activation", to_string(spec.activation)},
                   {"n_delays", n_delays}};
    write_json_binary(path, header, values);
}

inline std::vector<double> load_params(const std::filesystem::path& path, MlpSpec& spec,
                                       int& n_delays) {
    std::vector<double> values;
    json header = read_json_binary(path, values);
    try {
        spec.layer_sizes = header.at("layer_sizes").get<std::vector<int>>();
        spec.activation = activation_from_string(header.at("activation").get<std::string>());
        n_delays = header.at("n_delays").get<int>();
    } catch (const json::exception& e) {
        throw io_error("corrupted header in " + path.string() + ": " + e.what());
    }
    validate(spec);
    if (values.size() != weight_count(spec) + static_cast<std::size_t>(n_delays))
        throw io_error("param payload length does not match header in " + path.string());
    return values;
}

} // namespace ddekit
