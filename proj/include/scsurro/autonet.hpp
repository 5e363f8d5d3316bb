#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace scsurro {

class NetworkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense regression network: either a plain stack of linear layers with SiLU
/// between them, or a residual trunk of blocks x + Lin2(SiLU(Lin1(x)))
/// wrapped in linear input/output projections.
struct NetworkArch {
    enum class Kind { plain, residual };

    Kind kind = Kind::residual;
    int input_dim = 6;
    int output_dim = 1;
    int hidden = 256;
    int depth = 12;   // linear layers (plain) or residual blocks (residual)

    void validate() const {
        if (input_dim < 1 || output_dim < 1 || hidden < 1 || depth < 1)
            throw NetworkError("NetworkArch: dimensions must be >= 1");
        if (kind == Kind::plain && depth < 2)
            throw NetworkError("NetworkArch: a plain network needs at least 2 linear layers");
    }

    /// Number of linear layers including projections.
    int n_linear() const { return kind == Kind::plain ? depth : 2 * depth + 2; }

    bool operator==(const NetworkArch&) const = default;
};

struct LinearLayer {
    Eigen::MatrixXd weight;   // out x in
    Eigen::VectorXd bias;     // out
};

struct NetworkParams {
    std::vector<LinearLayer> layers;
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

namespace detail {

// array forms so Eigen vectorizes the exponentials
inline Eigen::MatrixXd silu(const Eigen::MatrixXd& x) {
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x.array()).exp());
    return (x.array() * s).matrix();
}

inline Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& x) {
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x.array()).exp());
    return (s * (1.0 + x.array() * (1.0 - s))).matrix();
}

inline Eigen::MatrixXf silu(const Eigen::MatrixXf& x) {
    const Eigen::ArrayXXf s = 1.0f / (1.0f + (-x.array()).exp());
    return (x.array() * s).matrix();
}

/// (in, out) dimensions of linear layer l.
inline std::pair<int, int> layer_dims(const NetworkArch& arch, int l) {
    if (arch.kind == NetworkArch::Kind::plain) {
        const int in = (l == 0) ? arch.input_dim : arch.hidden;
        const int out = (l == arch.depth - 1) ? arch.output_dim : arch.hidden;
        return {in, out};
    }
    if (l == 0) return {arch.input_dim, arch.hidden};
    if (l == 2 * arch.depth + 1) return {arch.hidden, arch.output_dim};
    return {arch.hidden, arch.hidden};
}

inline Eigen::MatrixXd linear(const LinearLayer& layer, const Eigen::MatrixXd& x) {
    return (x * layer.weight.transpose()).rowwise() + layer.bias.transpose();
}

} // namespace detail

inline void check_shapes(const NetworkArch& arch, const NetworkParams& params) {
    arch.validate();
    if (static_cast<int>(params.layers.size()) != arch.n_linear())
        throw NetworkError("network params do not match the architecture (layer count)");
    for (int l = 0; l < arch.n_linear(); ++l) {
        const auto [in, out] = detail::layer_dims(arch, l);
        const auto& layer = params.layers[static_cast<std::size_t>(l)];
        if (layer.weight.rows() != out || layer.weight.cols() != in || layer.bias.size() != out)
            throw NetworkError("network params do not match the architecture (layer shape)");
    }
}

/// Intermediate activations retained for the backward pass.
struct ForwardCache {
    NetworkArch arch;
    Eigen::Index batch = 0;
    std::vector<Eigen::MatrixXd> linear_inputs;   // input to each linear layer
    std::vector<Eigen::MatrixXd> preactivations;  // linear outputs fed to SiLU
};

inline Eigen::MatrixXd forward(const NetworkArch& arch, const NetworkParams& params,
                               const Eigen::MatrixXd& batch, ForwardCache* cache = nullptr) {
    check_shapes(arch, params);
    if (batch.cols() != arch.input_dim)
        throw NetworkError("forward: batch width does not match input_dim");
    if (cache) {
        cache->arch = arch;
        cache->batch = batch.rows();
        cache->linear_inputs.clear();
        cache->preactivations.clear();
    }
    auto remember_input = [&](const Eigen::MatrixXd& x) {
        if (cache) cache->linear_inputs.push_back(x);
    };
    auto remember_preact = [&](const Eigen::MatrixXd& a) {
        if (cache) cache->preactivations.push_back(a);
    };

    if (arch.kind == NetworkArch::Kind::plain) {
        Eigen::MatrixXd x = batch;
        for (int l = 0; l < arch.depth; ++l) {
            remember_input(x);
            Eigen::MatrixXd a = detail::linear(params.layers[static_cast<std::size_t>(l)], x);
            if (l < arch.depth - 1) {
                remember_preact(a);
                x = detail::silu(a);
            } else {
                x = std::move(a);
            }
        }
        return x;
    }

    remember_input(batch);
    Eigen::MatrixXd h = detail::linear(params.layers[0], batch);
    for (int b = 0; b < arch.depth; ++b) {
        const auto& lin1 = params.layers[static_cast<std::size_t>(2 * b + 1)];
        const auto& lin2 = params.layers[static_cast<std::size_t>(2 * b + 2)];
        remember_input(h);
        Eigen::MatrixXd a = detail::linear(lin1, h);
        remember_preact(a);
        Eigen::MatrixXd s = detail::silu(a);
        remember_input(s);
        h += detail::linear(lin2, s);
    }
    remember_input(h);
    return detail::linear(params.layers[static_cast<std::size_t>(2 * arch.depth + 1)], h);
}

/// Hidden representation after the residual trunk, before the output
/// projection. With all second block layers zeroed this equals the input
/// projection exactly.
inline Eigen::MatrixXd residual_trunk_output(const NetworkArch& arch, const NetworkParams& params,
                                             const Eigen::MatrixXd& batch) {
    if (arch.kind != NetworkArch::Kind::residual)
        throw NetworkError("residual_trunk_output: not a residual network");
    check_shapes(arch, params);
    Eigen::MatrixXd h = detail::linear(params.layers[0], batch);
    for (int b = 0; b < arch.depth; ++b) {
        const auto& lin1 = params.layers[static_cast<std::size_t>(2 * b + 1)];
        const auto& lin2 = params.layers[static_cast<std::size_t>(2 * b + 2)];
        h += detail::linear(lin2, detail::silu(detail::linear(lin1, h)));
    }
    return h;
}

/// Single-precision copy of the parameters for fast batched inference; the
/// checkpoint format stores 32-bit weights, so this loses nothing a saved
/// model had.
struct InferenceParams {
    struct Layer {
        Eigen::MatrixXf weight;
        Eigen::VectorXf bias;
    };
    std::vector<Layer> layers;
};

inline InferenceParams make_inference_params(const NetworkArch& arch,
                                             const NetworkParams& params) {
    check_shapes(arch, params);
    InferenceParams out;
    out.layers.reserve(params.layers.size());
    for (const auto& layer : params.layers)
        out.layers.push_back({layer.weight.cast<float>(), layer.bias.cast<float>()});
    return out;
}

inline Eigen::MatrixXf forward(const NetworkArch& arch, const InferenceParams& params,
                               const Eigen::MatrixXf& batch) {
    if (batch.cols() != arch.input_dim)
        throw NetworkError("forward: batch width does not match input_dim");
    if (static_cast<int>(params.layers.size()) != arch.n_linear())
        throw NetworkError("forward: inference params do not match the architecture");
    auto silu_inplace = [](Eigen::MatrixXf& a) {
        a.array() *= 1.0f / (1.0f + (-a.array()).exp());
    };

    if (arch.kind == NetworkArch::Kind::plain) {
        Eigen::MatrixXf x = batch, a;
        for (int l = 0; l < arch.depth; ++l) {
            const auto& layer = params.layers[static_cast<std::size_t>(l)];
            a.noalias() = x * layer.weight.transpose();
            a.rowwise() += layer.bias.transpose();
            if (l < arch.depth - 1) silu_inplace(a);
            std::swap(x, a);
        }
        return x;
    }
    Eigen::MatrixXf h, a;
    h.noalias() = batch * params.layers[0].weight.transpose();
    h.rowwise() += params.layers[0].bias.transpose();
    for (int b = 0; b < arch.depth; ++b) {
        const auto& lin1 = params.layers[static_cast<std::size_t>(2 * b + 1)];
        const auto& lin2 = params.layers[static_cast<std::size_t>(2 * b + 2)];
        a.noalias() = h * lin1.weight.transpose();
        a.rowwise() += lin1.bias.transpose();
        silu_inplace(a);
        h.noalias() += a * lin2.weight.transpose();
        h.rowwise() += lin2.bias.transpose();
    }
    const auto& out = params.layers[static_cast<std::size_t>(2 * arch.depth + 1)];
    Eigen::MatrixXf y;
    y.noalias() = h * out.weight.transpose();
    y.rowwise() += out.bias.transpose();
    return y;
}

struct Gradients {
    std::vector<LinearLayer> layers;   // same shapes as the parameters
};

/// Reverse-mode pass. `output_grad` is dLoss/dOutput, shape B x output_dim;
/// gradients over a batch are sums of per-row contributions.
inline Gradients backward(const NetworkArch& arch, const NetworkParams& params,
                          const ForwardCache& cache, const Eigen::MatrixXd& output_grad) {
    check_shapes(arch, params);
    if (!(cache.arch == arch))
        throw NetworkError("backward: cache was built for a different architecture");
    if (output_grad.rows() != cache.batch || output_grad.cols() != arch.output_dim)
        throw NetworkError("backward: output_grad shape mismatch");
    const std::size_t want_inputs =
        arch.kind == NetworkArch::Kind::plain ? static_cast<std::size_t>(arch.depth)
                                              : static_cast<std::size_t>(2 * arch.depth + 2);
    if (cache.linear_inputs.size() != want_inputs)
        throw NetworkError("backward: stale or incomplete forward cache");

    Gradients grads;
    grads.layers.resize(params.layers.size());
    auto grad_of = [&](std::size_t l, const Eigen::MatrixXd& upstream) {
        grads.layers[l].weight.noalias() = upstream.transpose() * cache.linear_inputs[l];
        grads.layers[l].bias = upstream.colwise().sum().transpose();
    };

    if (arch.kind == NetworkArch::Kind::plain) {
        Eigen::MatrixXd d = output_grad;
        for (int l = arch.depth - 1; l >= 0; --l) {
            grad_of(static_cast<std::size_t>(l), d);
            if (l > 0) {
                d = (d * params.layers[static_cast<std::size_t>(l)].weight)
                        .cwiseProduct(detail::silu_grad(
                            cache.preactivations[static_cast<std::size_t>(l - 1)]));
            }
        }
        return grads;
    }

    const std::size_t out_proj = static_cast<std::size_t>(2 * arch.depth + 1);
    grad_of(out_proj, output_grad);
    Eigen::MatrixXd dh = output_grad * params.layers[out_proj].weight;
    for (int b = arch.depth - 1; b >= 0; --b) {
        const std::size_t l1 = static_cast<std::size_t>(2 * b + 1);
        const std::size_t l2 = static_cast<std::size_t>(2 * b + 2);
        grad_of(l2, dh);
        Eigen::MatrixXd da = (dh * params.layers[l2].weight)
                                 .cwiseProduct(detail::silu_grad(
                                     cache.preactivations[static_cast<std::size_t>(b)]));
        grad_of(l1, da);
        dh += da * params.layers[l1].weight;   // skip path plus block path
    }
    grad_of(0, dh);
    return grads;
}

/// Mean squared error over a batch; gradient w.r.t. predictions is
/// 2 (pred - target) / B.
inline double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                  Eigen::MatrixXd* grad = nullptr) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw NetworkError("mse: shape mismatch");
    const Eigen::MatrixXd diff = pred - target;
    if (grad) *grad = 2.0 * diff / static_cast<double>(pred.rows());
    return diff.squaredNorm() / static_cast<double>(pred.rows());
}

struct OptimizerState {
    std::vector<LinearLayer> first_moment;
    std::vector<LinearLayer> second_moment;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

inline OptimizerState make_optimizer_state(const NetworkArch& arch, const NetworkParams& params) {
    check_shapes(arch, params);
    OptimizerState state;
    state.first_moment.resize(params.layers.size());
    state.second_moment.resize(params.layers.size());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& p = params.layers[l];
        state.first_moment[l] = {Eigen::MatrixXd::Zero(p.weight.rows(), p.weight.cols()),
                                 Eigen::VectorXd::Zero(p.bias.size())};
        state.second_moment[l] = {Eigen::MatrixXd::Zero(p.weight.rows(), p.weight.cols()),
                                  Eigen::VectorXd::Zero(p.bias.size())};
    }
    return state;
}

/// Adam with bias correction, applied in place.
inline void adam_update(NetworkParams& params, const Gradients& grads, OptimizerState& state,
                        double lr) {
    if (grads.layers.size() != params.layers.size() ||
        state.first_moment.size() != params.layers.size())
        throw NetworkError("adam_update: mismatched shapes");
    for (std::size_t l = 0; l < grads.layers.size(); ++l)
        if (!grads.layers[l].weight.allFinite() || !grads.layers[l].bias.allFinite())
            throw NetworkError("adam_update: non-finite gradient in layer " + std::to_string(l));

    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& m = state.first_moment[l];
        auto& v = state.second_moment[l];
        const auto& g = grads.layers[l];
        m.weight = state.beta1 * m.weight + (1.0 - state.beta1) * g.weight;
        m.bias = state.beta1 * m.bias + (1.0 - state.beta1) * g.bias;
        v.weight = state.beta2 * v.weight + (1.0 - state.beta2) * g.weight.cwiseAbs2();
        v.bias = state.beta2 * v.bias + (1.0 - state.beta2) * g.bias.cwiseAbs2();

        params.layers[l].weight -=
            lr * (m.weight / c1).cwiseQuotient((v.weight / c2).cwiseSqrt().array().matrix() +
                                               Eigen::MatrixXd::Constant(
                                                   v.weight.rows(), v.weight.cols(), state.epsilon));
        params.layers[l].bias -=
            lr * (m.bias / c1).cwiseQuotient((v.bias / c2).cwiseSqrt() +
                                             Eigen::VectorXd::Constant(v.bias.size(),
                                                                       state.epsilon));
    }
}

/// Step-decay schedule: lr = initial * factor^floor(epoch / interval).
struct LrSchedule {
    double initial = 5e-4;
    double factor = 0.6;
    int interval = 50;

    double operator()(int epoch) const {
        if (epoch < 0) throw NetworkError("lr_schedule: negative epoch");
        return initial * std::pow(factor, epoch / interval);
    }
};

inline double lr_schedule(int epoch) { return LrSchedule{}(epoch); }

namespace detail {

/// Deterministic, platform-independent uniform doubles in [0, 1).
inline double uniform01(std::uint64_t& s) {
    // splitmix64
    s += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
}

} // namespace detail

/// Uniform fan-based initialization: weights in
/// +- sqrt(6 / (fan_in + fan_out)), biases zero. Deterministic per seed.
inline NetworkParams init_params(const NetworkArch& arch, std::uint64_t seed) {
    arch.validate();
    NetworkParams params;
    params.layers.resize(static_cast<std::size_t>(arch.n_linear()));
    std::uint64_t s = seed;
    for (int l = 0; l < arch.n_linear(); ++l) {
        const auto [in, out] = detail::layer_dims(arch, l);
        const double bound = std::sqrt(6.0 / (in + out));
        auto& layer = params.layers[static_cast<std::size_t>(l)];
        layer.weight.resize(out, in);
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c)
                layer.weight(r, c) = bound * (2.0 * detail::uniform01(s) - 1.0);
        layer.bias = Eigen::VectorXd::Zero(out);
    }
    return params;
}

inline constexpr char checkpoint_magic[4] = {'S', 'F', 'N', 'N'};
inline constexpr std::uint8_t checkpoint_version = 1;

inline void to_json(nlohmann::json& j, const NetworkArch& a) {
    j = nlohmann::json{{"kind", a.kind == NetworkArch::Kind::plain ? "plain" : "residual"},
                       {"input_dim", a.input_dim},
                       {"output_dim", a.output_dim},
                       {"hidden", a.hidden},
                       {"depth", a.depth}};
}

inline void from_json(const nlohmann::json& j, NetworkArch& a) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "plain")
        a.kind = NetworkArch::Kind::plain;
    else if (kind == "residual")
        a.kind = NetworkArch::Kind::residual;
    else
        throw NetworkError("unknown network kind: " + kind);
    j.at("input_dim").get_to(a.input_dim);
    j.at("output_dim").get_to(a.output_dim);
    j.at("hidden").get_to(a.hidden);
    j.at("depth").get_to(a.depth);
}

/// Checkpoint layout: magic "SFNN", version byte, u32 JSON header length,
/// arch JSON, then little-endian f32 weights in layer order (weight row-major,
/// then bias).
inline void save_params(const NetworkArch& arch, const NetworkParams& params,
                        const std::string& path) {
    static_assert(std::endian::native == std::endian::little);
    check_shapes(arch, params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NetworkError("save_params: cannot open " + path);
    out.write(checkpoint_magic, 4);
    out.put(static_cast<char>(checkpoint_version));
    const std::string header = nlohmann::json(arch).dump();
    const auto len = static_cast<std::uint32_t>(header.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    std::vector<float> buffer;
    for (const auto& layer : params.layers) {
        buffer.clear();
        buffer.reserve(static_cast<std::size_t>(layer.weight.size() + layer.bias.size()));
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
                buffer.push_back(static_cast<float>(layer.weight(r, c)));
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
            buffer.push_back(static_cast<float>(layer.bias[i]));
        out.write(reinterpret_cast<const char*>(buffer.data()),
                  static_cast<std::streamsize>(buffer.size() * sizeof(float)));
    }
    if (!out) throw NetworkError("save_params: write failed for " + path);
}

struct Checkpoint {
    NetworkArch arch;
    NetworkParams params;
};

inline Checkpoint load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NetworkError("load_params: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, checkpoint_magic, 4) != 0)
        throw NetworkError("load_params: bad magic in " + path);
    if (in.get() != checkpoint_version)
        throw NetworkError("load_params: unsupported version in " + path);
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) throw NetworkError("load_params: truncated header in " + path);

    Checkpoint ckpt;
    try {
        ckpt.arch = nlohmann::json::parse(header).get<NetworkArch>();
    } catch (const nlohmann::json::exception& e) {
        throw NetworkError("load_params: invalid header in " + path + ": " + e.what());
    }
    ckpt.arch.validate();

    ckpt.params.layers.resize(static_cast<std::size_t>(ckpt.arch.n_linear()));
    std::vector<float> buffer;
    for (int l = 0; l < ckpt.arch.n_linear(); ++l) {
        const auto [din, dout] = detail::layer_dims(ckpt.arch, l);
        auto& layer = ckpt.params.layers[static_cast<std::size_t>(l)];
        buffer.resize(static_cast<std::size_t>(dout) * (din + 1));
        in.read(reinterpret_cast<char*>(buffer.data()),
                static_cast<std::streamsize>(buffer.size() * sizeof(float)));
        if (!in) throw NetworkError("load_params: truncated weights in " + path);
        layer.weight.resize(dout, din);
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < dout; ++r)
            for (Eigen::Index c = 0; c < din; ++c) layer.weight(r, c) = buffer[k++];
        layer.bias.resize(dout);
        for (Eigen::Index i = 0; i < dout; ++i) layer.bias[i] = buffer[k++];
    }
    if (in.peek() != std::ifstream::traits_type::eof())
        throw NetworkError("load_params: trailing bytes in " + path);
    return ckpt;
}

/// Load against an expected architecture; mismatches are an explicit error.
inline NetworkParams load_params(const std::string& path, const NetworkArch& expected) {
    Checkpoint ckpt = load_params(path);
    if (!(ckpt.arch == expected))
        throw NetworkError("load_params: architecture mismatch in " + path);
    return std::move(ckpt.params);
}

} // namespace scsurro
