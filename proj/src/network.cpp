#include "averify/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "averify/rng.hpp"
#include "averify/tensor_io.hpp"

namespace averify {

std::vector<std::size_t> layer_output_shape(const LayerSpec& layer,
                                            const std::vector<std::size_t>& input) {
    if (std::holds_alternative<DenseLayer>(layer)) {
        const auto& d = std::get<DenseLayer>(layer);
        if (input.size() != 1 || input[0] != d.in) {
            throw std::invalid_argument("dense layer expects [" + std::to_string(d.in) +
                                        "], got " + shape_to_string(input));
        }
        return {d.out};
    }
    if (std::holds_alternative<Conv2dLayer>(layer)) {
        const auto& c = std::get<Conv2dLayer>(layer);
        if (input.size() != 3 || input[0] != c.in_channels) {
            throw std::invalid_argument("conv2d layer expects " + std::to_string(c.in_channels) +
                                        " input channels, got " + shape_to_string(input));
        }
        const std::size_t h = input[1], w = input[2];
        if (c.stride == 0) throw std::invalid_argument("conv2d stride must be positive");
        if (h + 2 * c.padding < c.kernel_h || w + 2 * c.padding < c.kernel_w ||
            (h + 2 * c.padding - c.kernel_h) % c.stride != 0 ||
            (w + 2 * c.padding - c.kernel_w) % c.stride != 0) {
            throw std::invalid_argument("conv2d layer has non-integral output size");
        }
        return {c.out_channels, (h + 2 * c.padding - c.kernel_h) / c.stride + 1,
                (w + 2 * c.padding - c.kernel_w) / c.stride + 1};
    }
    if (std::holds_alternative<MaxPoolLayer>(layer)) {
        const auto& m = std::get<MaxPoolLayer>(layer);
        if (input.size() != 3) throw std::invalid_argument("maxpool layer expects [C, H, W]");
        if (m.window == 0 || m.stride == 0) {
            throw std::invalid_argument("maxpool window and stride must be positive");
        }
        if (m.window > input[1] || m.window > input[2]) {
            throw std::invalid_argument("maxpool window larger than input");
        }
        return {input[0], (input[1] - m.window) / m.stride + 1,
                (input[2] - m.window) / m.stride + 1};
    }
    if (std::holds_alternative<FlattenLayer>(layer)) {
        return {shape_product(input)};
    }
    return input;  // relu
}

void NetworkSpec::validate() const {
    if (num_classes < 2) throw std::invalid_argument("network needs k >= 2 classes");
    if (input_shape.empty()) throw std::invalid_argument("network input shape is empty");
    for (std::size_t d : input_shape) {
        if (d == 0) throw std::invalid_argument("network input dimensions must be positive");
    }
    std::vector<std::size_t> shape = input_shape;
    for (const LayerSpec& layer : layers) shape = layer_output_shape(layer, shape);
    if (shape != std::vector<std::size_t>{num_classes}) {
        throw std::invalid_argument("network output shape " + shape_to_string(shape) +
                                    " != [" + std::to_string(num_classes) + "] logits");
    }
}

NetworkSpec NetworkSpec::named(const std::string& arch) {
    NetworkSpec spec;
    spec.input_shape = {1, 16, 16};
    spec.num_classes = 10;
    if (arch == "cnn-small") {
        spec.layers = {
            Conv2dLayer{1, 8, 3, 3, 1, 1},  ReluLayer{}, MaxPoolLayer{2, 2},
            Conv2dLayer{8, 16, 3, 3, 1, 1}, ReluLayer{}, MaxPoolLayer{2, 2},
            FlattenLayer{},                 DenseLayer{16 * 4 * 4, 10},
        };
    } else if (arch == "mlp-small") {
        spec.layers = {
            FlattenLayer{},
            DenseLayer{16 * 16, 64},
            ReluLayer{},
            DenseLayer{64, 10},
        };
    } else {
        throw std::invalid_argument("unknown architecture '" + arch +
                                    "' (expected cnn-small or mlp-small)");
    }
    spec.validate();
    return spec;
}

namespace {

bool is_parameterized(const LayerSpec& layer) {
    return std::holds_alternative<DenseLayer>(layer) || std::holds_alternative<Conv2dLayer>(layer);
}

// params[offsets[i]] = weights of layer i, params[offsets[i] + 1] = bias.
std::vector<std::size_t> param_offsets(const NetworkSpec& spec) {
    std::vector<std::size_t> offsets(spec.layers.size(), SIZE_MAX);
    std::size_t next = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (is_parameterized(spec.layers[i])) {
            offsets[i] = next;
            next += 2;
        }
    }
    return offsets;
}

Tensor apply_layer(const LayerSpec& layer, const Tensor& input, const Tensor* weights,
                   const Tensor* bias) {
    if (std::holds_alternative<DenseLayer>(layer)) return dense_forward(*weights, *bias, input);
    if (std::holds_alternative<Conv2dLayer>(layer)) {
        const auto& c = std::get<Conv2dLayer>(layer);
        return conv2d_forward(*weights, *bias, input, c.stride, c.padding);
    }
    if (std::holds_alternative<ReluLayer>(layer)) return relu(input);
    if (std::holds_alternative<MaxPoolLayer>(layer)) {
        const auto& m = std::get<MaxPoolLayer>(layer);
        return maxpool2d(input, m.window, m.stride);
    }
    return flatten(input);
}

void check_params_match(const Network& net) {
    const auto offsets = param_offsets(net.spec);
    std::size_t expected = 0;
    for (std::size_t off : offsets) {
        if (off != SIZE_MAX) expected += 2;
    }
    if (net.params.size() != expected) {
        throw std::invalid_argument("network has " + std::to_string(net.params.size()) +
                                    " parameter tensors, spec expects " + std::to_string(expected));
    }
}

void check_input_shape(const NetworkSpec& spec, const Tensor& x) {
    if (x.shape != spec.input_shape) {
        throw std::invalid_argument("input shape " + shape_to_string(x.shape) +
                                    " does not match network input " +
                                    shape_to_string(spec.input_shape));
    }
}

}  // namespace

Tensor Network::logits(const Tensor& x) const {
    check_input_shape(spec, x);
    check_params_match(*this);
    const auto offsets = param_offsets(spec);
    Tensor act = x;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Tensor* w = offsets[i] == SIZE_MAX ? nullptr : &params[offsets[i]];
        const Tensor* b = offsets[i] == SIZE_MAX ? nullptr : &params[offsets[i] + 1];
        act = apply_layer(spec.layers[i], act, w, b);
    }
    return act;
}

ProbabilityVector Network::forward(const ImageTensor& x) const { return softmax(logits(x.tensor())); }

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Network net;
    net.spec = spec;
    net.provenance = "seed=" + std::to_string(seed);

    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (!is_parameterized(spec.layers[i])) continue;
        Rng rng(Rng::mix(seed, i));
        if (std::holds_alternative<DenseLayer>(spec.layers[i])) {
            const auto& d = std::get<DenseLayer>(spec.layers[i]);
            const double scale = std::sqrt(3.0 / static_cast<double>(d.in));
            Tensor w({d.out, d.in});
            for (double& v : w.data) v = rng.uniform(-scale, scale);
            net.params.push_back(std::move(w));
            net.params.emplace_back(std::vector<std::size_t>{d.out}, 0.0);
        } else {
            const auto& c = std::get<Conv2dLayer>(spec.layers[i]);
            const std::size_t fan_in = c.in_channels * c.kernel_h * c.kernel_w;
            const double scale = std::sqrt(3.0 / static_cast<double>(fan_in));
            Tensor w({c.out_channels, c.in_channels, c.kernel_h, c.kernel_w});
            for (double& v : w.data) v = rng.uniform(-scale, scale);
            net.params.push_back(std::move(w));
            net.params.emplace_back(std::vector<std::size_t>{c.out_channels}, 0.0);
        }
    }
    return net;
}

namespace {

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

DenseGrads dense_backward(const Tensor& weights, const Tensor& input, const Tensor& grad_out,
                          bool with_params) {
    const std::size_t out_n = weights.shape[0];
    const std::size_t in_n = weights.shape[1];
    DenseGrads g{Tensor({in_n}), Tensor(), Tensor()};
    for (std::size_t j = 0; j < out_n; ++j) {
        const double go = grad_out.data[j];
        const double* w = &weights.data[j * in_n];
        for (std::size_t i = 0; i < in_n; ++i) g.input.data[i] += w[i] * go;
    }
    if (with_params) {
        g.weights = Tensor(weights.shape);
        g.bias = Tensor({out_n});
        for (std::size_t j = 0; j < out_n; ++j) {
            const double go = grad_out.data[j];
            g.bias.data[j] = go;
            double* gw = &g.weights.data[j * in_n];
            for (std::size_t i = 0; i < in_n; ++i) gw[i] = go * input.data[i];
        }
    }
    return g;
}

struct ConvGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};

ConvGrads conv_backward(const Conv2dLayer& c, const Tensor& kernels, const Tensor& input,
                        const Tensor& grad_out, bool with_params) {
    const std::size_t h = input.shape[1], w = input.shape[2];
    const std::size_t out_h = grad_out.shape[1], out_w = grad_out.shape[2];
    ConvGrads g{Tensor(input.shape), Tensor(), Tensor()};
    if (with_params) {
        g.kernels = Tensor(kernels.shape);
        g.bias = Tensor({c.out_channels});
    }
    for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const double go = grad_out.at3(oc, oy, ox);
                if (with_params) g.bias.data[oc] += go;
                for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
                    for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy * c.stride + ky) -
                            static_cast<std::ptrdiff_t>(c.padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * c.stride + kx) -
                                static_cast<std::ptrdiff_t>(c.padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            const auto uy = static_cast<std::size_t>(iy);
                            const auto ux = static_cast<std::size_t>(ix);
                            g.input.at3(ic, uy, ux) += go * kernels.at4(oc, ic, ky, kx);
                            if (with_params) {
                                g.kernels.at4(oc, ic, ky, kx) += go * input.at3(ic, uy, ux);
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    Tensor g(input.shape);
    // Subgradient at exactly zero is taken as zero.
    for (std::size_t i = 0; i < input.data.size(); ++i) {
        g.data[i] = input.data[i] > 0.0 ? grad_out.data[i] : 0.0;
    }
    return g;
}

Tensor maxpool_backward(const MaxPoolLayer& m, const Tensor& input, const Tensor& grad_out) {
    Tensor g(input.shape);
    const std::size_t c = input.shape[0];
    const std::size_t out_h = grad_out.shape[1], out_w = grad_out.shape[2];
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                // Route to the first maximum in scan order; ties are rare
                // and this matches the forward scan deterministically.
                double best = input.at3(ch, oy * m.stride, ox * m.stride);
                std::size_t by = oy * m.stride, bx = ox * m.stride;
                for (std::size_t ky = 0; ky < m.window; ++ky) {
                    for (std::size_t kx = 0; kx < m.window; ++kx) {
                        const double v = input.at3(ch, oy * m.stride + ky, ox * m.stride + kx);
                        if (v > best) {
                            best = v;
                            by = oy * m.stride + ky;
                            bx = ox * m.stride + kx;
                        }
                    }
                }
                g.at3(ch, by, bx) += grad_out.at3(ch, oy, ox);
            }
        }
    }
    return g;
}

}  // namespace

LossGradients loss_gradients(const Network& net, const Tensor& x, std::size_t target_class,
                             bool with_param_grads) {
    check_input_shape(net.spec, x);
    check_params_match(net);
    if (target_class >= net.spec.num_classes) {
        throw std::invalid_argument("target class " + std::to_string(target_class) +
                                    " out of range for k = " +
                                    std::to_string(net.spec.num_classes));
    }
    const auto offsets = param_offsets(net.spec);

    // Forward, keeping the input to every layer.
    std::vector<Tensor> acts;
    acts.reserve(net.spec.layers.size() + 1);
    acts.push_back(x);
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        const Tensor* w = offsets[i] == SIZE_MAX ? nullptr : &net.params[offsets[i]];
        const Tensor* b = offsets[i] == SIZE_MAX ? nullptr : &net.params[offsets[i] + 1];
        acts.push_back(apply_layer(net.spec.layers[i], acts.back(), w, b));
    }

    LossGradients result;
    ProbabilityVector probs = softmax(acts.back());
    result.probs = probs.values();
    result.loss = cross_entropy(probs, target_class);
    if (with_param_grads) result.param_grads.assign(net.params.size(), Tensor());

    // d(loss)/d(logits) for cross-entropy over softmax.
    Tensor grad(acts.back().shape);
    for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] = probs[i];
    grad.data[target_class] -= 1.0;

    for (std::size_t ri = net.spec.layers.size(); ri-- > 0;) {
        const LayerSpec& layer = net.spec.layers[ri];
        const Tensor& input = acts[ri];
        if (std::holds_alternative<DenseLayer>(layer)) {
            DenseGrads g = dense_backward(net.params[offsets[ri]], input, grad, with_param_grads);
            if (with_param_grads) {
                result.param_grads[offsets[ri]] = std::move(g.weights);
                result.param_grads[offsets[ri] + 1] = std::move(g.bias);
            }
            grad = std::move(g.input);
        } else if (std::holds_alternative<Conv2dLayer>(layer)) {
            const auto& c = std::get<Conv2dLayer>(layer);
            ConvGrads g = conv_backward(c, net.params[offsets[ri]], input, grad, with_param_grads);
            if (with_param_grads) {
                result.param_grads[offsets[ri]] = std::move(g.kernels);
                result.param_grads[offsets[ri] + 1] = std::move(g.bias);
            }
            grad = std::move(g.input);
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            grad = relu_backward(input, grad);
        } else if (std::holds_alternative<MaxPoolLayer>(layer)) {
            grad = maxpool_backward(std::get<MaxPoolLayer>(layer), input, grad);
        } else {
            grad = Tensor(input.shape, std::move(grad.data));
        }
    }

    require_finite(grad, "input gradient");
    if (with_param_grads) {
        for (const Tensor& g : result.param_grads) require_finite(g, "parameter gradient");
    }
    result.input_grad = std::move(grad);
    return result;
}

Tensor input_gradient(const Network& net, const ImageTensor& x, std::size_t target_class) {
    return loss_gradients(net, x.tensor(), target_class, false).input_grad;
}

// --- NNET v1 ------------------------------------------------------------

namespace {

constexpr std::uint32_t kNnetVersion = 1;

enum class LayerKind : std::uint32_t { dense = 0, conv2d = 1, relu = 2, maxpool = 3, flatten = 4 };

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("model file truncated");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_model(const Network& net, const std::filesystem::path& path) {
    net.spec.validate();
    check_params_match(net);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");

    os.write("NNET", 4);
    write_u32(os, kNnetVersion);
    write_u32(os, static_cast<std::uint32_t>(net.spec.num_classes));
    write_u32(os, static_cast<std::uint32_t>(net.spec.input_shape.size()));
    for (std::size_t d : net.spec.input_shape) write_u32(os, static_cast<std::uint32_t>(d));
    write_u32(os, static_cast<std::uint32_t>(net.spec.layers.size()));
    for (const LayerSpec& layer : net.spec.layers) {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            write_u32(os, static_cast<std::uint32_t>(LayerKind::dense));
            write_u32(os, static_cast<std::uint32_t>(d->in));
            write_u32(os, static_cast<std::uint32_t>(d->out));
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
            write_u32(os, static_cast<std::uint32_t>(LayerKind::conv2d));
            write_u32(os, static_cast<std::uint32_t>(c->in_channels));
            write_u32(os, static_cast<std::uint32_t>(c->out_channels));
            write_u32(os, static_cast<std::uint32_t>(c->kernel_h));
            write_u32(os, static_cast<std::uint32_t>(c->kernel_w));
            write_u32(os, static_cast<std::uint32_t>(c->stride));
            write_u32(os, static_cast<std::uint32_t>(c->padding));
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            write_u32(os, static_cast<std::uint32_t>(LayerKind::relu));
        } else if (const auto* m = std::get_if<MaxPoolLayer>(&layer)) {
            write_u32(os, static_cast<std::uint32_t>(LayerKind::maxpool));
            write_u32(os, static_cast<std::uint32_t>(m->window));
            write_u32(os, static_cast<std::uint32_t>(m->stride));
        } else {
            write_u32(os, static_cast<std::uint32_t>(LayerKind::flatten));
        }
    }
    write_u32(os, static_cast<std::uint32_t>(net.provenance.size()));
    os.write(net.provenance.data(), static_cast<std::streamsize>(net.provenance.size()));
    write_u32(os, static_cast<std::uint32_t>(net.params.size()));
    for (const Tensor& t : net.params) write_tnsr(t, os);
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

Network load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());

    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "NNET", 4) != 0) {
        throw std::runtime_error(path.string() + ": bad model magic");
    }
    const std::uint32_t version = read_u32(is);
    if (version != kNnetVersion) {
        throw std::runtime_error(path.string() + ": unsupported model version " +
                                 std::to_string(version));
    }

    Network net;
    net.spec.num_classes = read_u32(is);
    const std::uint32_t input_rank = read_u32(is);
    if (input_rank == 0 || input_rank > 8) throw std::runtime_error("implausible input rank");
    for (std::uint32_t i = 0; i < input_rank; ++i) net.spec.input_shape.push_back(read_u32(is));

    const std::uint32_t layer_count = read_u32(is);
    if (layer_count > 1024) throw std::runtime_error("implausible layer count");
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        switch (static_cast<LayerKind>(read_u32(is))) {
            case LayerKind::dense: {
                DenseLayer d;
                d.in = read_u32(is);
                d.out = read_u32(is);
                net.spec.layers.emplace_back(d);
                break;
            }
            case LayerKind::conv2d: {
                Conv2dLayer c;
                c.in_channels = read_u32(is);
                c.out_channels = read_u32(is);
                c.kernel_h = read_u32(is);
                c.kernel_w = read_u32(is);
                c.stride = read_u32(is);
                c.padding = read_u32(is);
                net.spec.layers.emplace_back(c);
                break;
            }
            case LayerKind::relu:
                net.spec.layers.emplace_back(ReluLayer{});
                break;
            case LayerKind::maxpool: {
                MaxPoolLayer m;
                m.window = read_u32(is);
                m.stride = read_u32(is);
                net.spec.layers.emplace_back(m);
                break;
            }
            case LayerKind::flatten:
                net.spec.layers.emplace_back(FlattenLayer{});
                break;
            default:
                throw std::runtime_error(path.string() + ": unknown layer kind");
        }
    }

    const std::uint32_t prov_len = read_u32(is);
    net.provenance.resize(prov_len);
    if (prov_len > 0 && !is.read(net.provenance.data(), prov_len)) {
        throw std::runtime_error("model file truncated in provenance");
    }

    const std::uint32_t param_count = read_u32(is);
    for (std::uint32_t i = 0; i < param_count; ++i) net.params.push_back(read_tnsr(is));

    net.spec.validate();
    check_params_match(net);

    // Parameter shapes must match the spec.
    const auto offsets = param_offsets(net.spec);
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        if (offsets[i] == SIZE_MAX) continue;
        std::vector<std::size_t> want_w, want_b;
        if (const auto* d = std::get_if<DenseLayer>(&net.spec.layers[i])) {
            want_w = {d->out, d->in};
            want_b = {d->out};
        } else {
            const auto& c = std::get<Conv2dLayer>(net.spec.layers[i]);
            want_w = {c.out_channels, c.in_channels, c.kernel_h, c.kernel_w};
            want_b = {c.out_channels};
        }
        if (net.params[offsets[i]].shape != want_w || net.params[offsets[i] + 1].shape != want_b) {
            throw std::runtime_error(path.string() + ": parameter shape mismatch at layer " +
                                     std::to_string(i));
        }
    }
    return net;
}

}  // namespace averify
