#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "averify/ops.hpp"
#include "averify/tensor.hpp"

namespace averify {

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;

    bool operator==(const DenseLayer&) const = default;
};

struct Conv2dLayer {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    bool operator==(const Conv2dLayer&) const = default;
};

struct ReluLayer {
    bool operator==(const ReluLayer&) const = default;
};

struct MaxPoolLayer {
    std::size_t window = 0;
    std::size_t stride = 0;

    bool operator==(const MaxPoolLayer&) const = default;
};

struct FlattenLayer {
    bool operator==(const FlattenLayer&) const = default;
};

using LayerSpec = std::variant<DenseLayer, Conv2dLayer, ReluLayer, MaxPoolLayer, FlattenLayer>;

/// Output shape of one layer given its input shape; throws on mismatch.
std::vector<std::size_t> layer_output_shape(const LayerSpec& layer,
                                            const std::vector<std::size_t>& input);

/// Ordered layer list plus input shape and class count. validate() checks
/// that adjacent shapes chain and the final layer yields k >= 2 logits.
struct NetworkSpec {
    std::vector<LayerSpec> layers;
    std::vector<std::size_t> input_shape;  // [channels, height, width]
    std::size_t num_classes = 0;

    void validate() const;

    /// Builtin desk-scale architectures at 16x16x1 input, 10 classes:
    /// "cnn-small": conv-relu-pool-conv-relu-pool-flatten-dense
    /// "mlp-small": flatten-dense-relu-dense
    static NetworkSpec named(const std::string& arch);

    bool operator==(const NetworkSpec& other) const = default;
};

/// Classifier: spec plus one weights/bias tensor pair per parameterized
/// layer, in layer order. Immutable in use; training returns a new value.
struct Network {
    NetworkSpec spec;
    std::vector<Tensor> params;
    std::string provenance;

    Tensor logits(const Tensor& x) const;
    ProbabilityVector forward(const ImageTensor& x) const;
};

/// Deterministic initialization: weights uniform in [-s, s) with
/// s = sqrt(3 / fan_in) (dense fan_in = in, conv fan_in = inC*kH*kW),
/// biases zero. Draws come from Rng(mix(seed, layer_index)) in row-major
/// order, so identical (spec, seed) is bit-identical.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

/// Loss, probabilities and exact reverse-mode gradients of
/// cross_entropy(softmax(net(x)), target_class).
struct LossGradients {
    double loss = 0.0;
    std::vector<double> probs;
    Tensor input_grad;
    std::vector<Tensor> param_grads;  // empty unless requested
};

LossGradients loss_gradients(const Network& net, const Tensor& x, std::size_t target_class,
                             bool with_param_grads);

/// Gradient of the class loss with respect to the input image.
Tensor input_gradient(const Network& net, const ImageTensor& x, std::size_t target_class);

/// "NNET v1" model file: magic "NNET", u32 version, class count, input
/// shape, layer descriptors, provenance string, then parameter tensors as
/// TNSR blocks. save -> load -> save is byte-identical.
void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

}  // namespace averify
