#include "averify/train.hpp"

#include <cmath>
#include <numeric>

#include "averify/rng.hpp"

namespace averify {

TrainResult train(const Network& initial, const LabeledDataset& data,
                  const TrainOptions& options) {
    data.validate();
    initial.spec.validate();
    if (data.num_classes != initial.spec.num_classes) {
        throw std::invalid_argument("dataset has k = " + std::to_string(data.num_classes) +
                                    ", network expects k = " +
                                    std::to_string(initial.spec.num_classes));
    }
    if (data.images[0].tensor().shape != initial.spec.input_shape) {
        throw std::invalid_argument("dataset image shape " +
                                    shape_to_string(data.images[0].tensor().shape) +
                                    " does not match network input " +
                                    shape_to_string(initial.spec.input_shape));
    }
    if (options.batch == 0) throw std::invalid_argument("batch size must be positive");
    if (!std::isfinite(options.learning_rate) || options.learning_rate < 0.0) {
        throw std::invalid_argument("learning rate must be finite and non-negative");
    }

    TrainResult result;
    result.network = initial;
    Network& net = result.network;
    Rng rng(options.seed);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += options.batch) {
            const std::size_t end = std::min(order.size(), start + options.batch);
            std::vector<Tensor> grad_sum(net.params.size());
            for (std::size_t pos = start; pos < end; ++pos) {
                const std::size_t idx = order[pos];
                LossGradients g =
                    loss_gradients(net, data.images[idx].tensor(), data.labels[idx], true);
                epoch_loss += g.loss;
                for (std::size_t p = 0; p < net.params.size(); ++p) {
                    if (grad_sum[p].size() == 0) {
                        grad_sum[p] = std::move(g.param_grads[p]);
                    } else {
                        for (std::size_t i = 0; i < grad_sum[p].size(); ++i) {
                            grad_sum[p].data[i] += g.param_grads[p].data[i];
                        }
                    }
                }
            }
            const double step = options.learning_rate / static_cast<double>(end - start);
            for (std::size_t p = 0; p < net.params.size(); ++p) {
                for (std::size_t i = 0; i < net.params[p].size(); ++i) {
                    net.params[p].data[i] -= step * grad_sum[p].data[i];
                }
            }
        }
        if (!std::isfinite(epoch_loss)) {
            throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
        }
        result.final_mean_loss = epoch_loss / static_cast<double>(data.size());
    }

    result.train_accuracy = evaluate_accuracy(net, data);
    return result;
}

double evaluate_accuracy(const Network& net, const LabeledDataset& data) {
    data.validate();
    if (data.size() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (net.forward(data.images[i]).argmax() == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace averify
