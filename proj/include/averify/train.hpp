#pragma once

#include <cstdint>

#include "averify/dataset.hpp"
#include "averify/network.hpp"

namespace averify {

struct TrainOptions {
    std::size_t epochs = 10;
    double learning_rate = 0.1;
    std::size_t batch = 32;
    std::uint64_t seed = 1;
};

struct TrainResult {
    Network network;
    double train_accuracy = 0.0;
    double final_mean_loss = 0.0;
};

/// Minibatch gradient descent on cross-entropy. Deterministic given all
/// arguments: epoch shuffles come from Rng(seed) and updates are applied
/// in a fixed order. Throws if the loss goes non-finite.
TrainResult train(const Network& initial, const LabeledDataset& data, const TrainOptions& options);

double evaluate_accuracy(const Network& net, const LabeledDataset& data);

}  // namespace averify
