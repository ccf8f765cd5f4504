#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "regroup/dataset.hpp"
#include "regroup/network.hpp"
#include "regroup/rng.hpp"

namespace regroup {

/// He-uniform weights, zero biases, drawn in layer order from `rng`.
void initialize_parameters(NetworkModel& model, Rng& rng);

/// conv(1→8,5x5) relu pool conv(8→16,5x5) relu pool fc(256→64) relu fc(64→10)
/// for 1×28×28 inputs. Four votable layers.
NetworkModel make_mnist_cnn(std::uint64_t seed);

/// Three 3x3 conv blocks and two linear layers for 3×32×32 inputs.
NetworkModel make_cifar_cnn(std::uint64_t seed);

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
};

struct TrainOptions {
    std::size_t epochs = 5;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    std::function<void(const EpochStats&)> on_epoch;
};

/// Minibatch SGD on softmax cross-entropy. Sample order within an epoch comes
/// from a seeded shuffle and gradients are summed in sample order, so the
/// result is bitwise reproducible. Throws NumericalError if the loss diverges.
NetworkModel train_sgd(NetworkModel model, const LabeledDataset& data, const TrainOptions& options);

/// Fraction of samples whose softmax argmax equals the label.
double accuracy(const NetworkModel& model, const LabeledDataset& data);

} // namespace regroup
