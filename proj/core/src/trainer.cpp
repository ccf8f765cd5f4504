#include "regroup/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "regroup/engine.hpp"
#include "regroup/error.hpp"

namespace regroup {

namespace {

void he_uniform(std::vector<double>& weights, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& w : weights) {
        w = rng.uniform(-bound, bound);
    }
}

Conv2d conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t padding) {
    Conv2d c;
    c.in_channels = in;
    c.out_channels = out;
    c.kernel_h = kernel;
    c.kernel_w = kernel;
    c.stride = 1;
    c.padding = padding;
    c.weights.assign(out * in * kernel * kernel, 0.0);
    c.bias.assign(out, 0.0);
    return c;
}

Linear linear(std::size_t in, std::size_t out) {
    Linear l;
    l.in_features = in;
    l.out_features = out;
    l.weights.assign(in * out, 0.0);
    l.bias.assign(out, 0.0);
    return l;
}

void sgd_step(NetworkModel& model, const ParameterGradients& grads, double scale) {
    auto& layers = model.mutable_layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto apply = [&](std::vector<double>& w, std::vector<double>& b) {
            for (std::size_t j = 0; j < w.size(); ++j) {
                w[j] -= scale * grads.weights[i][j];
            }
            for (std::size_t j = 0; j < b.size(); ++j) {
                b[j] -= scale * grads.bias[i][j];
            }
        };
        if (auto* c = std::get_if<Conv2d>(&layers[i])) {
            apply(c->weights, c->bias);
        } else if (auto* l = std::get_if<Linear>(&layers[i])) {
            apply(l->weights, l->bias);
        }
    }
}

} // namespace

void initialize_parameters(NetworkModel& model, Rng& rng) {
    for (auto& layer : model.mutable_layers()) {
        if (auto* c = std::get_if<Conv2d>(&layer)) {
            he_uniform(c->weights, c->in_channels * c->kernel_h * c->kernel_w, rng);
            std::fill(c->bias.begin(), c->bias.end(), 0.0);
        } else if (auto* l = std::get_if<Linear>(&layer)) {
            he_uniform(l->weights, l->in_features, rng);
            std::fill(l->bias.begin(), l->bias.end(), 0.0);
        }
    }
}

NetworkModel make_mnist_cnn(std::uint64_t seed) {
    NetworkModel model({1, 28, 28}, 10,
                       {conv(1, 8, 5, 0), Relu{}, MaxPool2d{2, 2}, conv(8, 16, 5, 0), Relu{}, MaxPool2d{2, 2},
                        Flatten{}, linear(256, 64), Relu{}, linear(64, 10)});
    Rng rng = Rng::stream(seed, 0);
    initialize_parameters(model, rng);
    return model;
}

NetworkModel make_cifar_cnn(std::uint64_t seed) {
    NetworkModel model({3, 32, 32}, 10,
                       {conv(3, 16, 3, 1), Relu{}, MaxPool2d{2, 2}, conv(16, 32, 3, 1), Relu{}, MaxPool2d{2, 2},
                        conv(32, 64, 3, 1), Relu{}, MaxPool2d{2, 2}, Flatten{}, linear(1024, 128), Relu{},
                        linear(128, 10)});
    Rng rng = Rng::stream(seed, 0);
    initialize_parameters(model, rng);
    return model;
}

NetworkModel train_sgd(NetworkModel model, const LabeledDataset& data, const TrainOptions& options) {
    if (data.empty()) {
        throw ValidationError("training set is empty");
    }
    if (options.batch_size == 0) {
        throw ValidationError("batch size must be positive");
    }
    if (options.epochs == 0) {
        return model;
    }
    std::vector<std::size_t> order(data.size());
    ParameterGradients grads = ParameterGradients::zeros_like(model);

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = Rng::stream(options.seed, epoch + 1);
        shuffle(order, rng);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            grads.set_zero();
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                const std::size_t label = data.label(idx);
                Activations acts = forward_all(model, data.image(idx));
                const auto& logits = acts.output().storage();
                const double loss = cross_entropy(logits, label);
                if (!std::isfinite(loss)) {
                    throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", sample " +
                                         std::to_string(idx));
                }
                loss_sum += loss;
                std::vector<double> dlogits = softmax(logits);
                if (static_cast<std::size_t>(std::max_element(dlogits.begin(), dlogits.end()) - dlogits.begin()) ==
                    label) {
                    ++correct;
                }
                dlogits[label] -= 1.0;
                backward(model, acts, dlogits, &grads);
            }
            sgd_step(model, grads, options.learning_rate / static_cast<double>(end - start));
        }
        if (options.on_epoch) {
            options.on_epoch({epoch + 1, loss_sum / static_cast<double>(data.size()),
                              static_cast<double>(correct) / static_cast<double>(data.size())});
        }
    }
    return model;
}

double accuracy(const NetworkModel& model, const LabeledDataset& data) {
    if (data.empty()) {
        return 0.0;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto probs = softmax(forward_logits(model, data.image(i)));
        const auto pred = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
        correct += pred == data.label(i) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

} // namespace regroup
