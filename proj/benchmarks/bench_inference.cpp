#include <benchmark/benchmark.h>

#include "regroup/engine.hpp"
#include "regroup/regroup.hpp"
#include "regroup/trainer.hpp"

using namespace regroup;

namespace {

Tensor sample_image(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x(shape, 0.0);
    for (double& v : x.storage()) {
        v = rng.uniform();
    }
    return x;
}

/// Every class row is the signature of one random image; timing only needs the shapes.
GenerativeEnsemble sample_ensemble(const NetworkModel& model) {
    std::vector<LayerClassifier> layers;
    const FeatureTrace t = forward_with_trace(model, sample_image(model.input_shape(), 3));
    for (std::size_t l = 0; l < t.preactivations.size(); ++l) {
        const auto sig = layer_signature(t.preactivations[l], 1e-6, t.layer_indices[l]);
        LayerClassifier lc;
        lc.layer_index = t.layer_indices[l];
        lc.dim = sig.positive.size();
        for (std::size_t y = 0; y < model.num_classes(); ++y) {
            lc.positive.insert(lc.positive.end(), sig.positive.begin(), sig.positive.end());
            lc.negative.insert(lc.negative.end(), sig.negative.begin(), sig.negative.end());
        }
        layers.push_back(std::move(lc));
    }
    return GenerativeEnsemble(model.num_classes(), 1e-6, std::move(layers));
}

NetworkModel model_for(const benchmark::State& state) {
    return state.range(0) == 0 ? make_mnist_cnn(1) : make_cifar_cnn(1);
}

void BM_forward_logits(benchmark::State& state) {
    const NetworkModel model = model_for(state);
    const Tensor x = sample_image(model.input_shape(), 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward_logits(model, x));
    }
}

void BM_forward_with_trace(benchmark::State& state) {
    const NetworkModel model = model_for(state);
    const Tensor x = sample_image(model.input_shape(), 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward_with_trace(model, x));
    }
}

void BM_regroup_predict(benchmark::State& state) {
    const NetworkModel model = model_for(state);
    const GenerativeEnsemble ensemble = sample_ensemble(model);
    const FeatureTrace t = forward_with_trace(model, sample_image(model.input_shape(), 7));
    for (auto _ : state) {
        benchmark::DoNotOptimize(regroup_predict(ensemble, t, ensemble.num_layers()));
    }
}

void BM_input_gradient(benchmark::State& state) {
    const NetworkModel model = model_for(state);
    const Tensor x = sample_image(model.input_shape(), 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(input_gradient(model, x, 3));
    }
}

} // namespace

// Arg 0: MNIST fixture CNN, arg 1: CIFAR fixture CNN.
BENCHMARK(BM_forward_logits)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_forward_with_trace)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_regroup_predict)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_input_gradient)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
