#include "regroup/regroup.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "regroup/error.hpp"

namespace regroup {

namespace {

constexpr double kPmfTolerance = 1e-9;

void validate_pmf(std::span<const double> row, const std::string& what) {
    double total = 0.0;
    for (double v : row) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ValidationError(what + " has a non-positive or non-finite entry");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > kPmfTolerance) {
        throw ValidationError(what + " sums to " + std::to_string(total) + ", not 1");
    }
}

void normalize(std::vector<double>& v) {
    double total = 0.0;
    for (double x : v) {
        total += x;
    }
    for (double& x : v) {
        x /= total;
    }
}

std::size_t argmax_first(std::span<const std::size_t> scores) {
    return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

} // namespace

LayerSignature layer_signature(const Tensor& preactivation, double delta, std::size_t layer_index) {
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        throw ValidationError("delta must be positive, got " + std::to_string(delta));
    }
    if (preactivation.size() == 0) {
        throw ValidationError("empty pre-activation tensor");
    }
    // Feature maps are the leading axis; every remaining axis is spatial.
    const std::size_t features = preactivation.rank() >= 2 ? preactivation.dim(0) : preactivation.size();
    const std::size_t spatial = preactivation.size() / features;

    LayerSignature sig;
    sig.layer_index = layer_index;
    sig.positive.assign(features, 0.0);
    sig.negative.assign(features, 0.0);
    const double* phi = preactivation.data();
    for (std::size_t i = 0; i < features; ++i) {
        double pos = 0.0;
        double neg = 0.0;
        for (std::size_t s = 0; s < spatial; ++s) {
            const double v = phi[i * spatial + s];
            pos += std::max(0.0, v);
            neg += std::max(0.0, -v);
        }
        sig.positive[i] = pos + delta;
        sig.negative[i] = neg + delta;
    }
    normalize(sig.positive);
    normalize(sig.negative);
    return sig;
}

std::vector<LayerSignature> trace_signatures(const FeatureTrace& trace, double delta, std::size_t first_layer) {
    std::vector<LayerSignature> out;
    for (std::size_t l = first_layer; l < trace.preactivations.size(); ++l) {
        out.push_back(layer_signature(trace.preactivations[l], delta, trace.layer_indices[l]));
    }
    return out;
}

double kl_divergence(std::span<const double> model_pmf, std::span<const double> test_pmf) {
    if (model_pmf.size() != test_pmf.size()) {
        throw ValidationError("KL divergence of PMFs with lengths " + std::to_string(model_pmf.size()) + " and " +
                              std::to_string(test_pmf.size()));
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < model_pmf.size(); ++i) {
        const double c = model_pmf[i];
        const double p = test_pmf[i];
        if (!(c > 0.0) || !(p > 0.0)) {
            throw ValidationError("KL divergence requires strictly positive PMF entries");
        }
        kl += c * std::log(c / p);
    }
    return kl;
}

GenerativeEnsemble::GenerativeEnsemble(std::size_t num_classes, double delta, std::vector<LayerClassifier> layers)
    : num_classes_(num_classes), delta_(delta), layers_(std::move(layers)) {
    if (num_classes_ == 0) {
        throw ValidationError("ensemble needs at least one class");
    }
    if (!(delta_ > 0.0) || !std::isfinite(delta_)) {
        throw ValidationError("ensemble delta must be positive");
    }
    if (layers_.empty()) {
        throw ValidationError("ensemble has no layers");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.dim == 0 || layer.positive.size() != num_classes_ * layer.dim ||
            layer.negative.size() != num_classes_ * layer.dim) {
            throw ValidationError("ensemble layer " + std::to_string(l) + " has inconsistent extents");
        }
        if (l > 0 && layer.layer_index <= layers_[l - 1].layer_index) {
            throw ValidationError("ensemble layer indices must be strictly increasing");
        }
        for (std::size_t y = 0; y < num_classes_; ++y) {
            const std::string where = "ensemble layer " + std::to_string(l) + " class " + std::to_string(y);
            validate_pmf(layer.positive_row(y), where + " positive row");
            validate_pmf(layer.negative_row(y), where + " negative row");
        }
    }
}

void GenerativeEnsemble::set_selected_k(std::optional<std::size_t> k) {
    if (k && (*k < 1 || *k > layers_.size())) {
        throw ValidationError("k = " + std::to_string(*k) + " outside 1.." + std::to_string(layers_.size()));
    }
    selected_k_ = k;
}

bool GenerativeEnsemble::contains_image(std::span<const float> pixels) const {
    return std::binary_search(member_digests.begin(), member_digests.end(), image_digest(pixels));
}

std::uint64_t image_digest(std::span<const float> pixels) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (float v : pixels) {
        unsigned char bytes[sizeof(float)];
        std::memcpy(bytes, &v, sizeof(float));
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

GenerativeEnsemble build_ensemble(const NetworkModel& model, const LabeledDataset& train, std::size_t quota,
                                  double delta) {
    if (quota < 1) {
        throw ValidationError("per-class quota must be >= 1");
    }
    if (!(delta > 0.0)) {
        throw ValidationError("delta must be positive, got " + std::to_string(delta));
    }
    const std::size_t num_classes = model.num_classes();
    const std::size_t num_layers = model.num_votable();

    struct Member {
        std::size_t index;
        double probability;
        std::vector<LayerSignature> signatures;
    };
    std::vector<std::vector<Member>> selected(num_classes);
    std::size_t full = 0;
    for (std::size_t i = 0; i < train.size() && full < num_classes; ++i) {
        const std::size_t label = train.label(i);
        if (label >= num_classes) {
            throw ValidationError("sample " + std::to_string(i) + " has label " + std::to_string(label) +
                                  " outside the model's " + std::to_string(num_classes) + " classes");
        }
        if (selected[label].size() >= quota) {
            continue;
        }
        FeatureTrace trace = forward_with_trace(model, train.image(i));
        if (trace.predicted_class() != label) {
            continue;
        }
        selected[label].push_back({i, trace.probabilities[label], trace_signatures(trace, delta)});
        if (selected[label].size() == quota) {
            ++full;
        }
    }

    std::string deficient;
    for (std::size_t y = 0; y < num_classes; ++y) {
        if (selected[y].empty()) {
            deficient += (deficient.empty() ? "" : ", ") + std::to_string(y);
        }
    }
    if (!deficient.empty()) {
        throw ValidationError("no correctly classified samples for classes: " + deficient);
    }

    std::vector<LayerClassifier> layers(num_layers);
    const auto& shapes = model.layer_output_shapes();
    for (std::size_t l = 0; l < num_layers; ++l) {
        const std::size_t index = model.votable_layers()[l];
        const Shape& shape = shapes[index];
        layers[l].layer_index = index;
        layers[l].dim = shape.size() >= 2 ? shape[0] : shape_volume(shape);
        layers[l].positive.assign(num_classes * layers[l].dim, 0.0);
        layers[l].negative.assign(num_classes * layers[l].dim, 0.0);
    }

    std::vector<std::vector<MixtureComponent>> members(num_classes);
    std::vector<std::uint64_t> digests;
    std::vector<std::string> warnings;
    for (std::size_t y = 0; y < num_classes; ++y) {
        if (selected[y].size() < quota) {
            warnings.push_back("class " + std::to_string(y) + " has " + std::to_string(selected[y].size()) +
                               " of " + std::to_string(quota) + " requested samples");
        }
        double total = 0.0;
        for (const auto& m : selected[y]) {
            total += m.probability;
        }
        for (const auto& m : selected[y]) {
            const double lambda = m.probability / total;
            members[y].push_back({m.index, lambda});
            digests.push_back(image_digest(train.raw_image(m.index)));
            for (std::size_t l = 0; l < num_layers; ++l) {
                const std::size_t d = layers[l].dim;
                double* pos = layers[l].positive.data() + y * d;
                double* neg = layers[l].negative.data() + y * d;
                for (std::size_t i = 0; i < d; ++i) {
                    pos[i] += lambda * m.signatures[l].positive[i];
                    neg[i] += lambda * m.signatures[l].negative[i];
                }
            }
        }
    }

    GenerativeEnsemble ensemble(num_classes, delta, std::move(layers));
    ensemble.members = std::move(members);
    std::sort(digests.begin(), digests.end());
    ensemble.member_digests = std::move(digests);
    ensemble.warnings = std::move(warnings);
    return ensemble;
}

std::vector<std::size_t> ascending_ranks(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<std::size_t> ranks(scores.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        ranks[order[pos]] = pos + 1;
    }
    return ranks;
}

std::pair<RankPreference, RankPreference> rank_layer(const GenerativeEnsemble& ensemble, std::size_t layer,
                                                     const LayerSignature& signature) {
    if (layer >= ensemble.num_layers()) {
        throw ValidationError("layer " + std::to_string(layer) + " is not a votable layer of the ensemble (" +
                              std::to_string(ensemble.num_layers()) + " layers)");
    }
    const auto& classifier = ensemble.layers()[layer];
    if (signature.positive.size() != classifier.dim || signature.negative.size() != classifier.dim) {
        throw ValidationError("signature dimension " + std::to_string(signature.positive.size()) +
                              " does not match ensemble layer dimension " + std::to_string(classifier.dim));
    }
    const std::size_t m = ensemble.num_classes();
    std::vector<double> pos_kl(m);
    std::vector<double> neg_kl(m);
    for (std::size_t y = 0; y < m; ++y) {
        pos_kl[y] = kl_divergence(classifier.positive_row(y), signature.positive);
        neg_kl[y] = kl_divergence(classifier.negative_row(y), signature.negative);
    }
    return {RankPreference{layer, Sign::positive, ascending_ranks(pos_kl)},
            RankPreference{layer, Sign::negative, ascending_ranks(neg_kl)}};
}

std::string mode_name(VoteMode mode) {
    switch (mode) {
    case VoteMode::pos: return "pos";
    case VoteMode::neg: return "neg";
    case VoteMode::both: return "both";
    }
    return "unknown";
}

VoteMode parse_mode(const std::string& name) {
    if (name == "pos") {
        return VoteMode::pos;
    }
    if (name == "neg") {
        return VoteMode::neg;
    }
    if (name == "both") {
        return VoteMode::both;
    }
    throw ValidationError("unknown vote mode '" + name + "' (expected pos, neg or both)");
}

std::vector<std::size_t> borda_layer(const RankPreference& positive, const RankPreference& negative,
                                     std::size_t num_classes, VoteMode mode) {
    if (positive.ranks.size() != num_classes || negative.ranks.size() != num_classes) {
        throw ValidationError("rank vectors do not cover " + std::to_string(num_classes) + " classes");
    }
    std::vector<std::size_t> scores(num_classes, 0);
    for (std::size_t y = 0; y < num_classes; ++y) {
        if (mode != VoteMode::neg) {
            scores[y] += num_classes - positive.ranks[y];
        }
        if (mode != VoteMode::pos) {
            scores[y] += num_classes - negative.ranks[y];
        }
    }
    return scores;
}

LayerVotes layer_votes(const GenerativeEnsemble& ensemble, const FeatureTrace& trace, std::size_t first_layer) {
    const std::size_t n = ensemble.num_layers();
    if (trace.preactivations.size() != n) {
        throw ValidationError("trace has " + std::to_string(trace.preactivations.size()) +
                              " votable layers, ensemble has " + std::to_string(n));
    }
    LayerVotes votes;
    votes.num_classes = ensemble.num_classes();
    votes.positive.resize(n);
    votes.negative.resize(n);
    for (std::size_t l = first_layer; l < n; ++l) {
        if (trace.layer_indices[l] != ensemble.layers()[l].layer_index) {
            throw ValidationError("trace layer " + std::to_string(trace.layer_indices[l]) +
                                  " does not match ensemble layer " +
                                  std::to_string(ensemble.layers()[l].layer_index));
        }
        const LayerSignature sig = layer_signature(trace.preactivations[l], ensemble.delta(), trace.layer_indices[l]);
        const auto [pos, neg] = rank_layer(ensemble, l, sig);
        votes.positive[l] = borda_layer(pos, neg, votes.num_classes, VoteMode::pos);
        votes.negative[l] = borda_layer(pos, neg, votes.num_classes, VoteMode::neg);
    }
    return votes;
}

bool BordaTally::in_top(std::size_t label, std::size_t n) const {
    const std::size_t limit = std::min(n, ordering.size());
    return std::find(ordering.begin(), ordering.begin() + static_cast<std::ptrdiff_t>(limit), label) !=
           ordering.begin() + static_cast<std::ptrdiff_t>(limit);
}

BordaTally aggregate_votes(const LayerVotes& votes, std::size_t k, VoteMode mode) {
    const std::size_t n = votes.positive.size();
    if (k < 1 || k > n) {
        throw ValidationError("k = " + std::to_string(k) + " outside 1.." + std::to_string(n));
    }
    BordaTally tally;
    tally.k = k;
    tally.mode = mode;
    tally.first_layer = n - k;
    tally.scores.assign(votes.num_classes, 0);
    for (std::size_t l = n - k; l < n; ++l) {
        if (votes.positive[l].size() != votes.num_classes) {
            throw ValidationError("votes for layer " + std::to_string(l) + " were not computed");
        }
        for (std::size_t y = 0; y < votes.num_classes; ++y) {
            if (mode != VoteMode::neg) {
                tally.scores[y] += votes.positive[l][y];
            }
            if (mode != VoteMode::pos) {
                tally.scores[y] += votes.negative[l][y];
            }
        }
    }
    tally.ordering.resize(votes.num_classes);
    std::iota(tally.ordering.begin(), tally.ordering.end(), std::size_t{0});
    std::stable_sort(tally.ordering.begin(), tally.ordering.end(),
                     [&](std::size_t a, std::size_t b) { return tally.scores[a] > tally.scores[b]; });
    tally.prediction = tally.ordering.front();
    return tally;
}

BordaTally regroup_predict(const GenerativeEnsemble& ensemble, const FeatureTrace& trace, std::size_t k,
                           VoteMode mode) {
    const std::size_t n = ensemble.num_layers();
    if (k < 1 || k > n) {
        throw ValidationError("k = " + std::to_string(k) + " outside 1.." + std::to_string(n));
    }
    return aggregate_votes(layer_votes(ensemble, trace, n - k), k, mode);
}

LayerAccuracy per_layer_accuracy(const GenerativeEnsemble& ensemble, const LabeledDataset& calibration,
                                 const NetworkModel& model) {
    if (calibration.empty()) {
        throw ValidationError("calibration set is empty");
    }
    const std::size_t n = ensemble.num_layers();
    LayerAccuracy result;
    std::vector<std::size_t> correct(n, 0);
    for (std::size_t i = 0; i < calibration.size(); ++i) {
        const FeatureTrace trace = forward_with_trace(model, calibration.image(i));
        const std::size_t label = calibration.label(i);
        if (trace.predicted_class() != label) {
            ++result.skipped_misclassified;
            continue;
        }
        if (ensemble.contains_image(calibration.raw_image(i))) {
            ++result.in_sample;
        }
        ++result.evaluated;
        const LayerVotes votes = layer_votes(ensemble, trace);
        for (std::size_t l = 0; l < n; ++l) {
            std::vector<std::size_t> both(votes.num_classes);
            for (std::size_t y = 0; y < votes.num_classes; ++y) {
                both[y] = votes.positive[l][y] + votes.negative[l][y];
            }
            if (argmax_first(both) == label) {
                ++correct[l];
            }
        }
    }
    if (result.evaluated == 0) {
        throw ValidationError("no correctly classified samples in the calibration set");
    }
    result.accuracy.resize(n);
    for (std::size_t l = 0; l < n; ++l) {
        result.accuracy[l] = static_cast<double>(correct[l]) / static_cast<double>(result.evaluated);
    }
    return result;
}

std::size_t select_k(std::span<const double> accuracies, double threshold) {
    if (accuracies.empty()) {
        throw ValidationError("cannot select k from an empty accuracy vector");
    }
    std::size_t k = 0;
    for (std::size_t i = accuracies.size(); i-- > 0;) {
        if (accuracies[i] >= threshold) {
            ++k;
        } else {
            break;
        }
    }
    return std::max<std::size_t>(k, 1);
}

} // namespace regroup
