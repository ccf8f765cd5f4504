#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "regroup/dataset.hpp"
#include "regroup/engine.hpp"
#include "regroup/network.hpp"

namespace regroup {

inline constexpr double kDefaultDelta = 1e-6;
inline constexpr std::size_t kDefaultQuota = 50;
inline constexpr double kDefaultThreshold = 0.75;

/// Positive and negative response PMFs of one layer for one sample.
struct LayerSignature {
    std::size_t layer_index = 0;
    std::vector<double> positive;
    std::vector<double> negative;
};

/// Spatially accumulated positive/negative parts of a pre-activation tensor,
/// offset by `delta` and normalized to PMFs. A C×H×W tensor yields C entries,
/// a vector of d neurons yields d entries.
LayerSignature layer_signature(const Tensor& preactivation, double delta, std::size_t layer_index = 0);

/// One signature per votable layer of the trace.
std::vector<LayerSignature> trace_signatures(const FeatureTrace& trace, double delta, std::size_t first_layer = 0);

/// Sum_i c_i ln(c_i / p_i). The classifier PMF goes first.
double kl_divergence(std::span<const double> model_pmf, std::span<const double> test_pmf);

/// Per-class mixture PMFs for one votable layer, stored class-major (M×d).
struct LayerClassifier {
    std::size_t layer_index = 0;
    std::size_t dim = 0;
    std::vector<double> positive;
    std::vector<double> negative;

    std::span<const double> positive_row(std::size_t y) const {
        return std::span<const double>(positive).subspan(y * dim, dim);
    }
    std::span<const double> negative_row(std::size_t y) const {
        return std::span<const double>(negative).subspan(y * dim, dim);
    }

    friend bool operator==(const LayerClassifier&, const LayerClassifier&) = default;
};

struct MixtureComponent {
    std::size_t sample_index = 0;
    double weight = 0.0;
};

/// Layer-wise generative classifiers. Immutable after construction except
/// for the selected k.
class GenerativeEnsemble {
public:
    /// Validates that every row of every layer is a strictly positive PMF.
    GenerativeEnsemble(std::size_t num_classes, double delta, std::vector<LayerClassifier> layers);

    std::size_t num_classes() const noexcept { return num_classes_; }
    double delta() const noexcept { return delta_; }
    const std::vector<LayerClassifier>& layers() const noexcept { return layers_; }
    std::size_t num_layers() const noexcept { return layers_.size(); }

    std::optional<std::size_t> selected_k() const noexcept { return selected_k_; }
    void set_selected_k(std::optional<std::size_t> k);

    // Build-time metadata; not persisted.
    std::vector<std::vector<MixtureComponent>> members;  // per class, ascending sample index
    std::vector<std::uint64_t> member_digests;           // sorted image digests of all members
    std::vector<std::string> warnings;

    bool contains_image(std::span<const float> pixels) const;

    friend bool operator==(const GenerativeEnsemble& a, const GenerativeEnsemble& b) {
        return a.num_classes_ == b.num_classes_ && a.delta_ == b.delta_ && a.layers_ == b.layers_ &&
               a.selected_k_ == b.selected_k_;
    }

private:
    std::size_t num_classes_;
    double delta_;
    std::vector<LayerClassifier> layers_;
    std::optional<std::size_t> selected_k_;
};

/// FNV-1a over the f32 pixel bytes.
std::uint64_t image_digest(std::span<const float> pixels);

/// Scans `train` in stored order, keeps the first `quota` correctly
/// classified samples per class and mixes their signatures with weights
/// proportional to the true-class softmax probability.
GenerativeEnsemble build_ensemble(const NetworkModel& model, const LabeledDataset& train, std::size_t quota,
                                  double delta = kDefaultDelta);

enum class Sign : std::uint8_t { positive, negative };

struct RankPreference {
    std::size_t layer = 0;  // ordinal among votable layers
    Sign sign = Sign::positive;
    std::vector<std::size_t> ranks;  // ranks[y] in 1..M
};

/// 1-based rank of each entry when sorted ascending; ties go to the smaller index.
std::vector<std::size_t> ascending_ranks(std::span<const double> scores);

/// KL scores of every class against the signature, ranked for both signs.
std::pair<RankPreference, RankPreference> rank_layer(const GenerativeEnsemble& ensemble, std::size_t layer,
                                                     const LayerSignature& signature);

enum class VoteMode : std::uint8_t { pos, neg, both };

std::string mode_name(VoteMode mode);
VoteMode parse_mode(const std::string& name);

/// Borda count of one layer: (M - R+) + (M - R-), or a single term.
std::vector<std::size_t> borda_layer(const RankPreference& positive, const RankPreference& negative,
                                     std::size_t num_classes, VoteMode mode = VoteMode::both);

/// Per-layer single-sign Borda counts for a trace, reusable across k and modes.
struct LayerVotes {
    std::size_t num_classes = 0;
    std::vector<std::vector<std::size_t>> positive;  // [layer][class]
    std::vector<std::vector<std::size_t>> negative;
};

LayerVotes layer_votes(const GenerativeEnsemble& ensemble, const FeatureTrace& trace, std::size_t first_layer = 0);

struct BordaTally {
    std::vector<std::size_t> scores;
    std::size_t first_layer = 0;  // ordinal of the first contributing votable layer
    std::size_t k = 0;
    VoteMode mode = VoteMode::both;
    std::size_t prediction = 0;
    std::vector<std::size_t> ordering;  // classes by descending score, ties by index

    bool in_top(std::size_t label, std::size_t n) const;
};

BordaTally aggregate_votes(const LayerVotes& votes, std::size_t k, VoteMode mode);
BordaTally regroup_predict(const GenerativeEnsemble& ensemble, const FeatureTrace& trace, std::size_t k,
                           VoteMode mode = VoteMode::both);

struct LayerAccuracy {
    std::vector<double> accuracy;  // one per votable layer
    std::size_t evaluated = 0;
    std::size_t skipped_misclassified = 0;
    std::size_t in_sample = 0;  // calibration samples that are ensemble members

    bool in_sample_flag() const noexcept { return in_sample > 0; }
};

/// Accuracy of argmax_y of each layer's two-voter Borda count over the
/// correctly classified calibration samples.
LayerAccuracy per_layer_accuracy(const GenerativeEnsemble& ensemble, const LabeledDataset& calibration,
                                 const NetworkModel& model);

/// Length of the longest suffix whose entries are all >= threshold, at least 1.
std::size_t select_k(std::span<const double> accuracies, double threshold = kDefaultThreshold);

} // namespace regroup
