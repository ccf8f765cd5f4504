#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "regroup/engine.hpp"
#include "regroup/network.hpp"
#include "regroup/rng.hpp"
#include "regroup/tensor.hpp"

namespace regroup {

enum class AttackMethod : std::uint8_t { fgsm, pgd, pgd_hc, spsa };

std::string method_name(AttackMethod method);
AttackMethod parse_method(const std::string& name);

/// Budget conversion for user-facing values: integer literals ("16") are read
/// on the 0..255 scale, fractional ones ("0.1") on [0,1].
double epsilon_from_user(const std::string& text);

struct AttackConfig {
    AttackMethod method = AttackMethod::pgd;
    double epsilon = 0.1;  // L-inf budget on the [0,1] scale
    double step_size = 0.01;
    std::size_t iterations = 40;
    bool random_start = true;
    bool targeted = false;
    double min_confidence = 0.9;          // pgd_hc only
    std::size_t binary_search_steps = 0;  // pgd_hc step-size search rounds
    double spsa_delta = 0.01;
    std::size_t spsa_batch = 64;
    double spsa_learning_rate = 0.01;
    std::uint64_t seed = 0;

    /// Throws ValidationError on out-of-range fields.
    void validate() const;
};

inline constexpr std::uint32_t kUntargeted = 0xFFFFFFFFu;

struct AdversarialRecord {
    std::size_t source_index = 0;
    std::size_t true_label = 0;
    std::optional<std::size_t> target;
    Tensor image;
    bool success = false;
    double confidence = 0.0;  // softmax probability of the predicted class
    std::size_t iterations = 0;
};

/// Target drawn uniformly from the classes other than `true_label`.
std::size_t select_target(Rng& rng, std::size_t num_classes, std::size_t true_label);

/// Per-sample generator stream for (seed, sample index).
Rng sample_stream(std::uint64_t seed, std::size_t sample_index);

/// Clamp `x` into the L-inf ball of radius `epsilon` around `origin` and into [0,1].
void project(Tensor& x, const Tensor& origin, double epsilon);

AdversarialRecord fgsm(const NetworkModel& model, const Tensor& x, std::size_t label, double epsilon);

/// Projected signed-gradient ascent (descent toward `target` when set) with
/// optional random start and early return on success.
AdversarialRecord pgd(const NetworkModel& model, const Tensor& x, std::size_t label, const AttackConfig& config,
                      Rng& rng, std::optional<std::size_t> target = std::nullopt);

/// PGD without the epsilon ball; success additionally needs the predicted
/// class's confidence to reach config.min_confidence.
AdversarialRecord pgd_high_confidence(const NetworkModel& model, const Tensor& x, std::size_t label,
                                      const AttackConfig& config, Rng& rng,
                                      std::optional<std::size_t> target = std::nullopt);

/// Mean of [L(x+dv) - L(x-dv)] / (2d) * v over `batch` Rademacher directions.
Tensor spsa_gradient(const NetworkModel& model, const Tensor& x, std::size_t label, double delta,
                     std::size_t batch, Rng& rng);

/// Gradient-free attack: SPSA estimates driving Adam steps, projected each step.
AdversarialRecord spsa(const NetworkModel& model, const Tensor& x, std::size_t label, const AttackConfig& config,
                       Rng& rng, std::optional<std::size_t> target = std::nullopt);

/// Dispatch on config.method. Draws a target first when config.targeted.
AdversarialRecord run_attack(const NetworkModel& model, const Tensor& x, std::size_t label,
                             const AttackConfig& config, std::size_t source_index);

/// The successful records, in input order.
std::vector<AdversarialRecord> filter_successful(std::span<const AdversarialRecord> records);

} // namespace regroup
