#include "regroup/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "regroup/error.hpp"

namespace regroup {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

double sign(double v) {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct Outcome {
    bool success;
    double confidence;
};

// Success is judged on the softmax argmax; `min_confidence` of zero disables
// the confidence requirement.
Outcome judge(std::span<const double> probabilities, std::size_t label, std::optional<std::size_t> target,
              double min_confidence) {
    const std::size_t pred = argmax(probabilities);
    const double conf = probabilities[pred];
    const bool fooled = target ? pred == *target : pred != label;
    return {fooled && conf >= min_confidence, conf};
}

void clip_unit(Tensor& x) {
    for (double& v : x.values()) {
        v = std::clamp(v, 0.0, 1.0);
    }
}

void random_start(Tensor& x, const Tensor& origin, double epsilon, Rng& rng) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = origin[i] + rng.uniform(-epsilon, epsilon);
    }
}

double linf_distance(const Tensor& a, const Tensor& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, std::abs(a[i] - b[i]));
    }
    return d;
}

AdversarialRecord make_record(Tensor image, std::size_t label, std::optional<std::size_t> target) {
    AdversarialRecord r;
    r.true_label = label;
    r.target = target;
    r.image = std::move(image);
    return r;
}

void check_labels(const NetworkModel& model, std::size_t label, std::optional<std::size_t> target) {
    if (label >= model.num_classes()) {
        throw ValidationError("label " + std::to_string(label) + " out of range");
    }
    if (target && *target >= model.num_classes()) {
        throw ValidationError("target " + std::to_string(*target) + " out of range");
    }
}

// Signed-gradient loop shared by pgd and pgd_high_confidence. A negative
// epsilon means no ball projection.
AdversarialRecord signed_gradient_loop(const NetworkModel& model, const Tensor& x, std::size_t label,
                                       std::optional<std::size_t> target, Tensor start, double epsilon,
                                       double step, std::size_t iterations, double min_confidence) {
    const std::size_t loss_class = target ? *target : label;
    const double direction = target ? -1.0 : 1.0;
    AdversarialRecord record = make_record(std::move(start), label, target);
    for (std::size_t it = 0; it < iterations; ++it) {
        LossAndGradient lg = loss_and_input_gradient(model, record.image, loss_class);
        const Outcome outcome = judge(lg.probabilities, label, target, min_confidence);
        if (outcome.success) {
            record.success = true;
            record.confidence = outcome.confidence;
            record.iterations = it;
            return record;
        }
        for (std::size_t i = 0; i < record.image.size(); ++i) {
            record.image[i] += direction * step * sign(lg.gradient[i]);
        }
        if (epsilon >= 0.0) {
            project(record.image, x, epsilon);
        } else {
            clip_unit(record.image);
        }
    }
    const auto probs = softmax(forward_logits(model, record.image));
    const Outcome outcome = judge(probs, label, target, min_confidence);
    record.success = outcome.success;
    record.confidence = outcome.confidence;
    record.iterations = iterations;
    return record;
}

} // namespace

std::string method_name(AttackMethod method) {
    switch (method) {
    case AttackMethod::fgsm: return "fgsm";
    case AttackMethod::pgd: return "pgd";
    case AttackMethod::pgd_hc: return "pgd_hc";
    case AttackMethod::spsa: return "spsa";
    }
    return "unknown";
}

AttackMethod parse_method(const std::string& name) {
    for (auto m : {AttackMethod::fgsm, AttackMethod::pgd, AttackMethod::pgd_hc, AttackMethod::spsa}) {
        if (method_name(m) == name) {
            return m;
        }
    }
    throw ValidationError("unknown attack method '" + name + "' (expected fgsm, pgd, pgd_hc or spsa)");
}

double epsilon_from_user(const std::string& text) {
    std::size_t consumed = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &consumed);
    } catch (const std::exception&) {
        throw ValidationError("epsilon '" + text + "' is not a number");
    }
    if (consumed != text.size() || !std::isfinite(value) || value < 0.0) {
        throw ValidationError("epsilon '" + text + "' must be a non-negative number");
    }
    const bool integer_literal = text.find_first_of(".eE") == std::string::npos;
    return integer_literal ? value / 255.0 : value;
}

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw ValidationError("epsilon must be >= 0");
    }
    if (iterations < 1) {
        throw ValidationError("iterations must be >= 1");
    }
    if (!(step_size > 0.0)) {
        throw ValidationError("step size must be positive");
    }
    if (!(min_confidence > 0.0 && min_confidence < 1.0)) {
        throw ValidationError("min confidence must lie in (0,1)");
    }
    if (method == AttackMethod::spsa) {
        if (!(spsa_delta > 0.0) || spsa_batch < 1 || !(spsa_learning_rate > 0.0)) {
            throw ValidationError("SPSA needs positive perturbation size, batch size and learning rate");
        }
    }
}

std::size_t select_target(Rng& rng, std::size_t num_classes, std::size_t true_label) {
    if (num_classes < 2) {
        throw ValidationError("targeted attacks need at least two classes");
    }
    // Draw from M-1 slots and skip over the true class.
    const auto slot = static_cast<std::size_t>(rng.below(num_classes - 1));
    return slot >= true_label ? slot + 1 : slot;
}

Rng sample_stream(std::uint64_t seed, std::size_t sample_index) {
    return Rng::stream(seed, 0x100000000ULL + sample_index);
}

void project(Tensor& x, const Tensor& origin, double epsilon) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lo = std::max(0.0, origin[i] - epsilon);
        const double hi = std::min(1.0, origin[i] + epsilon);
        x[i] = std::clamp(x[i], lo, hi);
    }
}

AdversarialRecord fgsm(const NetworkModel& model, const Tensor& x, std::size_t label, double epsilon) {
    check_labels(model, label, std::nullopt);
    if (!(epsilon >= 0.0)) {
        throw ValidationError("epsilon must be >= 0");
    }
    const Tensor grad = input_gradient(model, x, label);
    Tensor adv = x;
    for (std::size_t i = 0; i < adv.size(); ++i) {
        adv[i] += epsilon * sign(grad[i]);
    }
    project(adv, x, epsilon);
    const auto probs = softmax(forward_logits(model, adv));
    const Outcome outcome = judge(probs, label, std::nullopt, 0.0);
    AdversarialRecord record = make_record(std::move(adv), label, std::nullopt);
    record.success = outcome.success;
    record.confidence = outcome.confidence;
    record.iterations = 1;
    return record;
}

AdversarialRecord pgd(const NetworkModel& model, const Tensor& x, std::size_t label, const AttackConfig& config,
                      Rng& rng, std::optional<std::size_t> target) {
    config.validate();
    check_labels(model, label, target);
    Tensor start = x;
    if (config.random_start) {
        random_start(start, x, config.epsilon, rng);
        project(start, x, config.epsilon);
    }
    return signed_gradient_loop(model, x, label, target, std::move(start), config.epsilon, config.step_size,
                                config.iterations, 0.0);
}

AdversarialRecord pgd_high_confidence(const NetworkModel& model, const Tensor& x, std::size_t label,
                                      const AttackConfig& config, Rng& rng, std::optional<std::size_t> target) {
    config.validate();
    check_labels(model, label, target);
    {
        const auto probs = softmax(forward_logits(model, x));
        const Outcome outcome = judge(probs, label, target, config.min_confidence);
        if (outcome.success) {
            AdversarialRecord record = make_record(x, label, target);
            record.success = true;
            record.confidence = outcome.confidence;
            return record;
        }
    }
    auto attempt = [&](double step) {
        Tensor start = x;
        if (config.random_start) {
            random_start(start, x, config.epsilon, rng);
            clip_unit(start);
        }
        return signed_gradient_loop(model, x, label, target, std::move(start), -1.0, step, config.iterations,
                                    config.min_confidence);
    };

    double step = config.step_size;
    AdversarialRecord best = attempt(step);
    // Step-size search: shrink after a success (smaller distortion), grow after a failure.
    double lo = 0.0;
    double hi = best.success ? step : std::numeric_limits<double>::infinity();
    for (std::size_t round = 0; round < config.binary_search_steps; ++round) {
        step = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * step;
        AdversarialRecord candidate = attempt(step);
        if (candidate.success) {
            hi = step;
            if (!best.success || linf_distance(candidate.image, x) < linf_distance(best.image, x)) {
                best = std::move(candidate);
            }
        } else {
            lo = step;
        }
    }
    return best;
}

Tensor spsa_gradient(const NetworkModel& model, const Tensor& x, std::size_t label, double delta,
                     std::size_t batch, Rng& rng) {
    if (!(delta > 0.0) || batch < 1) {
        throw ValidationError("SPSA needs a positive perturbation size and batch");
    }
    Tensor grad(x.shape(), 0.0);
    Tensor v(x.shape(), 0.0);
    Tensor plus(x.shape(), 0.0);
    Tensor minus(x.shape(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            v[i] = rng.rademacher();
            plus[i] = x[i] + delta * v[i];
            minus[i] = x[i] - delta * v[i];
        }
        const double diff = cross_entropy(forward_logits(model, plus), label) -
                            cross_entropy(forward_logits(model, minus), label);
        const double scale = diff / (2.0 * delta);
        for (std::size_t i = 0; i < x.size(); ++i) {
            grad[i] += scale * v[i];
        }
    }
    for (double& g : grad.values()) {
        g /= static_cast<double>(batch);
    }
    return grad;
}

AdversarialRecord spsa(const NetworkModel& model, const Tensor& x, std::size_t label, const AttackConfig& config,
                       Rng& rng, std::optional<std::size_t> target) {
    config.validate();
    check_labels(model, label, target);
    const std::size_t loss_class = target ? *target : label;
    // Adam minimizes: -CE(label) when untargeted, CE(target) when targeted.
    const double direction = target ? 1.0 : -1.0;

    Tensor adv = x;
    if (config.random_start) {
        random_start(adv, x, config.epsilon, rng);
        project(adv, x, config.epsilon);
    }
    std::vector<double> m(x.size(), 0.0);
    std::vector<double> s(x.size(), 0.0);
    AdversarialRecord record = make_record(Tensor{}, label, target);
    for (std::size_t it = 0; it < config.iterations; ++it) {
        const auto probs = softmax(forward_logits(model, adv));
        const Outcome outcome = judge(probs, label, target, 0.0);
        if (outcome.success) {
            record.image = std::move(adv);
            record.success = true;
            record.confidence = outcome.confidence;
            record.iterations = it;
            return record;
        }
        const Tensor g = spsa_gradient(model, adv, loss_class, config.spsa_delta, config.spsa_batch, rng);
        const double t = static_cast<double>(it + 1);
        const double correction1 = 1.0 - std::pow(kAdamBeta1, t);
        const double correction2 = 1.0 - std::pow(kAdamBeta2, t);
        for (std::size_t i = 0; i < adv.size(); ++i) {
            const double gi = direction * g[i];
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * gi;
            s[i] = kAdamBeta2 * s[i] + (1.0 - kAdamBeta2) * gi * gi;
            const double m_hat = m[i] / correction1;
            const double s_hat = s[i] / correction2;
            adv[i] -= config.spsa_learning_rate * m_hat / (std::sqrt(s_hat) + kAdamEpsilon);
        }
        project(adv, x, config.epsilon);
    }
    const auto probs = softmax(forward_logits(model, adv));
    const Outcome outcome = judge(probs, label, target, 0.0);
    record.image = std::move(adv);
    record.success = outcome.success;
    record.confidence = outcome.confidence;
    record.iterations = config.iterations;
    return record;
}

AdversarialRecord run_attack(const NetworkModel& model, const Tensor& x, std::size_t label,
                             const AttackConfig& config, std::size_t source_index) {
    config.validate();
    Rng rng = sample_stream(config.seed, source_index);
    std::optional<std::size_t> target;
    if (config.targeted) {
        target = select_target(rng, model.num_classes(), label);
    }
    AdversarialRecord record;
    switch (config.method) {
    case AttackMethod::fgsm:
        if (target) {
            throw ValidationError("fgsm is untargeted only");
        }
        record = fgsm(model, x, label, config.epsilon);
        break;
    case AttackMethod::pgd: record = pgd(model, x, label, config, rng, target); break;
    case AttackMethod::pgd_hc: record = pgd_high_confidence(model, x, label, config, rng, target); break;
    case AttackMethod::spsa: record = spsa(model, x, label, config, rng, target); break;
    }
    record.source_index = source_index;
    return record;
}

std::vector<AdversarialRecord> filter_successful(std::span<const AdversarialRecord> records) {
    std::vector<AdversarialRecord> out;
    for (const auto& r : records) {
        if (r.success) {
            out.push_back(r);
        }
    }
    return out;
}

} // namespace regroup
