#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "regroup/network.hpp"
#include "regroup/regroup.hpp"
#include "regroup/tensor.hpp"

namespace regroup {

struct ModeAccuracy {
    VoteMode mode = VoteMode::both;
    double top1 = 0.0;
    double top5 = 0.0;
};

/// Softmax and REGroup accuracies over one sample set, with mean per-sample
/// wall-clock inference time for each classifier.
struct Evaluation {
    std::size_t count = 0;
    std::size_t k = 0;
    double smax_top1 = 0.0;
    double smax_top5 = 0.0;
    std::vector<ModeAccuracy> modes;
    double smax_seconds = 0.0;
    double regroup_seconds = 0.0;
    /// Samples whose both-mode tally differed from pos + neg.
    std::size_t additivity_violations = 0;

    const ModeAccuracy& mode(VoteMode m) const;
};

Evaluation evaluate(const NetworkModel& model, const GenerativeEnsemble& ensemble, std::span<const Tensor> images,
                    std::span<const std::size_t> labels, std::size_t k, std::span<const VoteMode> modes,
                    std::size_t threads = 1);

/// REGroup Top-1 for every k in 1..n.
std::vector<double> accuracy_by_k(const NetworkModel& model, const GenerativeEnsemble& ensemble,
                                  std::span<const Tensor> images, std::span<const std::size_t> labels,
                                  VoteMode mode = VoteMode::both, std::size_t threads = 1);

struct ReportRow {
    std::string dataset;
    std::string attack;
    std::size_t count = 0;
    double smax_top1 = 0.0;
    double smax_top5 = 0.0;
    double regroup_top1 = 0.0;
    double regroup_top5 = 0.0;
    std::string mode;
    std::size_t k = 0;
    double smax_seconds = 0.0;
    double regroup_seconds = 0.0;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

/// One row per evaluated mode.
std::vector<ReportRow> report_rows(const Evaluation& eval, const std::string& dataset, const std::string& attack);

/// FNV-1a of the compact JSON dump.
std::string config_hash(const nlohmann::json& config);

std::string report_tsv(std::span<const ReportRow> rows);
nlohmann::json report_json(std::span<const ReportRow> rows, const nlohmann::json& config);
std::vector<ReportRow> rows_from_json(const nlohmann::json& report);

/// Writes <prefix>.tsv and <prefix>.json.
void write_report(std::span<const ReportRow> rows, const nlohmann::json& config,
                  const std::filesystem::path& prefix);

} // namespace regroup
