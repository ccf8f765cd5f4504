#include "regroup/evaluate.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "regroup/engine.hpp"
#include "regroup/error.hpp"
#include "regroup/parallel.hpp"

namespace regroup {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool in_top(std::span<const double> probabilities, std::size_t label, std::size_t n) {
    // Rank of the label: number of classes with a strictly larger probability,
    // plus equal ones with a smaller index.
    std::size_t ahead = 0;
    for (std::size_t y = 0; y < probabilities.size(); ++y) {
        if (probabilities[y] > probabilities[label] || (probabilities[y] == probabilities[label] && y < label)) {
            ++ahead;
        }
    }
    return ahead < n;
}

void check_inputs(std::span<const Tensor> images, std::span<const std::size_t> labels) {
    if (images.size() != labels.size()) {
        throw ValidationError("image and label counts differ");
    }
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

} // namespace

const ModeAccuracy& Evaluation::mode(VoteMode m) const {
    for (const auto& entry : modes) {
        if (entry.mode == m) {
            return entry;
        }
    }
    throw ValidationError("mode " + mode_name(m) + " was not evaluated");
}

Evaluation evaluate(const NetworkModel& model, const GenerativeEnsemble& ensemble, std::span<const Tensor> images,
                    std::span<const std::size_t> labels, std::size_t k, std::span<const VoteMode> modes,
                    std::size_t threads) {
    check_inputs(images, labels);
    if (k < 1 || k > ensemble.num_layers()) {
        throw ValidationError("k = " + std::to_string(k) + " outside 1.." + std::to_string(ensemble.num_layers()));
    }
    struct PerSample {
        bool smax1 = false;
        bool smax5 = false;
        std::vector<bool> top1;
        std::vector<bool> top5;
        bool additive = true;
        double smax_seconds = 0.0;
        double regroup_seconds = 0.0;
    };
    std::vector<PerSample> results(images.size());
    const std::size_t first_layer = ensemble.num_layers() - k;

    parallel_for(images.size(), threads, [&](std::size_t i) {
        PerSample& r = results[i];
        const std::size_t label = labels[i];

        auto start = Clock::now();
        const auto probs = softmax(forward_logits(model, images[i]));
        r.smax_seconds = seconds_since(start);
        r.smax1 = in_top(probs, label, 1);
        r.smax5 = in_top(probs, label, 5);

        // Timed path: full trace plus the both-mode prediction.
        start = Clock::now();
        const FeatureTrace trace = forward_with_trace(model, images[i]);
        const LayerVotes votes = layer_votes(ensemble, trace, first_layer);
        const BordaTally both = aggregate_votes(votes, k, VoteMode::both);
        r.regroup_seconds = seconds_since(start);

        const BordaTally pos = aggregate_votes(votes, k, VoteMode::pos);
        const BordaTally neg = aggregate_votes(votes, k, VoteMode::neg);
        for (std::size_t y = 0; y < both.scores.size(); ++y) {
            if (both.scores[y] != pos.scores[y] + neg.scores[y]) {
                r.additive = false;
            }
        }
        for (VoteMode m : modes) {
            const BordaTally& t = m == VoteMode::both ? both : (m == VoteMode::pos ? pos : neg);
            r.top1.push_back(t.in_top(label, 1));
            r.top5.push_back(t.in_top(label, 5));
        }
    });

    Evaluation eval;
    eval.count = images.size();
    eval.k = k;
    for (VoteMode m : modes) {
        eval.modes.push_back({m, 0.0, 0.0});
    }
    if (images.empty()) {
        return eval;
    }
    for (const auto& r : results) {
        eval.smax_top1 += r.smax1 ? 1.0 : 0.0;
        eval.smax_top5 += r.smax5 ? 1.0 : 0.0;
        eval.smax_seconds += r.smax_seconds;
        eval.regroup_seconds += r.regroup_seconds;
        eval.additivity_violations += r.additive ? 0 : 1;
        for (std::size_t m = 0; m < modes.size(); ++m) {
            eval.modes[m].top1 += r.top1[m] ? 1.0 : 0.0;
            eval.modes[m].top5 += r.top5[m] ? 1.0 : 0.0;
        }
    }
    const double n = static_cast<double>(images.size());
    eval.smax_top1 /= n;
    eval.smax_top5 /= n;
    eval.smax_seconds /= n;
    eval.regroup_seconds /= n;
    for (auto& m : eval.modes) {
        m.top1 /= n;
        m.top5 /= n;
    }
    return eval;
}

std::vector<double> accuracy_by_k(const NetworkModel& model, const GenerativeEnsemble& ensemble,
                                  std::span<const Tensor> images, std::span<const std::size_t> labels, VoteMode mode,
                                  std::size_t threads) {
    check_inputs(images, labels);
    const std::size_t n = ensemble.num_layers();
    std::vector<std::vector<bool>> hits(images.size());
    parallel_for(images.size(), threads, [&](std::size_t i) {
        const LayerVotes votes = layer_votes(ensemble, forward_with_trace(model, images[i]));
        hits[i].resize(n);
        for (std::size_t k = 1; k <= n; ++k) {
            hits[i][k - 1] = aggregate_votes(votes, k, mode).prediction == labels[i];
        }
    });
    std::vector<double> acc(n, 0.0);
    if (images.empty()) {
        return acc;
    }
    for (const auto& h : hits) {
        for (std::size_t k = 0; k < n; ++k) {
            acc[k] += h[k] ? 1.0 : 0.0;
        }
    }
    for (double& a : acc) {
        a /= static_cast<double>(images.size());
    }
    return acc;
}

std::vector<ReportRow> report_rows(const Evaluation& eval, const std::string& dataset, const std::string& attack) {
    std::vector<ReportRow> rows;
    for (const auto& m : eval.modes) {
        rows.push_back({dataset, attack, eval.count, eval.smax_top1, eval.smax_top5, m.top1, m.top5,
                        mode_name(m.mode), eval.k, eval.smax_seconds, eval.regroup_seconds});
    }
    return rows;
}

std::string config_hash(const nlohmann::json& config) {
    const std::string text = config.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string report_tsv(std::span<const ReportRow> rows) {
    std::ostringstream os;
    os << "dataset\tattack\tnum_samples\tsmax_top1\tsmax_top5\tregroup_top1\tregroup_top5\tmode\tk\t"
          "smax_seconds\tregroup_seconds\n";
    for (const auto& r : rows) {
        os << r.dataset << '\t' << r.attack << '\t' << r.count << '\t' << format_double(r.smax_top1) << '\t'
           << format_double(r.smax_top5) << '\t' << format_double(r.regroup_top1) << '\t'
           << format_double(r.regroup_top5) << '\t' << r.mode << '\t' << r.k << '\t'
           << format_double(r.smax_seconds) << '\t' << format_double(r.regroup_seconds) << '\n';
    }
    return os.str();
}

nlohmann::json report_json(std::span<const ReportRow> rows, const nlohmann::json& config) {
    nlohmann::json out;
    out["config"] = config;
    out["config_hash"] = config_hash(config);
    out["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        out["rows"].push_back({{"dataset", r.dataset},
                               {"attack", r.attack},
                               {"num_samples", r.count},
                               {"smax_top1", r.smax_top1},
                               {"smax_top5", r.smax_top5},
                               {"regroup_top1", r.regroup_top1},
                               {"regroup_top5", r.regroup_top5},
                               {"mode", r.mode},
                               {"k", r.k},
                               {"smax_seconds", r.smax_seconds},
                               {"regroup_seconds", r.regroup_seconds}});
    }
    return out;
}

std::vector<ReportRow> rows_from_json(const nlohmann::json& report) {
    std::vector<ReportRow> rows;
    for (const auto& j : report.at("rows")) {
        ReportRow r;
        r.dataset = j.at("dataset").get<std::string>();
        r.attack = j.at("attack").get<std::string>();
        r.count = j.at("num_samples").get<std::size_t>();
        r.smax_top1 = j.at("smax_top1").get<double>();
        r.smax_top5 = j.at("smax_top5").get<double>();
        r.regroup_top1 = j.at("regroup_top1").get<double>();
        r.regroup_top5 = j.at("regroup_top5").get<double>();
        r.mode = j.at("mode").get<std::string>();
        r.k = j.at("k").get<std::size_t>();
        r.smax_seconds = j.at("smax_seconds").get<double>();
        r.regroup_seconds = j.at("regroup_seconds").get<double>();
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_report(std::span<const ReportRow> rows, const nlohmann::json& config,
                  const std::filesystem::path& prefix) {
    auto write_text = [](const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + path.string() + " for writing");
        }
        out << text;
        if (!out) {
            throw IoError("error writing " + path.string());
        }
    };
    std::filesystem::path tsv = prefix;
    tsv += ".tsv";
    std::filesystem::path json = prefix;
    json += ".json";
    write_text(tsv, report_tsv(rows));
    write_text(json, report_json(rows, config).dump(2) + "\n");
}

} // namespace regroup
