#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spotkit/data.hpp"
#include "spotkit/error.hpp"

namespace spotkit {

struct PredSpot {
    std::string video_id;
    std::size_t class_index = 0;
    std::int64_t position_ms = 0;
    double confidence = 0.0;
};

struct GtSpot {
    std::string video_id;
    std::size_t class_index = 0;
    std::int64_t position_ms = 0;
    bool visible = true;
};

inline std::vector<double> default_deltas() {
    std::vector<double> d;
    for (int s = 5; s <= 60; s += 5) d.push_back(static_cast<double>(s));
    return d;
}

struct MatchResult {
    std::vector<char> tp;         // per prediction, in the given order
    std::vector<int> matched_gt;  // index into the GT list, −1 for FP
    std::vector<char> gt_matched;
};

// Greedy one-to-one matching: predictions in descending-confidence order each
// claim the nearest unclaimed same-class ground truth within |Δt| ≤ δ.
// Predictions must arrive sorted by descending confidence; entries are
// expected to share one video and one class.
inline MatchResult match_spots(const std::vector<PredSpot>& preds, const std::vector<GtSpot>& gts,
                               double delta_seconds) {
    const double delta_ms = delta_seconds * 1000.0;
    MatchResult res;
    res.tp.assign(preds.size(), 0);
    res.matched_gt.assign(preds.size(), -1);
    res.gt_matched.assign(gts.size(), 0);
    for (std::size_t p = 0; p < preds.size(); ++p) {
        int best = -1;
        double best_dist = 0.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (res.gt_matched[g]) continue;
            if (gts[g].class_index != preds[p].class_index || gts[g].video_id != preds[p].video_id) continue;
            const double dist = std::abs(static_cast<double>(preds[p].position_ms - gts[g].position_ms));
            if (dist > delta_ms) continue;
            if (best < 0 || dist < best_dist ||
                (dist == best_dist && gts[g].position_ms < gts[best].position_ms)) {
                best = static_cast<int>(g);
                best_dist = dist;
            }
        }
        if (best >= 0) {
            res.tp[p] = 1;
            res.matched_gt[p] = best;
            res.gt_matched[best] = 1;
        }
    }
    return res;
}

// Area under the precision–recall curve with the all-point precision
// envelope. Flags must be ordered by descending confidence.
inline double average_precision(const std::vector<char>& tp_flags, std::size_t total_gt) {
    if (total_gt == 0) return tp_flags.empty() ? 1.0 : 0.0;
    if (tp_flags.empty()) return 0.0;
    const std::size_t n = tp_flags.size();
    std::vector<double> precision(n), recall(n);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        tp += tp_flags[i] ? 1 : 0;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
    }
    for (std::size_t i = n - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!tp_flags[i]) continue;
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

struct EvalReport {
    std::vector<double> deltas;
    std::vector<std::string> classes;
    std::vector<std::vector<double>> ap;  // [class][delta]
    std::vector<double> map_per_delta;
    double average_map = 0.0;
};

namespace detail {

enum class GtSubset { all, visible, unshown };

// AP for one (class, delta) cell. Predictions are matched against the full
// ground truth; for a subset report, predictions matched to the other subset
// are dropped from the ranking rather than counted as false positives.
inline double class_ap(std::vector<PredSpot> preds, const std::vector<GtSpot>& gts, double delta_s,
                       GtSubset subset) {
    std::stable_sort(preds.begin(), preds.end(), [](const PredSpot& a, const PredSpot& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.video_id != b.video_id) return a.video_id < b.video_id;
        return a.position_ms < b.position_ms;
    });
    const MatchResult match = match_spots(preds, gts, delta_s);
    auto in_subset = [&](const GtSpot& g) {
        return subset == GtSubset::all || (subset == GtSubset::visible) == g.visible;
    };
    std::size_t total_gt = 0;
    for (const auto& g : gts) total_gt += in_subset(g) ? 1 : 0;
    std::vector<char> flags;
    flags.reserve(preds.size());
    for (std::size_t p = 0; p < preds.size(); ++p) {
        if (match.tp[p]) {
            if (in_subset(gts[static_cast<std::size_t>(match.matched_gt[p])])) flags.push_back(1);
            // matched outside the subset: excluded from this ranking
        } else {
            flags.push_back(0);
        }
    }
    return average_precision(flags, total_gt);
}

inline EvalReport build_report(const std::vector<PredSpot>& preds, const std::vector<GtSpot>& gts,
                               const ClassVocab& vocab, const std::vector<double>& deltas, GtSubset subset) {
    EvalReport report;
    report.deltas = deltas;
    report.classes = vocab.names;
    report.ap.assign(vocab.size(), std::vector<double>(deltas.size(), 0.0));
    report.map_per_delta.assign(deltas.size(), 0.0);
    for (std::size_t c = 0; c < vocab.size(); ++c) {
        std::vector<PredSpot> class_preds;
        std::vector<GtSpot> class_gts;
        for (const auto& p : preds)
            if (p.class_index == c) class_preds.push_back(p);
        for (const auto& g : gts)
            if (g.class_index == c) class_gts.push_back(g);
        for (std::size_t d = 0; d < deltas.size(); ++d)
            report.ap[c][d] = class_ap(class_preds, class_gts, deltas[d], subset);
    }
    for (std::size_t d = 0; d < deltas.size(); ++d) {
        double s = 0.0;
        for (std::size_t c = 0; c < vocab.size(); ++c) s += report.ap[c][d];
        report.map_per_delta[d] = s / static_cast<double>(vocab.size());
    }
    double s = 0.0;
    for (double m : report.map_per_delta) s += m;
    report.average_map = report.map_per_delta.empty() ? 0.0 : s / static_cast<double>(report.map_per_delta.size());
    return report;
}

}  // namespace detail

struct FullEvalReport {
    EvalReport all;
    EvalReport visible;
    EvalReport unshown;
};

// AP per (class, δ) → unweighted class mean per δ → unweighted mean over the
// δ sweep (5 s to 60 s in 5 s steps by default).
inline EvalReport average_map(const std::vector<PredSpot>& preds, const std::vector<GtSpot>& gts,
                              const ClassVocab& vocab, std::vector<double> deltas = default_deltas()) {
    for (const auto& p : preds)
        require(p.class_index < vocab.size(), ErrorKind::invalid_argument,
                "average_map: prediction class index out of range");
    for (const auto& g : gts)
        require(g.class_index < vocab.size(), ErrorKind::invalid_argument,
                "average_map: ground-truth class index out of range");
    return detail::build_report(preds, gts, vocab, deltas, detail::GtSubset::all);
}

inline FullEvalReport average_map_with_splits(const std::vector<PredSpot>& preds,
                                              const std::vector<GtSpot>& gts, const ClassVocab& vocab,
                                              std::vector<double> deltas = default_deltas()) {
    FullEvalReport full;
    full.all = average_map(preds, gts, vocab, deltas);
    full.visible = detail::build_report(preds, gts, vocab, deltas, detail::GtSubset::visible);
    full.unshown = detail::build_report(preds, gts, vocab, deltas, detail::GtSubset::unshown);
    return full;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json ap = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        nlohmann::ordered_json per_delta = nlohmann::ordered_json::object();
        for (std::size_t d = 0; d < r.deltas.size(); ++d)
            per_delta[std::to_string(static_cast<int>(r.deltas[d]))] = r.ap[c][d];
        ap[r.classes[c]] = per_delta;
    }
    nlohmann::ordered_json map_per_delta = nlohmann::ordered_json::object();
    for (std::size_t d = 0; d < r.deltas.size(); ++d)
        map_per_delta[std::to_string(static_cast<int>(r.deltas[d]))] = r.map_per_delta[d];
    return {{"deltas_s", r.deltas},
            {"ap", ap},
            {"map_per_delta", map_per_delta},
            {"average_map", r.average_map}};
}

inline nlohmann::ordered_json report_to_json(const FullEvalReport& r) {
    return {{"all", report_to_json(r.all)},
            {"visible", report_to_json(r.visible)},
            {"unshown", report_to_json(r.unshown)}};
}

// Plain-text table: one row per class, one column per tolerance.
inline std::string report_to_text(const EvalReport& r) {
    std::string out;
    char line[256];
    std::size_t width = 12;
    for (const auto& c : r.classes) width = std::max(width, c.size() + 2);
    auto pad = [&](const std::string& s) {
        std::string p = s;
        p.resize(width, ' ');
        return p;
    };
    out += pad("class");
    for (double d : r.deltas) {
        std::snprintf(line, sizeof(line), "%6ds", static_cast<int>(d));
        out += line;
    }
    out += "     mAP\n";
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        out += pad(r.classes[c]);
        double mean = 0.0;
        for (std::size_t d = 0; d < r.deltas.size(); ++d) {
            std::snprintf(line, sizeof(line), "%7.3f", r.ap[c][d]);
            out += line;
            mean += r.ap[c][d];
        }
        std::snprintf(line, sizeof(line), "%8.3f\n", mean / static_cast<double>(r.deltas.size()));
        out += line;
    }
    out += pad("mAP");
    for (std::size_t d = 0; d < r.deltas.size(); ++d) {
        std::snprintf(line, sizeof(line), "%7.3f", r.map_per_delta[d]);
        out += line;
    }
    std::snprintf(line, sizeof(line), "%8.3f\n", r.average_map);
    out += line;
    std::snprintf(line, sizeof(line), "Average-mAP: %.4f\n", r.average_map);
    out += line;
    return out;
}

}  // namespace spotkit
