#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spotkit/data.hpp"
#include "spotkit/error.hpp"
#include "spotkit/matrix.hpp"
#include "spotkit/model.hpp"
#include "spotkit/parallel.hpp"

namespace spotkit {

// Per-class confidence over every frame position; background unit dropped.
struct ActionnessCurve {
    Matrix scores;  // action_classes × positions
    std::vector<std::int64_t> positions_ms;
    std::size_t stride_frames = 1;
};

// One forward per frame position, window centered on the position (the
// position's own frame opens the future half), boundary windows zero-padded.
inline ActionnessCurve dense_actionness(const SpottingModel& model, const FeatureSequence& seq,
                                        unsigned threads = 1) {
    const std::size_t n = seq.features.rows();
    require(n >= 2, ErrorKind::invalid_argument, "dense_actionness: video shorter than 2 frames");
    require(seq.features.cols() == model.cfg.input_dim, ErrorKind::shape_mismatch,
            "dense_actionness: feature dim does not match the model");
    const std::size_t window = model.window_frames();
    const std::size_t before = window / 2;

    ActionnessCurve curve;
    curve.scores = Matrix(model.cfg.action_classes, n);
    curve.positions_ms.resize(n);
    parallel_for(n, threads, [&](std::size_t i) {
        Matrix chunk(window, seq.features.cols());
        for (std::size_t f = 0; f < window; ++f) {
            const auto src = static_cast<std::int64_t>(i) + static_cast<std::int64_t>(f) -
                             static_cast<std::int64_t>(before);
            if (src < 0 || src >= static_cast<std::int64_t>(n)) continue;  // zero pad
            for (std::size_t j = 0; j < chunk.cols(); ++j)
                chunk(f, j) = seq.features(static_cast<std::size_t>(src), j);
        }
        const ChunkPrediction pred = model.predict(chunk);
        for (std::size_t c = 0; c < model.cfg.action_classes; ++c) curve.scores(c, i) = pred.scores[c];
        curve.positions_ms[i] =
            std::llround(static_cast<double>(i) / seq.frame_rate * 1000.0);
    });
    return curve;
}

struct Spot {
    std::size_t class_index = 0;
    std::int64_t position_ms = 0;
    double confidence = 0.0;
};

// Per class: repeatedly keep the highest remaining score (ties go to the
// earlier position) and suppress every position within t_nms/2 on each side.
// Without a threshold every unsuppressed position is eventually emitted.
inline std::vector<Spot> nms(const ActionnessCurve& curve, double t_nms_seconds,
                             std::optional<double> threshold = std::nullopt) {
    require(t_nms_seconds > 0, ErrorKind::invalid_argument, "nms: window must be positive");
    const double radius_ms = t_nms_seconds * 1000.0 / 2.0;
    const std::size_t npos = curve.positions_ms.size();
    std::vector<Spot> spots;
    std::vector<std::size_t> order(npos);
    for (std::size_t c = 0; c < curve.scores.rows(); ++c) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (curve.scores(c, a) != curve.scores(c, b)) return curve.scores(c, a) > curve.scores(c, b);
            return curve.positions_ms[a] < curve.positions_ms[b];
        });
        std::vector<std::int64_t> kept;
        for (std::size_t idx : order) {
            const double score = curve.scores(c, idx);
            if (threshold && score < *threshold) break;
            const std::int64_t pos = curve.positions_ms[idx];
            bool suppressed = false;
            for (std::int64_t k : kept)
                if (std::abs(static_cast<double>(pos - k)) <= radius_ms) {
                    suppressed = true;
                    break;
                }
            if (suppressed) continue;
            kept.push_back(pos);
            spots.push_back({c, pos, score});
        }
    }
    std::sort(spots.begin(), spots.end(), [](const Spot& a, const Spot& b) {
        if (a.position_ms != b.position_ms) return a.position_ms < b.position_ms;
        return a.class_index < b.class_index;
    });
    return spots;
}

inline nlohmann::ordered_json spots_to_json(const std::string& video_id, const std::vector<Spot>& spots,
                                            const ClassVocab& vocab) {
    nlohmann::ordered_json preds = nlohmann::ordered_json::array();
    for (const auto& s : spots) {
        require(s.class_index < vocab.size(), ErrorKind::invalid_argument, "spots_to_json: class out of range");
        preds.push_back({{"label", vocab.names[s.class_index]},
                         {"position_ms", s.position_ms},
                         {"confidence", s.confidence}});
    }
    return {{"video_id", video_id}, {"predictions", preds}};
}

inline std::pair<std::string, std::vector<Spot>> spots_from_json(const nlohmann::json& j,
                                                                 const ClassVocab& vocab) {
    std::vector<Spot> spots;
    const std::string video_id = j.at("video_id").get<std::string>();
    for (const auto& item : j.at("predictions")) {
        Spot s;
        s.class_index = vocab.index_of(item.at("label").get<std::string>());
        s.position_ms = item.at("position_ms").get<std::int64_t>();
        s.confidence = item.at("confidence").get<double>();
        spots.push_back(s);
    }
    return {video_id, std::move(spots)};
}

}  // namespace spotkit
