#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spotkit/error.hpp"
#include "spotkit/matrix.hpp"
#include "spotkit/numerics.hpp"
#include "spotkit/pooling.hpp"
#include "spotkit/rng.hpp"

namespace spotkit {

constexpr double kScoreClamp = 1e-7;

inline double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct ModelConfig {
    std::size_t input_dim = 2048;
    std::size_t reduced_dim = 512;
    std::size_t action_classes = 17;
    bool has_projection = true;
    PoolSpec pool{};
    double dropout_rate = 0.4;
    double window_seconds = 15.0;
    double frame_rate = 2.0;
    std::uint64_t seed = 0;
    std::vector<std::string> class_names;  // action classes only; background is implicit

    // Action classes plus the background unit supervising action-free chunks.
    std::size_t class_count() const { return action_classes + 1; }

    std::size_t window_frames() const {
        const double f = window_seconds * frame_rate;
        const auto n = static_cast<std::size_t>(std::llround(f));
        require(n >= 2, ErrorKind::invalid_argument, "model: window shorter than 2 frames");
        require(std::abs(f - static_cast<double>(n)) < 1e-9, ErrorKind::invalid_argument,
                "model: window is not a whole number of frames");
        return n;
    }

    void validate() const {
        require(action_classes >= 1, ErrorKind::invalid_argument, "model: need at least one action class");
        require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorKind::invalid_argument,
                "model: dropout rate must be in [0, 1)");
        if (!has_projection)
            require(input_dim == reduced_dim, ErrorKind::invalid_argument,
                    "model: projection disabled requires input_dim == reduced_dim");
        if (!class_names.empty())
            require(class_names.size() == action_classes, ErrorKind::invalid_argument,
                    "model: class name count differs from action class count");
        window_frames();
        pool.normalized();
    }
};

// Independent per-class sigmoid scores; a multi-label output, not a distribution.
struct ChunkPrediction {
    Vec scores;
};

struct ModelCache {
    Matrix input;
    Matrix projected;
    PoolingCache pool;
    Vec pooled;        // pool output, pre-dropout
    Vec dropout_mask;  // per-element keep scale; empty in eval mode
    Vec logits;
    Vec scores;
    bool train_mode = false;
};

struct ModelGrads {
    Matrix proj_w;
    Vec proj_b;
    HeadGrads head_before;
    HeadGrads head_after;
    Matrix cls_w;
    Vec cls_b;
};

struct ParamView {
    std::string name;
    std::span<double> data;
    std::vector<std::size_t> dims;
};

// Mean over all (sample, class) pairs of −[y·log x + (1−y)·log(1−x)],
// predictions clamped to [1e-7, 1 − 1e-7].
inline double bce_loss(std::span<const double> pred, std::span<const double> target) {
    require(pred.size() == target.size() && !pred.empty(), ErrorKind::shape_mismatch,
            "bce_loss: prediction/target size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double x = std::clamp(pred[i], kScoreClamp, 1.0 - kScoreClamp);
        sum += -(target[i] * std::log(x) + (1.0 - target[i]) * std::log(1.0 - x));
    }
    return sum / static_cast<double>(pred.size());
}

inline double bce_loss(const Matrix& pred, const Matrix& target) {
    require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorKind::shape_mismatch,
            "bce_loss: batch shape mismatch");
    return bce_loss(pred.flat(), target.flat());
}

struct SpottingModel {
    ModelConfig cfg;
    Matrix proj_w;  // reduced_dim × input_dim
    Vec proj_b;     // reduced_dim
    ClusterParams head_before;  // the single head when plain
    ClusterParams head_after;   // temporally aware cluster kinds only
    Matrix cls_w;  // class_count × pool_dim
    Vec cls_b;     // class_count

    static SpottingModel init(const ModelConfig& raw_cfg, Rng& rng) {
        ModelConfig cfg = raw_cfg;
        cfg.pool = cfg.pool.normalized();
        cfg.validate();
        SpottingModel m;
        m.cfg = cfg;
        if (cfg.has_projection) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
            m.proj_w = Matrix(cfg.reduced_dim, cfg.input_dim);
            for (double& x : m.proj_w.flat()) x = rng.uniform(-scale, scale);
            m.proj_b.assign(cfg.reduced_dim, 0.0);
        }
        if (kind_uses_clusters(cfg.pool.kind)) {
            if (cfg.pool.temporally_aware) {
                m.head_before = ClusterParams::init(cfg.pool.kind, cfg.pool.clusters_before, cfg.reduced_dim, rng);
                m.head_after = ClusterParams::init(cfg.pool.kind, cfg.pool.clusters_after, cfg.reduced_dim, rng);
            } else {
                m.head_before = ClusterParams::init(cfg.pool.kind, cfg.pool.clusters, cfg.reduced_dim, rng);
            }
        }
        // Zero-initialized classifier: every score starts at 0.5, loss at ln 2.
        m.cls_w = Matrix(cfg.class_count(), m.pool_dim());
        m.cls_b.assign(cfg.class_count(), 0.0);
        return m;
    }

    std::size_t pool_dim() const { return pool_output_dim(cfg.pool, cfg.reduced_dim); }
    std::size_t class_count() const { return cfg.class_count(); }
    std::size_t window_frames() const { return cfg.window_frames(); }

    bool has_cluster_heads() const { return kind_uses_clusters(cfg.pool.kind); }

    // Affine map applied per frame.
    Matrix project(const Matrix& x_raw) const {
        require(x_raw.cols() == cfg.input_dim, ErrorKind::shape_mismatch, "project: input dim mismatch");
        if (!cfg.has_projection) return x_raw;
        Matrix out = matmul_nt(x_raw, proj_w);
        for (std::size_t i = 0; i < out.rows(); ++i) {
            auto row = out.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) row[j] += proj_b[j];
        }
        return out;
    }

    std::pair<ChunkPrediction, ModelCache> forward(const Matrix& chunk, bool train_mode, Rng& rng) const {
        require(chunk.rows() == window_frames(), ErrorKind::invalid_argument,
                "forward: chunk frame count does not match the configured window");
        ModelCache cache;
        cache.train_mode = train_mode;
        cache.input = chunk;
        cache.projected = project(chunk);
        const ClusterParams* pb = has_cluster_heads() ? &head_before : nullptr;
        const ClusterParams* pa =
            (has_cluster_heads() && cfg.pool.temporally_aware) ? &head_after : nullptr;
        PoolOutput p = pool_forward(cache.projected, cfg.pool, pb, pa);
        cache.pool = std::move(p.cache);
        cache.pooled = std::move(p.value);

        Vec features = cache.pooled;
        if (train_mode && cfg.dropout_rate > 0.0) {
            const double keep = 1.0 - cfg.dropout_rate;
            cache.dropout_mask.assign(features.size(), 0.0);
            for (std::size_t i = 0; i < features.size(); ++i) {
                if (rng.uniform() < keep) cache.dropout_mask[i] = 1.0 / keep;  // inverted scaling
                features[i] *= cache.dropout_mask[i];
            }
        }

        cache.logits.assign(class_count(), 0.0);
        cache.scores.assign(class_count(), 0.0);
        for (std::size_t c = 0; c < class_count(); ++c) {
            cache.logits[c] = dot(cls_w.row(c), features) + cls_b[c];
            cache.scores[c] = stable_sigmoid(cache.logits[c]);
        }
        ChunkPrediction pred{cache.scores};
        return {std::move(pred), std::move(cache)};
    }

    ChunkPrediction predict(const Matrix& chunk) const {
        Rng dummy(0);
        return forward(chunk, false, dummy).first;
    }

    // Gradient of the per-chunk mean BCE over classes w.r.t. every parameter.
    ModelGrads backward(const ModelCache& cache, std::span<const double> target) const {
        require(target.size() == class_count(), ErrorKind::shape_mismatch, "backward: target size mismatch");
        require(cache.scores.size() == class_count() && cache.pooled.size() == pool_dim(),
                ErrorKind::shape_mismatch, "backward: stale cache");
        ModelGrads g;
        const std::size_t C = class_count();

        Vec features = cache.pooled;
        if (!cache.dropout_mask.empty())
            for (std::size_t i = 0; i < features.size(); ++i) features[i] *= cache.dropout_mask[i];

        // d(mean BCE)/d(logit); zero where the clamp is active.
        Vec dz(C, 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            const double x = cache.scores[c];
            if (x <= kScoreClamp || x >= 1.0 - kScoreClamp) continue;
            dz[c] = (x - target[c]) / static_cast<double>(C);
        }

        g.cls_w = Matrix(C, pool_dim());
        g.cls_b.assign(C, 0.0);
        Vec dfeat(pool_dim(), 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            g.cls_b[c] = dz[c];
            const auto wrow = cls_w.row(c);
            for (std::size_t j = 0; j < pool_dim(); ++j) {
                g.cls_w(c, j) = dz[c] * features[j];
                dfeat[j] += dz[c] * wrow[j];
            }
        }
        if (!cache.dropout_mask.empty())
            for (std::size_t j = 0; j < dfeat.size(); ++j) dfeat[j] *= cache.dropout_mask[j];

        PoolGrads pg = pool_backward(cache.pool, dfeat);
        g.head_before = std::move(pg.before);
        g.head_after = std::move(pg.after);

        if (cfg.has_projection) {
            g.proj_w = matmul_tn(pg.x, cache.input);
            g.proj_b.assign(cfg.reduced_dim, 0.0);
            for (std::size_t i = 0; i < pg.x.rows(); ++i)
                for (std::size_t j = 0; j < pg.x.cols(); ++j) g.proj_b[j] += pg.x(i, j);
        }
        return g;
    }

    // Exact integer counts per named component.
    std::map<std::string, std::size_t> param_count() const {
        std::map<std::string, std::size_t> out;
        std::size_t projection = 0, pooling = 0;
        if (cfg.has_projection) projection = cfg.reduced_dim * cfg.input_dim + cfg.reduced_dim;
        auto head_params = [&](std::size_t k) {
            std::size_t n = 0;
            if (kind_uses_assignment(cfg.pool.kind)) n += k * cfg.reduced_dim + k;
            if (kind_uses_centers(cfg.pool.kind)) n += k * cfg.reduced_dim;
            return n;
        };
        if (has_cluster_heads()) {
            if (cfg.pool.temporally_aware)
                pooling = head_params(cfg.pool.clusters_before) + head_params(cfg.pool.clusters_after);
            else
                pooling = head_params(cfg.pool.clusters);
        }
        const std::size_t classifier = class_count() * (pool_dim() + 1);
        out["projection"] = projection;
        out["pooling"] = pooling;
        out["classifier"] = classifier;
        out["total"] = projection + pooling + classifier;
        return out;
    }

    std::vector<ParamView> param_views() {
        std::vector<ParamView> v;
        if (cfg.has_projection) {
            v.push_back({"projection.weight", proj_w.flat(), {proj_w.rows(), proj_w.cols()}});
            v.push_back({"projection.bias", {proj_b.data(), proj_b.size()}, {proj_b.size()}});
        }
        auto add_head = [&](const std::string& prefix, ClusterParams& h) {
            if (!h.w.empty()) v.push_back({prefix + ".w", h.w.flat(), {h.w.rows(), h.w.cols()}});
            if (!h.b.empty()) v.push_back({prefix + ".b", {h.b.data(), h.b.size()}, {h.b.size()}});
            if (!h.c.empty()) v.push_back({prefix + ".c", h.c.flat(), {h.c.rows(), h.c.cols()}});
        };
        if (has_cluster_heads()) {
            if (cfg.pool.temporally_aware) {
                add_head("pool.before", head_before);
                add_head("pool.after", head_after);
            } else {
                add_head("pool", head_before);
            }
        }
        v.push_back({"classifier.weight", cls_w.flat(), {cls_w.rows(), cls_w.cols()}});
        v.push_back({"classifier.bias", {cls_b.data(), cls_b.size()}, {cls_b.size()}});
        return v;
    }

    // Gradient views in the same order/naming as param_views().
    std::vector<ParamView> grad_views(ModelGrads& g) const {
        std::vector<ParamView> v;
        if (cfg.has_projection) {
            v.push_back({"projection.weight", g.proj_w.flat(), {}});
            v.push_back({"projection.bias", {g.proj_b.data(), g.proj_b.size()}, {}});
        }
        auto add_head = [&](const std::string& prefix, HeadGrads& h) {
            if (!h.w.empty()) v.push_back({prefix + ".w", h.w.flat(), {}});
            if (!h.b.empty()) v.push_back({prefix + ".b", {h.b.data(), h.b.size()}, {}});
            if (!h.c.empty()) v.push_back({prefix + ".c", h.c.flat(), {}});
        };
        if (has_cluster_heads()) {
            if (cfg.pool.temporally_aware) {
                add_head("pool.before", g.head_before);
                add_head("pool.after", g.head_after);
            } else {
                add_head("pool", g.head_before);
            }
        }
        v.push_back({"classifier.weight", g.cls_w.flat(), {}});
        v.push_back({"classifier.bias", {g.cls_b.data(), g.cls_b.size()}, {}});
        return v;
    }

    std::size_t param_size() {
        std::size_t n = 0;
        for (const auto& p : param_views()) n += p.data.size();
        return n;
    }

    Vec flat_params() {
        Vec out;
        for (const auto& p : param_views()) out.insert(out.end(), p.data.begin(), p.data.end());
        return out;
    }

    void set_flat_params(std::span<const double> flat) {
        std::size_t off = 0;
        for (auto& p : param_views()) {
            require(off + p.data.size() <= flat.size(), ErrorKind::shape_mismatch,
                    "set_flat_params: vector too short");
            std::copy(flat.begin() + off, flat.begin() + off + p.data.size(), p.data.begin());
            off += p.data.size();
        }
        require(off == flat.size(), ErrorKind::shape_mismatch, "set_flat_params: vector too long");
    }
};

}  // namespace spotkit
