#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spotkit/error.hpp"
#include "spotkit/matrix.hpp"
#include "spotkit/numerics.hpp"
#include "spotkit/rng.hpp"

namespace spotkit {

enum class PoolKind { max, avg, vlad, netvlad, netrvlad };

inline const char* pool_kind_name(PoolKind k) {
    switch (k) {
        case PoolKind::max: return "max";
        case PoolKind::avg: return "avg";
        case PoolKind::vlad: return "vlad";
        case PoolKind::netvlad: return "netvlad";
        case PoolKind::netrvlad: return "netrvlad";
    }
    return "?";
}

inline PoolKind parse_pool_kind(const std::string& s) {
    if (s == "max") return PoolKind::max;
    if (s == "avg") return PoolKind::avg;
    if (s == "vlad") return PoolKind::vlad;
    if (s == "netvlad") return PoolKind::netvlad;
    if (s == "netrvlad") return PoolKind::netrvlad;
    fail(ErrorKind::invalid_argument, "unknown pooling kind: " + s);
}

inline bool kind_uses_clusters(PoolKind k) {
    return k == PoolKind::vlad || k == PoolKind::netvlad || k == PoolKind::netrvlad;
}
// Learned soft-assignment parameters (w, b).
inline bool kind_uses_assignment(PoolKind k) { return k == PoolKind::netvlad || k == PoolKind::netrvlad; }
// Cluster centers c subtracted from the features.
inline bool kind_uses_centers(PoolKind k) { return k == PoolKind::vlad || k == PoolKind::netvlad; }

struct PoolSpec {
    PoolKind kind = PoolKind::netvlad;
    bool temporally_aware = false;
    std::size_t clusters = 64;
    std::size_t clusters_before = 0;  // 0 → clusters/2
    std::size_t clusters_after = 0;

    // Fills the per-half cluster counts and checks K = K_b + K_a.
    PoolSpec normalized() const {
        PoolSpec s = *this;
        if (!kind_uses_clusters(s.kind)) {
            s.clusters = 0;
            s.clusters_before = 0;
            s.clusters_after = 0;
            return s;
        }
        require(s.clusters >= 1, ErrorKind::invalid_argument, "pool spec: cluster count must be >= 1");
        if (s.temporally_aware) {
            if (s.clusters_before == 0 && s.clusters_after == 0) {
                require(s.clusters % 2 == 0, ErrorKind::invalid_argument,
                        "pool spec: odd cluster count needs explicit per-half counts");
                s.clusters_before = s.clusters / 2;
                s.clusters_after = s.clusters / 2;
            }
            require(s.clusters_before >= 1 && s.clusters_after >= 1, ErrorKind::invalid_argument,
                    "pool spec: per-half cluster counts must be >= 1");
            require(s.clusters == s.clusters_before + s.clusters_after, ErrorKind::invalid_argument,
                    "pool spec: clusters != clusters_before + clusters_after");
        } else {
            s.clusters_before = 0;
            s.clusters_after = 0;
        }
        return s;
    }
};

// Length of the pooled descriptor for features of width `feature_dim`.
inline std::size_t pool_output_dim(const PoolSpec& spec, std::size_t feature_dim) {
    if (kind_uses_clusters(spec.kind)) return spec.clusters * feature_dim;  // K_b + K_a = K
    return spec.temporally_aware ? 2 * feature_dim : feature_dim;
}

// Learnable vocabulary of one pooling head: assignment weights/biases and
// cluster centers. VLAD stores centers only; NetRVLAD drops the centers.
struct ClusterParams {
    Matrix w;  // K × D
    Vec b;     // K
    Matrix c;  // K × D

    std::size_t cluster_count() const { return w.rows() ? w.rows() : c.rows(); }
    std::size_t dim() const { return w.cols() ? w.cols() : c.cols(); }

    static ClusterParams init(PoolKind kind, std::size_t k, std::size_t d, Rng& rng) {
        require(k >= 1, ErrorKind::invalid_argument, "cluster params: K must be >= 1");
        ClusterParams p;
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        if (kind_uses_assignment(kind)) {
            p.w = Matrix(k, d);
            for (double& x : p.w.flat()) x = rng.uniform(-scale, scale);
            p.b = Vec(k, 0.0);
        }
        if (kind_uses_centers(kind)) {
            p.c = Matrix(k, d);
            for (double& x : p.c.flat()) x = rng.uniform(-scale, scale);
        }
        return p;
    }
};

// Saved intermediates of one pooling head forward, enough to run the exact
// backward pass without touching the live parameters.
struct PoolCache {
    PoolKind kind = PoolKind::netvlad;
    Matrix X;         // frames the head pooled (post feature-norm when wrapped)
    Matrix assign_w;  // copy of w (soft kinds)
    Matrix centers;   // copy of c (vlad / netvlad)
    Matrix A;         // N × K assignment; soft rows or hard 0/1 rows
    Vec col_sum;      // Σ_i A(i,k)
    Matrix V;         // K × D raw descriptor before normalization
    Matrix U;         // V with per-cluster L2 applied
    Vec row_norm;     // ‖V_k‖₂ before flooring
    double flat_norm = 0.0;
    Vec value;
    std::vector<std::size_t> argmax;  // max pool only
};

struct HeadOutput {
    Vec value;
    PoolCache cache;
};

// Gradients mirroring one head's inputs; unused members stay empty.
struct HeadGrads {
    Matrix x;
    Matrix w;
    Vec b;
    Matrix c;
};

namespace detail {

inline void check_cluster_shapes(const Matrix& X, const ClusterParams& p, bool need_assign, bool need_centers) {
    require(X.rows() >= 1, ErrorKind::invalid_argument, "pooling: need at least one frame");
    require(p.cluster_count() >= 1, ErrorKind::invalid_argument, "pooling: K must be >= 1");
    if (need_assign) {
        require(p.w.rows() == p.cluster_count() && p.b.size() == p.cluster_count(), ErrorKind::shape_mismatch,
                "pooling: w/b cluster counts differ");
        require(p.w.cols() == X.cols(), ErrorKind::shape_mismatch, "pooling: w dim != feature dim");
    }
    if (need_centers) {
        require(p.c.rows() == p.cluster_count(), ErrorKind::shape_mismatch, "pooling: c cluster count differs");
        require(p.c.cols() == X.cols(), ErrorKind::shape_mismatch, "pooling: c dim != feature dim");
    }
}

// Per-cluster L2 over the feature dimension, flatten row-major, global L2.
inline void finalize_descriptor(PoolCache& cache) {
    const std::size_t k = cache.V.rows();
    const std::size_t d = cache.V.cols();
    cache.U = Matrix(k, d);
    cache.row_norm.assign(k, 0.0);
    for (std::size_t r = 0; r < k; ++r) {
        const double n = l2_norm(cache.V.row(r));
        cache.row_norm[r] = n;
        const double div = std::max(n, kNormFloor);
        for (std::size_t j = 0; j < d; ++j) cache.U(r, j) = cache.V(r, j) / div;
    }
    const auto u = cache.U.flat();
    cache.flat_norm = l2_norm(u);
    const double div = std::max(cache.flat_norm, kNormFloor);
    cache.value.assign(u.begin(), u.end());
    for (double& x : cache.value) x /= div;
}

}  // namespace detail

// Row-wise softmax of X·wᵀ + b (the conv-softmax assignment form).
inline Matrix soft_assign(const Matrix& X, const ClusterParams& p) {
    detail::check_cluster_shapes(X, p, /*need_assign=*/true, /*need_centers=*/false);
    Matrix logits = matmul_nt(X, p.w);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto row = logits.row(i);
        for (std::size_t k = 0; k < row.size(); ++k) row[k] += p.b[k];
        const Vec sm = softmax(row);
        for (std::size_t k = 0; k < row.size(); ++k) row[k] = sm[k];
    }
    return logits;
}

// Hard nearest-center assignment; ties go to the lowest cluster index.
inline Matrix hard_assign(const Matrix& X, const Matrix& centers) {
    Matrix A(X.rows(), centers.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        std::size_t best = 0;
        double best_d = 0.0;
        for (std::size_t k = 0; k < centers.rows(); ++k) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < X.cols(); ++j) {
                const double diff = X(i, j) - centers(k, j);
                d2 += diff * diff;
            }
            if (k == 0 || d2 < best_d) {
                best = k;
                best_d = d2;
            }
        }
        A(i, best) = 1.0;
    }
    return A;
}

namespace detail {

inline HeadOutput aggregate_descriptor(PoolKind kind, const Matrix& X, const ClusterParams& p, Matrix A) {
    PoolCache cache;
    cache.kind = kind;
    cache.X = X;
    if (kind_uses_assignment(kind)) cache.assign_w = p.w;
    if (kind_uses_centers(kind)) cache.centers = p.c;
    cache.A = std::move(A);
    const std::size_t k = cache.A.cols();
    cache.col_sum.assign(k, 0.0);
    for (std::size_t i = 0; i < cache.A.rows(); ++i)
        for (std::size_t c = 0; c < k; ++c) cache.col_sum[c] += cache.A(i, c);
    // Two-operand residual split: V = Aᵀ·X − diag(Σ_i a)·C.
    cache.V = matmul_tn(cache.A, X);
    if (kind_uses_centers(kind)) {
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t j = 0; j < X.cols(); ++j) cache.V(r, j) -= cache.col_sum[r] * p.c(r, j);
    }
    finalize_descriptor(cache);
    return {cache.value, std::move(cache)};
}

}  // namespace detail

// Hard-assignment VLAD descriptor with the same normalization chain as the
// soft variants.
inline HeadOutput vlad_forward(const Matrix& X, const ClusterParams& p) {
    detail::check_cluster_shapes(X, p, /*need_assign=*/false, /*need_centers=*/true);
    return detail::aggregate_descriptor(PoolKind::vlad, X, p, hard_assign(X, p.c));
}

// Reference NetVLAD path: materializes the full N×K×D residual tensor before
// weighting and summing. Kept for equivalence tests and the benchmark.
inline HeadOutput netvlad_forward_naive(const Matrix& X, const ClusterParams& p) {
    detail::check_cluster_shapes(X, p, /*need_assign=*/true, /*need_centers=*/true);
    const std::size_t n = X.rows(), k = p.cluster_count(), d = X.cols();
    PoolCache cache;
    cache.kind = PoolKind::netvlad;
    cache.X = X;
    cache.assign_w = p.w;
    cache.centers = p.c;
    cache.A = soft_assign(X, p);
    cache.col_sum.assign(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) cache.col_sum[c] += cache.A(i, c);
    Matrix residuals(n, k * d);  // the 4-D tensor of the literal formulation, one batch element
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t j = 0; j < d; ++j) residuals(i, c * d + j) = X(i, j) - p.c(c, j);
    cache.V = Matrix(k, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            const double a = cache.A(i, c);
            for (std::size_t j = 0; j < d; ++j) cache.V(c, j) += a * residuals(i, c * d + j);
        }
    detail::finalize_descriptor(cache);
    return {cache.value, std::move(cache)};
}

// Production NetVLAD: residual split into two matrix products, no N×K×D
// intermediate.
inline HeadOutput netvlad_forward_efficient(const Matrix& X, const ClusterParams& p) {
    detail::check_cluster_shapes(X, p, /*need_assign=*/true, /*need_centers=*/true);
    return detail::aggregate_descriptor(PoolKind::netvlad, X, p, soft_assign(X, p));
}

// Residual-less NetVLAD: V(j,k) = Σ_i ã_k(x_i)·x_i(j).
inline HeadOutput netrvlad_forward(const Matrix& X, const ClusterParams& p) {
    detail::check_cluster_shapes(X, p, /*need_assign=*/true, /*need_centers=*/false);
    return detail::aggregate_descriptor(PoolKind::netrvlad, X, p, soft_assign(X, p));
}

// Column-wise max or mean. Max ties go to the lowest frame index.
inline HeadOutput reduce_pool(const Matrix& X, PoolKind kind) {
    require(kind == PoolKind::max || kind == PoolKind::avg, ErrorKind::invalid_argument,
            "reduce_pool: kind must be max or avg");
    require(X.rows() >= 1, ErrorKind::invalid_argument, "reduce_pool: need at least one frame");
    PoolCache cache;
    cache.kind = kind;
    cache.X = X;
    cache.value.assign(X.cols(), 0.0);
    if (kind == PoolKind::max) {
        cache.argmax.assign(X.cols(), 0);
        for (std::size_t j = 0; j < X.cols(); ++j) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < X.rows(); ++i)
                if (X(i, j) > X(best, j)) best = i;
            cache.argmax[j] = best;
            cache.value[j] = X(best, j);
        }
    } else {
        for (std::size_t i = 0; i < X.rows(); ++i)
            for (std::size_t j = 0; j < X.cols(); ++j) cache.value[j] += X(i, j);
        for (double& x : cache.value) x /= static_cast<double>(X.rows());
    }
    return {cache.value, cache};
}

inline HeadOutput pool_head_forward(const Matrix& X, PoolKind kind, const ClusterParams* params) {
    switch (kind) {
        case PoolKind::max:
        case PoolKind::avg: return reduce_pool(X, kind);
        case PoolKind::vlad:
            require(params != nullptr, ErrorKind::invalid_argument, "vlad: missing params");
            return vlad_forward(X, *params);
        case PoolKind::netvlad:
            require(params != nullptr, ErrorKind::invalid_argument, "netvlad: missing params");
            return netvlad_forward_efficient(X, *params);
        case PoolKind::netrvlad:
            require(params != nullptr, ErrorKind::invalid_argument, "netrvlad: missing params");
            return netrvlad_forward(X, *params);
    }
    fail(ErrorKind::invalid_argument, "pool_head_forward: bad kind");
}

namespace detail {

// Softmax Jacobian applied row-wise: dL(i,·) = A(i,·) ⊙ (dA(i,·) − ⟨dA, A⟩).
inline Matrix softmax_rows_backward(const Matrix& A, const Matrix& dA) {
    Matrix dlogits(A.rows(), A.cols());
    for (std::size_t i = 0; i < A.rows(); ++i) {
        const double s = dot(dA.row(i), A.row(i));
        for (std::size_t k = 0; k < A.cols(); ++k) dlogits(i, k) = A(i, k) * (dA(i, k) - s);
    }
    return dlogits;
}

}  // namespace detail

// Gradients of a scalar loss through soft_assign, given dL/dA.
// Returns {dX, dW, db}.
inline void soft_assign_backward(const Matrix& X, const Matrix& W, const Matrix& A, const Matrix& dA,
                                 Matrix& dX_accum, Matrix& dW, Vec& db) {
    const Matrix dlogits = detail::softmax_rows_backward(A, dA);
    const Matrix dx = matmul(dlogits, W);
    for (std::size_t i = 0; i < dx.rows(); ++i)
        for (std::size_t j = 0; j < dx.cols(); ++j) dX_accum(i, j) += dx(i, j);
    dW = matmul_tn(dlogits, X);
    db.assign(dlogits.cols(), 0.0);
    for (std::size_t i = 0; i < dlogits.rows(); ++i)
        for (std::size_t k = 0; k < dlogits.cols(); ++k) db[k] += dlogits(i, k);
}

// Exact gradients through aggregation, per-cluster L2 and global L2.
inline HeadGrads pool_head_backward(const PoolCache& cache, std::span<const double> upstream) {
    require(upstream.size() == cache.value.size(), ErrorKind::shape_mismatch,
            "pool_head_backward: upstream size does not match cached output");
    const std::size_t n = cache.X.rows();
    const std::size_t d = cache.X.cols();
    HeadGrads g;
    g.x = Matrix(n, d);
    if (cache.kind == PoolKind::max) {
        for (std::size_t j = 0; j < d; ++j) g.x(cache.argmax[j], j) = upstream[j];
        return g;
    }
    if (cache.kind == PoolKind::avg) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g.x(i, j) = upstream[j] / static_cast<double>(n);
        return g;
    }

    const std::size_t k = cache.V.rows();
    // Global L2.
    const Vec du = l2_normalize_backward(cache.value, upstream, cache.flat_norm);
    // Per-cluster L2, row by row.
    Matrix dV(k, d);
    for (std::size_t r = 0; r < k; ++r) {
        const Vec drow = l2_normalize_backward(cache.U.row(r), std::span<const double>(du).subspan(r * d, d),
                                               cache.row_norm[r]);
        for (std::size_t j = 0; j < d; ++j) dV(r, j) = drow[j];
    }
    // Aggregation.
    Matrix dx = matmul(cache.A, dV);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g.x(i, j) = dx(i, j);
    if (kind_uses_centers(cache.kind)) {
        g.c = Matrix(k, d);
        for (std::size_t r = 0; r < k; ++r)
            for (std::size_t j = 0; j < d; ++j) g.c(r, j) = -cache.col_sum[r] * dV(r, j);
    }
    if (kind_uses_assignment(cache.kind)) {
        Matrix dA = matmul_nt(cache.X, dV);
        if (kind_uses_centers(cache.kind)) {
            for (std::size_t r = 0; r < k; ++r) {
                const double rc = dot(dV.row(r), cache.centers.row(r));
                for (std::size_t i = 0; i < n; ++i) dA(i, r) -= rc;
            }
        }
        soft_assign_backward(cache.X, cache.assign_w, cache.A, dA, g.x, g.w, g.b);
    }
    return g;
}

// Splits temporally ordered frames covering [−t_before, +t_after] around the
// window center into past (offset < 0) and future (offset ≥ 0) halves; the
// center frame lands in the future half.
inline std::pair<Matrix, Matrix> temporal_split(const Matrix& X, double frame_rate, double t_before,
                                                double t_after) {
    require(frame_rate > 0 && t_before > 0 && t_after > 0, ErrorKind::invalid_argument,
            "temporal_split: rate and spans must be positive");
    const std::size_t n = X.rows();
    const auto split = static_cast<std::size_t>(std::llround(t_before * frame_rate));
    require(split >= 1 && split < n, ErrorKind::invalid_argument,
            "temporal_split: empty half (window too small for frame rate)");
    Matrix before(split, X.cols());
    Matrix after(n - split, X.cols());
    for (std::size_t i = 0; i < split; ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) before(i, j) = X(i, j);
    for (std::size_t i = split; i < n; ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) after(i - split, j) = X(i, j);
    return {std::move(before), std::move(after)};
}

// Cache of a full pooling call, plain or temporally aware.
struct PoolingCache {
    PoolSpec spec;
    std::size_t split = 0;  // 0 when plain
    Vec frame_norms;        // per-frame pre-normalization norms (temporally aware only)
    PoolCache before;       // the single head when plain
    PoolCache after;
};

struct PoolOutput {
    Vec value;
    PoolingCache cache;
};

struct PoolGrads {
    Matrix x;
    HeadGrads before;
    HeadGrads after;
};

namespace detail {

// Normalize each frame along the feature dimension, recording pre-floor norms.
inline Matrix normalize_frames(const Matrix& X, Vec& norms, std::size_t offset) {
    Matrix out(X.rows(), X.cols());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const double n = l2_norm(X.row(i));
        norms[offset + i] = n;
        const double div = std::max(n, kNormFloor);
        for (std::size_t j = 0; j < X.cols(); ++j) out(i, j) = X(i, j) / div;
    }
    return out;
}

}  // namespace detail

// Temporally-aware wrapper: splits the window into past/future halves,
// L2-normalizes each half's frames along the feature dimension, pools each
// half with its own vocabulary and concatenates [V_before ‖ V_after].
inline PoolOutput pool_plusplus(const Matrix& X, const PoolSpec& raw_spec, const ClusterParams* before,
                                const ClusterParams* after) {
    const PoolSpec spec = raw_spec.normalized();
    require(spec.temporally_aware, ErrorKind::invalid_argument, "pool_plusplus: spec is not temporally aware");
    const std::size_t n = X.rows();
    require(n >= 2, ErrorKind::invalid_argument, "pool_plusplus: need at least two frames");
    const std::size_t split = n / 2;

    PoolOutput out;
    out.cache.spec = spec;
    out.cache.split = split;
    out.cache.frame_norms.assign(n, 0.0);

    Matrix xb(split, X.cols()), xa(n - split, X.cols());
    for (std::size_t i = 0; i < split; ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) xb(i, j) = X(i, j);
    for (std::size_t i = split; i < n; ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) xa(i - split, j) = X(i, j);
    xb = detail::normalize_frames(xb, out.cache.frame_norms, 0);
    xa = detail::normalize_frames(xa, out.cache.frame_norms, split);

    HeadOutput hb = pool_head_forward(xb, spec.kind, before);
    HeadOutput ha = pool_head_forward(xa, spec.kind, after);
    out.value = hb.value;
    out.value.insert(out.value.end(), ha.value.begin(), ha.value.end());
    out.cache.before = std::move(hb.cache);
    out.cache.after = std::move(ha.cache);
    return out;
}

inline PoolOutput pool_forward(const Matrix& X, const PoolSpec& raw_spec, const ClusterParams* before,
                               const ClusterParams* after) {
    const PoolSpec spec = raw_spec.normalized();
    if (spec.temporally_aware) return pool_plusplus(X, spec, before, after);
    PoolOutput out;
    HeadOutput h = pool_head_forward(X, spec.kind, before);
    out.value = h.value;
    out.cache.spec = spec;
    out.cache.before = std::move(h.cache);
    return out;
}

inline PoolGrads pool_backward(const PoolingCache& cache, std::span<const double> upstream) {
    PoolGrads g;
    if (!cache.spec.temporally_aware) {
        g.before = pool_head_backward(cache.before, upstream);
        g.x = std::move(g.before.x);
        g.before.x = Matrix();
        return g;
    }
    const std::size_t dim_b = cache.before.value.size();
    const std::size_t dim_a = cache.after.value.size();
    require(upstream.size() == dim_b + dim_a, ErrorKind::shape_mismatch,
            "pool_backward: upstream size does not match cached output");
    g.before = pool_head_backward(cache.before, upstream.subspan(0, dim_b));
    g.after = pool_head_backward(cache.after, upstream.subspan(dim_b, dim_a));

    const std::size_t n = cache.before.X.rows() + cache.after.X.rows();
    const std::size_t d = cache.before.X.cols();
    g.x = Matrix(n, d);
    for (std::size_t i = 0; i < cache.before.X.rows(); ++i) {
        const Vec dxi = l2_normalize_backward(cache.before.X.row(i), g.before.x.row(i), cache.frame_norms[i]);
        for (std::size_t j = 0; j < d; ++j) g.x(i, j) = dxi[j];
    }
    for (std::size_t i = 0; i < cache.after.X.rows(); ++i) {
        const std::size_t gi = cache.split + i;
        const Vec dxi = l2_normalize_backward(cache.after.X.row(i), g.after.x.row(i), cache.frame_norms[gi]);
        for (std::size_t j = 0; j < d; ++j) g.x(gi, j) = dxi[j];
    }
    g.before.x = Matrix();
    g.after.x = Matrix();
    return g;
}

}  // namespace spotkit
