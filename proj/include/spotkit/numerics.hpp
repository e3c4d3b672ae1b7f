#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "spotkit/error.hpp"
#include "spotkit/matrix.hpp"

namespace spotkit {

using Vec = std::vector<double>;

constexpr double kNormFloor = 1e-12;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// Max-subtracted softmax.
inline Vec softmax(std::span<const double> v) {
    require(!v.empty(), ErrorKind::invalid_argument, "softmax: empty input");
    require(all_finite(v), ErrorKind::invalid_argument, "softmax: non-finite input");
    const double m = *std::max_element(v.begin(), v.end());
    Vec out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

// v / max(‖v‖₂, eps); exact zero vectors pass through unchanged.
inline Vec l2_normalize(std::span<const double> v, double eps = kNormFloor) {
    require(all_finite(v), ErrorKind::invalid_argument, "l2_normalize: non-finite input");
    const double r = std::max(l2_norm(v), eps);
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / r;
    return out;
}

// Pulls an upstream gradient back through y = v / max(‖v‖, eps),
// given the forward output y and the pre-floor norm ‖v‖.
inline Vec l2_normalize_backward(std::span<const double> y, std::span<const double> dy, double norm,
                                 double eps = kNormFloor) {
    require(y.size() == dy.size(), ErrorKind::shape_mismatch, "l2_normalize_backward: size mismatch");
    Vec dv(dy.size());
    if (norm > eps) {
        const double yg = dot(y, dy);
        for (std::size_t i = 0; i < dy.size(); ++i) dv[i] = (dy[i] - y[i] * yg) / norm;
    } else {
        for (std::size_t i = 0; i < dy.size(); ++i) dv[i] = dy[i] / eps;
    }
    return dv;
}

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Vec m, v;
    std::uint64_t t = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

namespace detail {

// One bias-corrected Adam update over a parameter slice; bc1/bc2 are the
// 1 − βᵗ correction terms for the already-incremented step counter.
inline void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                        std::span<double> v, double bc1, double bc2, const AdamHyper& hp) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * grads[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
}

}  // namespace detail

inline void adam_step_inplace(std::span<double> params, std::span<const double> grads, AdamState& st,
                              const AdamHyper& hp) {
    require(params.size() == grads.size() && params.size() == st.m.size() && st.m.size() == st.v.size(),
            ErrorKind::shape_mismatch, "adam_step: length mismatch");
    st.t += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(st.t));
    detail::adam_update(params, grads, st.m, st.v, bc1, bc2, hp);
}

inline std::pair<Vec, AdamState> adam_step(const Vec& params, const Vec& grads, AdamState state,
                                           const AdamHyper& hp) {
    Vec p = params;
    adam_step_inplace(p, grads, state, hp);
    return {std::move(p), std::move(state)};
}

// Central differences (f(x + h·e_j) − f(x − h·e_j)) / 2h.
inline Vec finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                            std::span<const double> x, double h = 1e-5) {
    Vec xp(x.begin(), x.end());
    Vec g(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double orig = xp[j];
        xp[j] = orig + h;
        const double fp = f(xp);
        xp[j] = orig - h;
        const double fm = f(xp);
        xp[j] = orig;
        require(std::isfinite(fp) && std::isfinite(fm), ErrorKind::numeric,
                "finite_diff_grad: non-finite evaluation");
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace spotkit
