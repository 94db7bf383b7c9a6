#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "sfd/core/params.hpp"

namespace sfd::ad {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <class T>
struct AdamWState {
    AdamWConfig config;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    long step = 0;
};

template <class T>
AdamWState<T> make_adamw_state(std::span<Parameter<T>* const> params, AdamWConfig cfg = {})
{
    AdamWState<T> st;
    st.config = cfg;
    for (const auto* p : params) {
        st.m.emplace_back(p->value.shape(), T(0));
        st.v.emplace_back(p->value.shape(), T(0));
    }
    return st;
}

// One decoupled-weight-decay Adam step:
//   theta <- theta - lr * wd * theta
//   m <- b1 m + (1 - b1) g ;  v <- b2 v + (1 - b2) g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
template <class T>
void adamw_step(std::span<Parameter<T>* const> params, std::span<const Tensor<T>> grads, AdamWState<T>& st)
{
    const auto& c = st.config;
    if (!(c.lr > 0.0)) {
        throw std::invalid_argument("adamw: learning rate must be positive");
    }
    if (params.size() != grads.size() || params.size() != st.m.size() || params.size() != st.v.size()) {
        throw ShapeError("adamw: parameter, gradient and state counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& shape = params[i]->value.shape();
        if (grads[i].shape() != shape || st.m[i].shape() != shape || st.v[i].shape() != shape) {
            throw ShapeError("adamw: shape mismatch for " + params[i]->name);
        }
        if (!grads[i].all_finite()) {
            throw NonFiniteError("adamw: non-finite gradient for " + params[i]->name);
        }
    }

    st.step += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->trainable) {
            continue;
        }
        auto& theta = params[i]->value;
        auto& m = st.m[i];
        auto& v = st.v[i];
        const auto& g = grads[i];
        for (std::size_t k = 0; k < theta.size(); ++k) {
            double th = theta[k];
            if (c.weight_decay != 0.0) {
                th -= c.lr * c.weight_decay * th;
            }
            const double gk = g[k];
            const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
            const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
            m[k] = static_cast<T>(mk);
            v[k] = static_cast<T>(vk);
            const double update = (mk / bc1) / (std::sqrt(vk / bc2) + c.eps);
            if (update != 0.0) {
                th -= c.lr * update;
            }
            theta[k] = static_cast<T>(th);
        }
    }
}

} // namespace sfd::ad
