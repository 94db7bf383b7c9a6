#pragma once

#include <string>

#include "sfd/core/params.hpp"

namespace sfd::ad {

struct LoraConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Low-rank adapter around a base weight W [m x n]:
//   W_eff = W + (alpha / r) * B * A,   A [r x n], B [m x r]
// B starts at zero so the adapted layer initially reproduces the base layer.
template <class T>
struct LoraAdapter {
    Parameter<T> base;
    Parameter<T> a;
    Parameter<T> b;
    int rank = 0;
    T alpha = T(0);

    LoraAdapter() = default;

    LoraAdapter(const std::string& name, Tensor<T> base_weight, int r, T alpha_, Rng& rng, bool train_base = false)
        : rank(r), alpha(alpha_)
    {
        if (r <= 0) {
            throw LoraConfigError(name + ": LoRA rank must be positive");
        }
        const int m = base_weight.rows();
        const int n = base_weight.cols();
        base = Parameter<T>{name + ".weight", std::move(base_weight), train_base};
        const double bound = 1.0 / std::sqrt(static_cast<double>(n));
        a = Parameter<T>{name + ".lora_a", Tensor<T>::uniform({r, n}, rng, -bound, bound), true};
        b = Parameter<T>{name + ".lora_b", Tensor<T>({m, r}, T(0)), true};
    }

    int out_features() const { return base.value.rows(); }
    int in_features() const { return base.value.cols(); }
    T scaling() const { return alpha / static_cast<T>(rank); }

    void collect(std::vector<Parameter<T>*>& out)
    {
        out.push_back(&base);
        out.push_back(&a);
        out.push_back(&b);
    }
};

// Rows x [k x n] -> x * W_eff^T [k x m]. Evaluated as x W^T + s (x A^T) B^T so
// the dense update matrix is never formed.
template <class T>
Var<T> lora_forward(Binder<T>& bind, const LoraAdapter<T>& ad, const Var<T>& x)
{
    if (ad.rank <= 0) {
        throw LoraConfigError(ad.base.name + ": LoRA rank must be positive");
    }
    if (x.cols() != ad.in_features()) {
        throw ShapeError(ad.base.name + ": input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(ad.in_features()));
    }
    auto base_out = matmul(x, transpose(bind(ad.base)));
    auto low = matmul(matmul(x, transpose(bind(ad.a))), transpose(bind(ad.b)));
    return add(base_out, scale(low, ad.scaling()));
}

// Dense W + (alpha/r) B A, for export and tests.
template <class T>
Tensor<T> lora_merged_weight(const LoraAdapter<T>& ad)
{
    const int m = ad.out_features(), n = ad.in_features();
    Tensor<T> w = ad.base.value;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            Acc<T> s = 0;
            for (int k = 0; k < ad.rank; ++k) {
                s += static_cast<Acc<T>>(ad.b.value.at(i, k)) * ad.a.value.at(k, j);
            }
            w.at(i, j) += static_cast<T>(ad.scaling() * s);
        }
    }
    return w;
}

} // namespace sfd::ad
