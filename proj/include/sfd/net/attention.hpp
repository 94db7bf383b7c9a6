#pragma once

#include <cmath>

#include "sfd/core/lora.hpp"

namespace sfd::net {

using ad::Binder;
using ad::LoraAdapter;
using ad::Parameter;
using ad::Tensor;
using ad::Var;

// Multi-head scaled dot-product attention of queries X [a x d] over context
// Y [b x d_ctx]. Every projection carries a LoRA adapter; base weights train too.
template <class T>
struct Attention {
    int heads = 1;
    LoraAdapter<T> q;
    LoraAdapter<T> k;
    LoraAdapter<T> v;
    LoraAdapter<T> o;

    Attention() = default;
    Attention(const std::string& name, int d_model, int d_ctx, int heads_, int rank, Rng& rng) : heads(heads_)
    {
        if (heads < 1 || d_model % heads != 0) {
            throw std::invalid_argument(name + ": " + std::to_string(heads) + " heads do not divide width " +
                                        std::to_string(d_model));
        }
        auto init = [&](int out, int in) {
            const double b = 1.0 / std::sqrt(static_cast<double>(in));
            return Tensor<T>::uniform({out, in}, rng, -b, b);
        };
        const auto a = static_cast<T>(rank);
        q = LoraAdapter<T>(name + ".q", init(d_model, d_model), rank, a, rng, true);
        k = LoraAdapter<T>(name + ".k", init(d_model, d_ctx), rank, a, rng, true);
        v = LoraAdapter<T>(name + ".v", init(d_model, d_ctx), rank, a, rng, true);
        o = LoraAdapter<T>(name + ".o", init(d_model, d_model), rank, a, rng, true);
    }

    int width() const { return q.out_features(); }

    // Row-softmaxed attention maps, one per head.
    std::vector<Var<T>> weights(Binder<T>& bind, const Var<T>& x, const Var<T>& y) const
    {
        check(x, y);
        auto qx = ad::lora_forward(bind, q, x);
        auto ky = ad::lora_forward(bind, k, y);
        const int dh = width() / heads;
        const auto s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        std::vector<Var<T>> out;
        for (int h = 0; h < heads; ++h) {
            auto qh = ad::slice_cols(qx, h * dh, (h + 1) * dh);
            auto kh = ad::slice_cols(ky, h * dh, (h + 1) * dh);
            out.push_back(ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), s)));
        }
        return out;
    }

    Var<T> forward(Binder<T>& bind, const Var<T>& x, const Var<T>& y) const
    {
        const auto maps = weights(bind, x, y);
        auto vy = ad::lora_forward(bind, v, y);
        const int dh = width() / heads;
        std::vector<Var<T>> parts;
        for (int h = 0; h < heads; ++h) {
            parts.push_back(ad::matmul(maps[static_cast<std::size_t>(h)], ad::slice_cols(vy, h * dh, (h + 1) * dh)));
        }
        return ad::lora_forward(bind, o, heads == 1 ? parts.front() : ad::concat_cols(parts));
    }

    void collect(std::vector<Parameter<T>*>& out)
    {
        for (auto* a : {&q, &k, &v, &o}) {
            a->collect(out);
        }
    }

private:
    void check(const Var<T>& x, const Var<T>& y) const
    {
        if (x.cols() != q.in_features() || y.cols() != k.in_features()) {
            throw ad::ShapeError(q.base.name + ": attention inputs have widths " + std::to_string(x.cols()) + " and " +
                                 std::to_string(y.cols()) + ", expected " + std::to_string(q.in_features()) + " and " +
                                 std::to_string(k.in_features()));
        }
        if (y.rows() < 1) {
            throw ad::ShapeError(q.base.name + ": empty attention context");
        }
    }
};

} // namespace sfd::net
