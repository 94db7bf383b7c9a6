#pragma once

// Temporal transformer over the per-frame latents of one stream. Each block is
// self-attention across frames, cross-attention onto the conditioning tokens,
// then a per-frame MLP, all pre-norm with residuals.

#include "sfd/net/attention.hpp"

namespace sfd::net {

using ad::Linear;

// [sin(p w_0) .. sin(p w_{h-1}), cos(p w_0) .. cos(p w_{h-1})], w_i = 10000^(-i/h)
template <class T>
Tensor<T> sinusoid(const std::vector<double>& positions, int d)
{
    const int h = d / 2;
    Tensor<T> out({static_cast<int>(positions.size()), d}, T(0));
    for (int r = 0; r < out.rows(); ++r) {
        for (int i = 0; i < h; ++i) {
            const double a = positions[static_cast<std::size_t>(r)] * std::pow(10000.0, -static_cast<double>(i) / h);
            out.at(r, i) = static_cast<T>(std::sin(a));
            out.at(r, h + i) = static_cast<T>(std::cos(a));
        }
    }
    return out;
}

template <class T>
struct LayerNorm {
    Parameter<T> gain;
    Parameter<T> bias;

    LayerNorm() = default;
    LayerNorm(const std::string& name, int d) : gain{name + ".gain", Tensor<T>({1, d}, T(1))}, bias{name + ".bias", Tensor<T>({1, d}, T(0))} {}

    Var<T> forward(Binder<T>& bind, const Var<T>& x) const
    {
        return ad::add_row(ad::mul_row(ad::layernorm_rows(x), bind(gain)), bind(bias));
    }

    void collect(std::vector<Parameter<T>*>& out)
    {
        out.push_back(&gain);
        out.push_back(&bias);
    }
};

template <class T>
struct DenoiserBlock {
    LayerNorm<T> norm_self;
    Attention<T> self_attn;
    LayerNorm<T> norm_cross;
    Attention<T> cross_attn;
    LayerNorm<T> norm_ff;
    Linear<T> ff_in;
    Linear<T> ff_out;

    DenoiserBlock() = default;
    DenoiserBlock(const std::string& name, int d, int d_text, int heads, int rank, Rng& rng)
        : norm_self(name + ".norm_self", d), self_attn(name + ".self", d, d, heads, rank, rng),
          norm_cross(name + ".norm_cross", d), cross_attn(name + ".cross", d, d_text, heads, rank, rng),
          norm_ff(name + ".norm_ff", d), ff_in(name + ".ff_in", d, 4 * d, rng), ff_out(name + ".ff_out", 4 * d, d, rng)
    {
    }

    Var<T> forward(Binder<T>& bind, Var<T> x, const Var<T>& ctx) const
    {
        auto h = norm_self.forward(bind, x);
        x = ad::add(x, self_attn.forward(bind, h, h));
        x = ad::add(x, cross_attn.forward(bind, norm_cross.forward(bind, x), ctx));
        auto f = ff_out.forward(bind, ad::gelu(ff_in.forward(bind, norm_ff.forward(bind, x))));
        return ad::add(x, f);
    }

    void collect(std::vector<Parameter<T>*>& out)
    {
        norm_self.collect(out);
        self_attn.collect(out);
        norm_cross.collect(out);
        cross_attn.collect(out);
        norm_ff.collect(out);
        ff_in.collect(out);
        ff_out.collect(out);
    }
};

template <class T>
struct Denoiser {
    int steps = 100;
    Linear<T> in_proj;
    Linear<T> step_in;
    Linear<T> step_out;
    std::vector<DenoiserBlock<T>> blocks;
    LayerNorm<T> norm_out;
    Linear<T> head;

    Denoiser() = default;
    Denoiser(const std::string& name, int d, int d_text, int heads, int rank, int n_blocks, int steps_, Rng& rng)
        : steps(steps_), in_proj(name + ".in", d, d, rng), step_in(name + ".step_in", d, d, rng),
          step_out(name + ".step_out", d, d, rng), norm_out(name + ".norm_out", d), head(name + ".head", d, d, rng)
    {
        for (int b = 0; b < n_blocks; ++b) {
            blocks.emplace_back(name + ".block" + std::to_string(b), d, d_text, heads, rank, rng);
        }
    }

    int width() const { return in_proj.in_features(); }

    // zt [frames x d], ctx [tokens x d_text] -> predicted noise [frames x d]
    Var<T> forward(Binder<T>& bind, const Var<T>& zt, int t, const Var<T>& ctx) const
    {
        if (zt.cols() != width()) {
            throw ad::ShapeError("denoiser: latent width " + std::to_string(zt.cols()) + ", expected " +
                                 std::to_string(width()));
        }
        if (t < 1 || t > steps) {
            throw std::out_of_range("denoiser: diffusion step " + std::to_string(t) + " outside [1, " +
                                    std::to_string(steps) + "]");
        }
        auto& tape = bind.tape();
        const int d = width();
        std::vector<double> frames(static_cast<std::size_t>(zt.rows()));
        for (std::size_t i = 0; i < frames.size(); ++i) {
            frames[i] = static_cast<double>(i);
        }
        auto temb = step_out.forward(
            bind, ad::gelu(step_in.forward(bind, tape.leaf(sinusoid<T>({static_cast<double>(t)}, d)))));
        auto x = ad::add(in_proj.forward(bind, zt), tape.leaf(sinusoid<T>(frames, d)));
        x = ad::add_row(x, temb);
        for (const auto& b : blocks) {
            x = b.forward(bind, x, ctx);
        }
        return head.forward(bind, norm_out.forward(bind, x));
    }

    void collect(std::vector<Parameter<T>*>& out)
    {
        in_proj.collect(out);
        step_in.collect(out);
        step_out.collect(out);
        for (auto& b : blocks) {
            b.collect(out);
        }
        norm_out.collect(out);
        head.collect(out);
    }
};

} // namespace sfd::net
