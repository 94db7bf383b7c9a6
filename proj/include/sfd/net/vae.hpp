#pragma once

// Frame-wise VAE shared by both streams. A flow frame is flattened
// channel-major to one row of 3*G*G values.

#include "sfd/core/params.hpp"
#include "sfd/scene/flow.hpp"

namespace sfd::net {

using ad::Binder;
using ad::Linear;
using ad::Parameter;
using ad::Var;

inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 20.0;

template <class T>
Tensor<T> frame_rows(const scene::FlowTensor& f)
{
    const int g = f.grid;
    Tensor<T> out({f.frames, 3 * g * g});
    for (int t = 0; t < f.frames; ++t) {
        int k = 0;
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < g; ++i) {
                for (int j = 0; j < g; ++j) {
                    out.at(t, k++) = static_cast<T>(f.at(c, t, i, j));
                }
            }
        }
    }
    return out;
}

template <class T>
scene::FlowTensor rows_to_flow(const Tensor<T>& rows, int grid)
{
    if (rows.cols() != 3 * grid * grid) {
        throw ad::ShapeError("frame rows do not match a " + std::to_string(grid) + "x" + std::to_string(grid) +
                             " grid");
    }
    scene::FlowTensor f(rows.rows(), grid);
    for (int t = 0; t < rows.rows(); ++t) {
        int k = 0;
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < grid; ++i) {
                for (int j = 0; j < grid; ++j) {
                    f.at(c, t, i, j) = static_cast<float>(rows.at(t, k++));
                }
            }
        }
    }
    return f;
}

template <class T>
struct VaeEncoding {
    Var<T> mu;
    Var<T> logvar;
};

template <class T>
struct Vae {
    Linear<T> enc;
    Linear<T> enc_mu;
    Linear<T> enc_logvar;
    Linear<T> dec;
    Linear<T> dec_out;

    Vae() = default;
    Vae(const std::string& name, int frame_dim, int hidden, int latent, Rng& rng)
        : enc(name + ".enc", frame_dim, hidden, rng), enc_mu(name + ".enc_mu", hidden, latent, rng),
          enc_logvar(name + ".enc_logvar", hidden, latent, rng), dec(name + ".dec", latent, hidden, rng),
          dec_out(name + ".dec_out", hidden, frame_dim, rng)
    {
    }

    int frame_dim() const { return enc.in_features(); }
    int latent_dim() const { return enc_mu.out_features(); }

    VaeEncoding<T> encode(Binder<T>& bind, const Var<T>& frames) const
    {
        auto h = ad::gelu(enc.forward(bind, frames));
        return {enc_mu.forward(bind, h),
                ad::clamp(enc_logvar.forward(bind, h), static_cast<T>(kLogVarMin), static_cast<T>(kLogVarMax))};
    }

    // All three channels are squashed to [0, 1].
    Var<T> decode(Binder<T>& bind, const Var<T>& z) const
    {
        return ad::sigmoid(dec_out.forward(bind, ad::gelu(dec.forward(bind, z))));
    }

    void collect(std::vector<Parameter<T>*>& out)
    {
        for (auto* l : {&enc, &enc_mu, &enc_logvar, &dec, &dec_out}) {
            l->collect(out);
        }
    }
};

template <class T>
struct LatentDraw {
    Tensor<T> mu;
    Tensor<T> logvar;
    Tensor<T> z;
};

// z = mu + exp(logvar / 2) * xi, one row per frame.
template <class T>
LatentDraw<T> vae_encode(const Vae<T>& vae, const Tensor<T>& frames, Rng& rng)
{
    if (!frames.all_finite()) {
        throw ad::NonFiniteError("vae_encode: non-finite frame");
    }
    ad::Tape<T> tape;
    Binder<T> bind(tape, false);
    const auto e = vae.encode(bind, tape.leaf(frames));
    LatentDraw<T> d{e.mu.value(), e.logvar.value(), e.mu.value()};
    for (std::size_t i = 0; i < d.z.size(); ++i) {
        d.z[i] = static_cast<T>(d.mu[i] + std::exp(0.5 * d.logvar[i]) * rng.normal());
    }
    return d;
}

template <class T>
Tensor<T> vae_decode(const Vae<T>& vae, const Tensor<T>& z)
{
    if (!z.all_finite()) {
        throw ad::NonFiniteError("vae_decode: non-finite latent");
    }
    ad::Tape<T> tape;
    Binder<T> bind(tape, false);
    return vae.decode(bind, tape.leaf(z)).value();
}

// Reconstruction MSE (mean over elements) + kl_weight * KL(q || N(0, I)) summed
// over latent dimensions and averaged over rows.
template <class T>
Var<T> vae_loss(Binder<T>& bind, const Vae<T>& vae, const Var<T>& frames, const Tensor<T>& xi, double kl_weight)
{
    const auto e = vae.encode(bind, frames);
    auto& tape = bind.tape();
    auto z = ad::add(e.mu, ad::mul(ad::exp(ad::scale(e.logvar, static_cast<T>(0.5))), tape.leaf(xi)));
    auto diff = ad::sub(vae.decode(bind, z), frames);
    auto mse = ad::mean(ad::mul(diff, diff));
    // KL per element: 0.5 (mu^2 + exp(logvar) - 1 - logvar)
    auto kl_el = ad::add_scalar(ad::sub(ad::add(ad::mul(e.mu, e.mu), ad::exp(e.logvar)), e.logvar), static_cast<T>(-1));
    auto kl = ad::scale(ad::sum(kl_el), static_cast<T>(0.5 / frames.rows()));
    return ad::add(mse, ad::scale(kl, static_cast<T>(kl_weight)));
}

} // namespace sfd::net
