#pragma once

// Two-stream flow diffusion model: an instruction encoder plus one VAE and
// denoiser shared by both streams, or one of each per stream when unshared.

#include <array>
#include <cmath>
#include <optional>
#include <utility>

#include "sfd/core/checkpoint.hpp"
#include "sfd/net/denoiser.hpp"
#include "sfd/net/schedule.hpp"
#include "sfd/net/text.hpp"
#include "sfd/net/vae.hpp"

namespace sfd::net {

struct NetConfig {
    int grid = 8;
    int frames = 32; // latent sequence length
    int latent = 16;
    int hidden = 64; // VAE hidden width
    int d_text = 16;
    int heads = 2;
    int lora_rank = 4;
    int blocks = 2;
    int steps = 100;
    double beta_first = 1e-4;
    double beta_last = 0.02;
    bool shared = true;

    int frame_dim() const { return 3 * grid * grid; }
    NoiseSchedule schedule() const { return NoiseSchedule::linear(steps, beta_first, beta_last); }
    bool operator==(const NetConfig&) const = default;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything one stream sees apart from the instruction encoder.
template <class T>
struct Branch {
    Vae<T> vae;
    // Latent normalization fitted after the VAE stage: z = (mu - shift) * scale.
    Parameter<T> latent_shift;
    Parameter<T> latent_scale;
    Linear<T> frame_token; // encoded initial frame -> one context token
    Denoiser<T> denoiser;

    Branch(const std::string& prefix, const NetConfig& c, Rng& rng)
        : vae(prefix + "vae", c.frame_dim(), c.hidden, c.latent, rng),
          latent_shift{prefix + "latent.shift", Tensor<T>({1, c.latent}, T(0)), false},
          latent_scale{prefix + "latent.scale", Tensor<T>::scalar(T(1)), false},
          frame_token(prefix + "frame_token", c.latent, c.d_text, rng),
          denoiser(prefix + "denoiser", c.latent, c.d_text, c.heads, c.lora_rank, c.blocks, c.steps, rng)
    {
    }
};

template <class T>
struct SfdNet {
    NetConfig config;
    NoiseSchedule schedule;
    TextEncoder<T> text;
    std::vector<Branch<T>> branches; // one when shared, else one per stream
    Parameter<T> trained_stages;     // 0 fresh, 1 after the VAE stage, 2 after diffusion

    SfdNet(const NetConfig& c, std::uint64_t seed) : config(c), schedule(c.schedule())
    {
        Rng rng(seed);
        text = TextEncoder<T>("text", Vocabulary::standard().size(), c.d_text, rng);
        for (int b = 0; b < (c.shared ? 1 : 2); ++b) {
            branches.emplace_back(c.shared ? "" : "s" + std::to_string(b + 1) + ".", c, rng);
        }
        trained_stages = {"trained_stages", Tensor<T>::scalar(T(0)), false};
    }

    int stages() const { return static_cast<int>(trained_stages.value.item()); }

    // stream is 0-based
    const Branch<T>& branch(int stream) const
    {
        if (stream < 0 || stream > 1) {
            throw std::out_of_range("stream index " + std::to_string(stream));
        }
        return branches[config.shared ? 0 : static_cast<std::size_t>(stream)];
    }
    Branch<T>& branch(int stream) { return const_cast<Branch<T>&>(std::as_const(*this).branch(stream)); }

    std::vector<Parameter<T>*> vae_parameters()
    {
        std::vector<Parameter<T>*> out;
        for (auto& b : branches) {
            b.vae.collect(out);
        }
        return out;
    }

    // Everything the diffusion stage trains.
    std::vector<Parameter<T>*> diffusion_parameters()
    {
        std::vector<Parameter<T>*> out;
        text.collect(out);
        for (auto& b : branches) {
            b.frame_token.collect(out);
            b.denoiser.collect(out);
        }
        return out;
    }

    std::vector<Parameter<T>*> all_parameters()
    {
        auto out = vae_parameters();
        for (auto* p : diffusion_parameters()) {
            out.push_back(p);
        }
        for (auto& b : branches) {
            out.push_back(&b.latent_shift);
            out.push_back(&b.latent_scale);
        }
        out.push_back(&trained_stages);
        return out;
    }

    // Normalized posterior means, one row per frame.
    Tensor<T> encode_latents(const Tensor<T>& frames, int stream) const
    {
        const auto& b = branch(stream);
        ad::Tape<T> tape;
        Binder<T> bind(tape, false);
        auto mu = b.vae.encode(bind, tape.leaf(frames)).mu.value();
        for (int r = 0; r < mu.rows(); ++r) {
            for (int c = 0; c < mu.cols(); ++c) {
                mu.at(r, c) = (mu.at(r, c) - b.latent_shift.value.at(0, c)) * b.latent_scale.value.item();
            }
        }
        return mu;
    }

    Tensor<T> decode_latents(const Tensor<T>& z, int stream) const
    {
        const auto& b = branch(stream);
        Tensor<T> raw = z;
        for (int r = 0; r < raw.rows(); ++r) {
            for (int c = 0; c < raw.cols(); ++c) {
                raw.at(r, c) = z.at(r, c) / b.latent_scale.value.item() + b.latent_shift.value.at(0, c);
            }
        }
        return vae_decode(b.vae, raw);
    }

    // Instruction tokens followed by the stream's initial-frame token.
    Var<T> context(Binder<T>& bind, int stream, const std::vector<int>& tokens, const Tensor<T>& initial_latent) const
    {
        if (initial_latent.rows() != 1 || initial_latent.cols() != config.latent) {
            throw ad::ShapeError("context: initial-frame latent must be 1 x " + std::to_string(config.latent));
        }
        auto tok = branch(stream).frame_token.forward(bind, bind.tape().leaf(initial_latent));
        return ad::concat_rows<T>({text.forward(bind, tokens), tok});
    }

    // Each stream runs through its branch independently, in stream order.
    std::array<Var<T>, 2> predict_noise(Binder<T>& bind, const std::array<Var<T>, 2>& zt, int t,
                                        const std::vector<int>& tokens,
                                        const std::array<std::optional<Tensor<T>>, 2>& initial) const
    {
        if (zt[0].value().shape() != zt[1].value().shape()) {
            throw ad::ShapeError("predict_noise: streams differ in shape");
        }
        std::array<Var<T>, 2> out;
        for (int s = 0; s < 2; ++s) {
            const auto& init = initial[static_cast<std::size_t>(s)];
            if (!init) {
                throw std::invalid_argument("predict_noise: missing context token for stream " + std::to_string(s + 1));
            }
            out[static_cast<std::size_t>(s)] =
                branch(s).denoiser.forward(bind, zt[static_cast<std::size_t>(s)], t, context(bind, s, tokens, *init));
        }
        return out;
    }
};

// sum over streams of mean((eps - eps_hat)^2)
template <class T>
Var<T> diffusion_loss(ad::Tape<T>& tape, const std::array<Tensor<T>, 2>& eps, const std::array<Var<T>, 2>& eps_hat)
{
    Var<T> total;
    for (std::size_t s = 0; s < 2; ++s) {
        if (eps[s].shape() != eps_hat[s].value().shape() || eps[s].shape() != eps[0].shape()) {
            throw ad::ShapeError("diffusion_loss: shape mismatch in stream " + std::to_string(s + 1));
        }
        auto d = ad::sub(eps_hat[s], tape.leaf(eps[s]));
        auto m = ad::mean(ad::mul(d, d));
        total = s == 0 ? m : ad::add(total, m);
    }
    return total;
}

// ---- checkpoints ----------------------------------------------------------

inline ad::Tensor<float> config_tensor(const NetConfig& c)
{
    // Betas are stored in millionths so they survive the float round trip.
    return ad::Tensor<float>({1, 12}, std::vector<float>{
                                          static_cast<float>(c.grid), static_cast<float>(c.frames),
                                          static_cast<float>(c.latent),
                                          static_cast<float>(c.hidden), static_cast<float>(c.d_text),
                                          static_cast<float>(c.heads), static_cast<float>(c.lora_rank),
                                          static_cast<float>(c.blocks), static_cast<float>(c.steps),
                                          static_cast<float>(std::round(c.beta_first * 1e6)),
                                          static_cast<float>(std::round(c.beta_last * 1e6)), c.shared ? 1.0f : 0.0f});
}

inline NetConfig config_from_tensor(const ad::Tensor<float>& t)
{
    if (t.size() != 12) {
        throw CheckpointError("checkpoint config has " + std::to_string(t.size()) + " entries, expected 12");
    }
    NetConfig c;
    c.grid = static_cast<int>(t[0]);
    c.frames = static_cast<int>(t[1]);
    c.latent = static_cast<int>(t[2]);
    c.hidden = static_cast<int>(t[3]);
    c.d_text = static_cast<int>(t[4]);
    c.heads = static_cast<int>(t[5]);
    c.lora_rank = static_cast<int>(t[6]);
    c.blocks = static_cast<int>(t[7]);
    c.steps = static_cast<int>(t[8]);
    c.beta_first = static_cast<double>(t[9]) / 1e6;
    c.beta_last = static_cast<double>(t[10]) / 1e6;
    c.shared = t[11] != 0.0f;
    return c;
}

template <class T>
std::vector<ad::NamedTensor> to_checkpoint(SfdNet<T>& net)
{
    std::vector<ad::NamedTensor> out{{"config", config_tensor(net.config)}};
    for (auto* p : net.all_parameters()) {
        out.push_back({p->name, p->value.template cast<float>()});
    }
    return out;
}

template <class T>
SfdNet<T> from_checkpoint(const std::vector<ad::NamedTensor>& tensors)
{
    if (tensors.empty() || tensors.front().name != "config") {
        throw CheckpointError("checkpoint does not start with a model config");
    }
    SfdNet<T> net(config_from_tensor(tensors.front().tensor), 0);
    auto params = net.all_parameters();
    if (tensors.size() != params.size() + 1) {
        throw CheckpointError("checkpoint holds " + std::to_string(tensors.size() - 1) + " tensors, model has " +
                              std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& nt = tensors[i + 1];
        if (nt.name != params[i]->name || nt.tensor.shape() != params[i]->value.shape()) {
            throw CheckpointError("checkpoint tensor '" + nt.name + "' does not match model parameter '" +
                                  params[i]->name + "'");
        }
        if (!nt.tensor.all_finite()) {
            throw CheckpointError("checkpoint tensor '" + nt.name + "' is not finite");
        }
        params[i]->value = nt.tensor.template cast<T>();
    }
    return net;
}

template <class T>
void save_model(SfdNet<T>& net, const std::string& path)
{
    ad::save_checkpoint(path, to_checkpoint(net));
}

template <class T>
SfdNet<T> load_model(const std::string& path)
{
    return from_checkpoint<T>(ad::load_checkpoint(path));
}

} // namespace sfd::net
