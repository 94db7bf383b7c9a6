#pragma once

// Two-stage training: the frame VAE first, then the denoiser on frozen,
// normalized VAE latents.

#include <functional>
#include <numeric>

#include "sfd/core/adamw.hpp"
#include "sfd/net/model.hpp"
#include "sfd/scene/grounding.hpp"

namespace sfd::net {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Example {
    scene::FlowPair flows;
    std::vector<int> tokens;
};

inline Example make_example(const scene::EpisodeRecord& ep, int grid)
{
    const auto boxes = scene::ground_instruction(ep, ep.instruction);
    return {scene::track_flows(ep, boxes[0], boxes[1], grid), Vocabulary::standard().encode(ep.instruction)};
}

struct TrainConfig {
    int vae_epochs = 40;
    int vae_batch = 64; // frames per step
    double vae_lr = 1e-3;
    double kl_weight = 1e-3;
    int epochs = 300;
    int batch = 1; // episodes per step
    ad::AdamWConfig optimizer{}; // lr 1e-4, weight decay 0.01
    int log_every = 16;
    int val_draws = 4; // fixed (t, noise) draws per validation episode
    std::uint64_t seed = 1;
};

struct LossRow {
    long step = 0;
    int stage = 1;
    double train = 0.0;
    double val = 0.0;
};

using LossLog = std::function<void(const LossRow&)>;

namespace train_detail {

template <class T>
void check_examples(const SfdNet<T>& net, const std::vector<Example>& data, const char* what)
{
    for (const auto& ex : data) {
        for (const auto& f : ex.flows) {
            if (f.grid != net.config.grid || f.frames != net.config.frames) {
                throw TrainingError(std::string(what) + " flow is " + std::to_string(f.frames) + " frames on a " +
                                    std::to_string(f.grid) + " grid; the model expects " +
                                    std::to_string(net.config.frames) + " frames on a " +
                                    std::to_string(net.config.grid) + " grid");
            }
        }
    }
}

template <class T>
std::vector<Tensor<T>> gather_grads(const ad::Gradients<T>& g, Binder<T>& bind,
                                    const std::vector<Parameter<T>*>& params)
{
    std::vector<Tensor<T>> out;
    for (const auto* p : params) {
        if (bind.is_bound(*p) && g.has(bind.var_of(*p).id)) {
            out.push_back(g[bind.var_of(*p)]);
        } else {
            out.emplace_back(p->value.shape(), T(0));
        }
    }
    return out;
}

inline void check_loss(double v, int stage, long step)
{
    if (!std::isfinite(v)) {
        throw TrainingError("stage " + std::to_string(stage) + " loss became non-finite at step " +
                            std::to_string(step));
    }
}

template <class T>
Tensor<T> stack_rows(const std::vector<const Tensor<T>*>& rows_of, const std::vector<std::pair<int, int>>& picks)
{
    const int cols = rows_of.front()->cols();
    Tensor<T> out({static_cast<int>(picks.size()), cols});
    for (std::size_t r = 0; r < picks.size(); ++r) {
        const auto& src = *rows_of[static_cast<std::size_t>(picks[r].first)];
        for (int c = 0; c < cols; ++c) {
            out.at(static_cast<int>(r), c) = src.at(picks[r].second, c);
        }
    }
    return out;
}

// Frame rows of every stream that branch b of the model serves.
template <class T>
std::vector<Tensor<T>> branch_frame_rows(const SfdNet<T>& net, const std::vector<Example>& data, std::size_t b)
{
    std::vector<Tensor<T>> out;
    for (const auto& ex : data) {
        for (std::size_t s = 0; s < 2; ++s) {
            if (&net.branch(static_cast<int>(s)) == &net.branches[b]) {
                out.push_back(frame_rows<T>(ex.flows[s]));
            }
        }
    }
    return out;
}

template <class T>
Tensor<T> stack_all(const std::vector<Tensor<T>>& rows, std::vector<std::pair<int, int>>* index = nullptr)
{
    std::vector<const Tensor<T>*> ptrs;
    std::vector<std::pair<int, int>> pick;
    for (std::size_t s = 0; s < rows.size(); ++s) {
        ptrs.push_back(&rows[s]);
        for (int t = 0; t < rows[s].rows(); ++t) {
            pick.emplace_back(static_cast<int>(s), t);
        }
    }
    if (index) {
        *index = pick;
    }
    return pick.empty() ? Tensor<T>() : stack_rows(ptrs, pick);
}

// Fisher-Yates with the project RNG so shuffles are reproducible.
inline void shuffle(std::vector<int>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[static_cast<std::size_t>(rng.below(i))]);
    }
}

} // namespace train_detail

template <class T>
void train_vae(SfdNet<T>& net, const std::vector<Example>& train, const std::vector<Example>& val,
               const TrainConfig& cfg, const LossLog& log = {})
{
    using namespace train_detail;
    if (train.empty()) {
        throw TrainingError("empty training set");
    }
    check_examples(net, train, "training");
    check_examples(net, val, "validation");
    Rng rng(cfg.seed);
    Rng vr(cfg.seed ^ 0x5EED0001ull);
    long step = 0;
    for (std::size_t bi = 0; bi < net.branches.size(); ++bi) {
        auto& vae = net.branches[bi].vae;
        const auto rows = branch_frame_rows(net, train, bi);
        std::vector<const Tensor<T>*> row_ptrs;
        for (const auto& r : rows) {
            row_ptrs.push_back(&r);
        }
        std::vector<std::pair<int, int>> frames;
        stack_all(rows, &frames);
        const auto val_frames = stack_all(branch_frame_rows(net, val, bi));
        const auto val_xi = val.empty() ? Tensor<T>() : Tensor<T>::randn({val_frames.rows(), net.config.latent}, vr);

        std::vector<Parameter<T>*> params;
        vae.collect(params);
        auto cfg_opt = cfg.optimizer;
        cfg_opt.lr = cfg.vae_lr;
        auto state = ad::make_adamw_state<T>(params, cfg_opt);
        std::vector<int> order(frames.size());
        for (int epoch = 0; epoch < cfg.vae_epochs; ++epoch) {
            std::iota(order.begin(), order.end(), 0);
            shuffle(order, rng);
            for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.vae_batch)) {
                std::vector<std::pair<int, int>> pick;
                for (std::size_t i = b; i < std::min(order.size(), b + static_cast<std::size_t>(cfg.vae_batch)); ++i) {
                    pick.push_back(frames[static_cast<std::size_t>(order[i])]);
                }
                const auto x = stack_rows(row_ptrs, pick);
                const auto xi = Tensor<T>::randn({x.rows(), net.config.latent}, rng);
                ad::Tape<T> tape;
                Binder<T> bind(tape);
                auto loss = vae_loss(bind, vae, tape.leaf(x), xi, cfg.kl_weight);
                const double lv = static_cast<double>(loss.value().item());
                check_loss(lv, 1, step);
                const auto grads = gather_grads(ad::backward(loss), bind, params);
                ad::adamw_step<T>(params, grads, state);
                ++step;
                if (log && step % cfg.log_every == 0) {
                    double vl = 0.0;
                    if (!val.empty()) {
                        ad::Tape<T> vt;
                        Binder<T> vb(vt, false);
                        vl = static_cast<double>(
                            vae_loss(vb, vae, vt.leaf(val_frames), val_xi, cfg.kl_weight).value().item());
                    }
                    log({step, 1, lv, vl});
                }
            }
        }
    }
}

// Per-dimension mean and one global scale per branch so its stacked latents
// have unit variance.
template <class T>
void fit_latent_stats(SfdNet<T>& net, const std::vector<Example>& train)
{
    const int d = net.config.latent;
    for (std::size_t bi = 0; bi < net.branches.size(); ++bi) {
        auto& br = net.branches[bi];
        const auto rows = train_detail::stack_all(train_detail::branch_frame_rows(net, train, bi));
        ad::Tape<T> tape;
        Binder<T> bind(tape, false);
        const auto mu = br.vae.encode(bind, tape.leaf(rows)).mu.value();
        const double n = mu.rows();
        std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
        for (int r = 0; r < mu.rows(); ++r) {
            for (int c = 0; c < d; ++c) {
                mean[static_cast<std::size_t>(c)] += mu.at(r, c) / n;
            }
        }
        double var = 0.0;
        for (int r = 0; r < mu.rows(); ++r) {
            for (int c = 0; c < d; ++c) {
                const double e = mu.at(r, c) - mean[static_cast<std::size_t>(c)];
                var += e * e;
            }
        }
        var /= n * d;
        for (int c = 0; c < d; ++c) {
            br.latent_shift.value.at(0, c) = static_cast<T>(mean[static_cast<std::size_t>(c)]);
        }
        br.latent_scale.value = Tensor<T>::scalar(static_cast<T>(var > 0.0 ? 1.0 / std::sqrt(var) : 1.0));
    }
}

// Diffusion-stage inputs for one episode: clean latents and the initial-frame
// latent of each stream.
template <class T>
struct LatentExample {
    std::array<Tensor<T>, 2> z0;
    std::array<std::optional<Tensor<T>>, 2> initial;
    const std::vector<int>* tokens = nullptr;
};

template <class T>
LatentExample<T> encode_example(const SfdNet<T>& net, const Example& ex)
{
    LatentExample<T> out;
    for (std::size_t s = 0; s < 2; ++s) {
        out.z0[s] = net.encode_latents(frame_rows<T>(ex.flows[s]), static_cast<int>(s));
        Tensor<T> first({1, net.config.latent});
        for (int c = 0; c < net.config.latent; ++c) {
            first.at(0, c) = out.z0[s].at(0, c);
        }
        out.initial[s] = first;
    }
    out.tokens = &ex.tokens;
    return out;
}

// Loss of one episode at a given step and noise draw, recorded on bind's tape.
template <class T>
Var<T> episode_loss(Binder<T>& bind, const SfdNet<T>& net, const LatentExample<T>& ex, int t,
                    const std::array<Tensor<T>, 2>& eps)
{
    auto& tape = bind.tape();
    std::array<Var<T>, 2> zt{tape.leaf(diffuse_with(net.schedule, ex.z0[0], t, eps[0])),
                             tape.leaf(diffuse_with(net.schedule, ex.z0[1], t, eps[1]))};
    return diffusion_loss(tape, eps, net.predict_noise(bind, zt, t, *ex.tokens, ex.initial));
}

template <class T>
void train_diffusion(SfdNet<T>& net, const std::vector<Example>& train, const std::vector<Example>& val,
                     const TrainConfig& cfg, const LossLog& log = {})
{
    using namespace train_detail;
    if (train.empty()) {
        throw TrainingError("empty training set");
    }
    if (net.stages() < 1) {
        throw TrainingError("the diffusion stage needs a trained VAE");
    }
    check_examples(net, train, "training");
    check_examples(net, val, "validation");
    std::vector<LatentExample<T>> tr;
    for (const auto& ex : train) {
        tr.push_back(encode_example(net, ex));
    }
    struct ValDraw {
        std::size_t episode;
        int t;
        std::array<Tensor<T>, 2> eps;
    };
    std::vector<LatentExample<T>> va;
    std::vector<ValDraw> draws;
    Rng vr(cfg.seed ^ 0x5EED0002ull);
    for (std::size_t i = 0; i < val.size(); ++i) {
        va.push_back(encode_example(net, val[i]));
        for (int k = 0; k < cfg.val_draws; ++k) {
            const int t = 1 + static_cast<int>(vr.below(static_cast<std::uint64_t>(net.config.steps)));
            const auto shape = va.back().z0[0].shape();
            draws.push_back({i, t, {Tensor<T>::randn(shape, vr), Tensor<T>::randn(shape, vr)}});
        }
    }
    auto val_loss = [&] {
        if (draws.empty()) {
            return 0.0;
        }
        double s = 0.0;
        for (const auto& d : draws) {
            ad::Tape<T> tape;
            Binder<T> bind(tape, false);
            s += static_cast<double>(episode_loss(bind, net, va[d.episode], d.t, d.eps).value().item());
        }
        return s / static_cast<double>(draws.size());
    };

    Rng rng(cfg.seed ^ 0x5EED0003ull);
    auto params = net.diffusion_parameters();
    auto state = ad::make_adamw_state<T>(params, cfg.optimizer);
    std::vector<int> order(tr.size());
    long step = 0;
    double running = 0.0;
    int running_n = 0;
    const auto batch = static_cast<std::size_t>(std::max(1, cfg.batch));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        shuffle(order, rng);
        for (std::size_t b = 0; b < order.size(); b += batch) {
            const std::size_t end = std::min(order.size(), b + batch);
            ad::Tape<T> tape;
            Binder<T> bind(tape);
            Var<T> loss;
            for (std::size_t i = b; i < end; ++i) {
                const auto& ex = tr[static_cast<std::size_t>(order[i])];
                const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(net.config.steps)));
                std::array<Tensor<T>, 2> eps{Tensor<T>::randn(ex.z0[0].shape(), rng),
                                             Tensor<T>::randn(ex.z0[1].shape(), rng)};
                auto l = episode_loss(bind, net, ex, t, eps);
                loss = i == b ? l : ad::add(loss, l);
            }
            loss = ad::scale(loss, static_cast<T>(1.0 / static_cast<double>(end - b)));
            const double lv = static_cast<double>(loss.value().item());
            check_loss(lv, 2, step);
            const auto grads = gather_grads(ad::backward(loss), bind, params);
            ad::adamw_step<T>(params, grads, state);
            ++step;
            running += lv;
            ++running_n;
            if (log && step % cfg.log_every == 0) {
                log({step, 2, running / running_n, val_loss()});
                running = 0.0;
                running_n = 0;
            }
        }
    }
}

template <class T>
void train_model(SfdNet<T>& net, const std::vector<Example>& train, const std::vector<Example>& val,
                 const TrainConfig& cfg, const LossLog& log = {})
{
    train_vae(net, train, val, cfg, log);
    fit_latent_stats(net, train);
    net.trained_stages.value = Tensor<T>::scalar(T(1));
    train_diffusion(net, train, val, cfg, log);
    net.trained_stages.value = Tensor<T>::scalar(T(2));
}

} // namespace sfd::net
