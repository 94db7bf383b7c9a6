#pragma once

#include "sfd/net/train.hpp"

namespace sfd::net {

// Frame 0 of a stream's flow, computed from the first frame alone.
inline scene::FlowTensor initial_frame(const scene::EpisodeRecord& ep, const scene::BBox& box, int grid)
{
    const auto q = scene::make_query_grid(ep, box, grid);
    scene::FlowTensor f(1, grid);
    for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
            const auto [px, depth] = ep.camera.project(q.world(ep, 0, static_cast<std::size_t>(i * grid + j)));
            const bool visible = depth > 0.0 && ep.camera.in_image(px) && !ep.occluded(q.object, 0);
            f.at(0, 0, i, j) = static_cast<float>(px.u / ep.camera.width);
            f.at(1, 0, i, j) = static_cast<float>(px.v / ep.camera.height);
            f.at(2, 0, i, j) = visible ? 1.0f : 0.0f;
        }
    }
    return f;
}

// Ancestral sampling of both latent sequences. Stream s draws all of its noise
// from rngs[s], so swapping contexts and generators swaps the outputs.
template <class T>
std::array<Tensor<T>, 2> sample_latents(const SfdNet<T>& net, const std::vector<int>& tokens,
                                        const std::array<std::optional<Tensor<T>>, 2>& initial,
                                        std::array<Rng, 2>& rngs)
{
    const auto& s = net.schedule;
    std::array<Tensor<T>, 2> z;
    for (std::size_t i = 0; i < 2; ++i) {
        z[i] = Tensor<T>::randn({net.config.frames, net.config.latent}, rngs[i]);
    }
    for (int t = s.steps(); t >= 1; --t) {
        ad::Tape<T> tape;
        Binder<T> bind(tape, false);
        const auto eps = net.predict_noise(bind, {tape.leaf(z[0]), tape.leaf(z[1])}, t, tokens, initial);
        for (std::size_t i = 0; i < 2; ++i) {
            z[i] = reverse_step(s, z[i], t, eps[i].value(), rngs[i]);
        }
    }
    return z;
}

template <class T>
scene::FlowPair sample_flows(const SfdNet<T>& net, const std::vector<int>& tokens,
                             const std::array<scene::FlowTensor, 2>& initial_frames, std::array<Rng, 2>& rngs)
{
    if (net.stages() < 2) {
        throw CheckpointError("model has not been trained");
    }
    std::array<std::optional<Tensor<T>>, 2> initial;
    for (std::size_t i = 0; i < 2; ++i) {
        if (initial_frames[i].grid != net.config.grid) {
            throw ad::ShapeError("initial frame uses a " + std::to_string(initial_frames[i].grid) +
                                 " grid; the model expects " + std::to_string(net.config.grid));
        }
        initial[i] = net.encode_latents(frame_rows<T>(initial_frames[i]), static_cast<int>(i));
    }
    const auto z = sample_latents(net, tokens, initial, rngs);
    return {rows_to_flow(net.decode_latents(z[0], 0), net.config.grid),
            rows_to_flow(net.decode_latents(z[1], 1), net.config.grid)};
}

// Grounds the instruction on frame 0 and samples both streams.
template <class T>
scene::FlowPair sample_flows(const SfdNet<T>& net, const scene::EpisodeRecord& ep, Rng& rng)
{
    const auto boxes = scene::ground_instruction(ep, ep.instruction);
    std::array<Rng, 2> rngs{rng.fork(), rng.fork()};
    return sample_flows(net, Vocabulary::standard().encode(ep.instruction),
                        {initial_frame(ep, boxes[0], net.config.grid), initial_frame(ep, boxes[1], net.config.grid)},
                        rngs);
}

// Distance between the mean (u, v) of two flows' last frames, in normalized
// image units.
inline double final_center_error(const scene::FlowTensor& a, const scene::FlowTensor& b)
{
    auto center = [](const scene::FlowTensor& f) {
        double u = 0.0, v = 0.0;
        const int t = f.frames - 1;
        for (int i = 0; i < f.grid; ++i) {
            for (int j = 0; j < f.grid; ++j) {
                u += f.at(0, t, i, j);
                v += f.at(1, t, i, j);
            }
        }
        const double n = static_cast<double>(f.grid) * f.grid;
        return std::pair{u / n, v / n};
    };
    const auto [ua, va] = center(a);
    const auto [ub, vb] = center(b);
    return std::hypot(ua - ub, va - vb);
}

} // namespace sfd::net
