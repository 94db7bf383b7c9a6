#pragma once

#include "sfd/app/config.hpp"
#include "sfd/app/report.hpp"
#include "sfd/net/sample.hpp"
#include "sfd/scene/generate.hpp"

namespace sfd::app {

inline std::vector<scene::EpisodeRecord> make_episodes(scene::TaskTemplate task, const SeedRange& range)
{
    std::vector<scene::EpisodeRecord> out;
    for (auto s : range.seeds()) {
        out.push_back(scene::generate_episode(task, s));
    }
    return out;
}

inline net::NetConfig net_config(const RunConfig& cfg, bool shared)
{
    auto n = cfg.net;
    n.shared = shared;
    return n;
}

struct Trained {
    net::SfdNet<float> model;
    std::vector<net::LossRow> log;
};

inline Trained train_model(const RunConfig& cfg, bool shared, const std::vector<scene::EpisodeRecord>& train_eps,
                           const std::vector<scene::EpisodeRecord>& val_eps)
{
    std::vector<net::Example> tr;
    std::vector<net::Example> va;
    for (const auto& ep : train_eps) {
        tr.push_back(net::make_example(ep, cfg.net.grid));
    }
    for (const auto& ep : val_eps) {
        va.push_back(net::make_example(ep, cfg.net.grid));
    }
    Trained out{net::SfdNet<float>(net_config(cfg, shared), cfg.seed), {}};
    net::train_model(out.model, tr, va, cfg.train, [&](const net::LossRow& r) { out.log.push_back(r); });
    return out;
}

inline std::string loss_csv(const std::vector<net::LossRow>& rows)
{
    std::ostringstream os;
    os << "step,stage,train_loss,val_loss\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%ld,%d,%.6g,%.6g\n", r.step, r.stage, r.train, r.val);
        os << buf;
    }
    return os.str();
}

// Sampling noise depends only on the run seed and the episode seed.
inline Rng episode_rng(std::uint64_t run_seed, std::uint64_t episode_seed)
{
    Rng r(run_seed * 0x9E3779B97F4A7C15ull ^ (episode_seed + 0x632BE59BD9B4E019ull));
    return r.fork();
}

inline scene::FlowPair predict_flows(const net::SfdNet<float>& model, const scene::EpisodeRecord& ep,
                                     std::uint64_t run_seed)
{
    auto rng = episode_rng(run_seed, ep.seed);
    return net::sample_flows(model, ep, rng);
}

struct PipelineRun {
    RunReport report;
    std::vector<std::vector<sim::Event>> events; // per episode, empty on failure
};

// full: sample, lift, allocate, execute, evaluate.
// no_allocation: both streams run as single segments in one slot.
// no_siamese: like full, with a model trained on unshared branches.
// Without a model the flows come from scripted ground truth.
inline PipelineRun run_pipeline(const RunConfig& cfg, const std::vector<scene::EpisodeRecord>& episodes,
                                pipeline::Mode mode, const net::SfdNet<float>* model)
{
    if (model) {
        if (model->stages() < 2) {
            throw ConfigError("checkpoint has not finished training");
        }
        const bool want_shared = mode != pipeline::Mode::no_siamese;
        if (model->config.shared != want_shared) {
            throw ConfigError(std::string("mode ") + pipeline::to_string(mode) + " needs a checkpoint with " +
                              (want_shared ? "shared" : "unshared") + " branches");
        }
    } else if (mode == pipeline::Mode::no_siamese) {
        throw ConfigError("no_siamese compares learned models and cannot run on oracle flows");
    }
    PipelineRun run;
    run.report.task = scene::to_string(cfg.task);
    run.report.mode = pipeline::to_string(mode);
    run.report.flows = model ? "predicted" : "oracle";
    run.report.seed = cfg.seed;
    for (const auto& ep : episodes) {
        try {
            const auto flows = model ? predict_flows(*model, ep, cfg.seed) : pipeline::oracle_flows(ep, cfg.net.grid);
            const auto tr = pipeline::lift_pair(ep, flows, model == nullptr);
            auto out = pipeline::run_episode(ep, tr, mode, cfg.alloc, cfg.sim);
            run.report.episodes.push_back(episode_result(out));
            run.events.push_back(std::move(out.events));
        } catch (const std::exception& e) {
            run.report.episodes.push_back(failed_episode(ep.seed, e.what()));
            run.events.emplace_back();
        }
    }
    return run;
}

} // namespace sfd::app
