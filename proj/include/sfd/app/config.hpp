#pragma once

// Run configuration: TOML file, then command-line overrides, then the
// SFD_VLM_ENDPOINT environment variable.

#include <filesystem>
#include <stdexcept>
#include <string>

#include <toml.hpp>

#include "sfd/alloc/vlm.hpp"
#include "sfd/net/train.hpp"
#include "sfd/pipeline/episode_run.hpp"

namespace sfd::app {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SeedRange {
    std::uint64_t first = 0;
    int count = 0;

    std::vector<std::uint64_t> seeds() const
    {
        std::vector<std::uint64_t> out;
        for (int i = 0; i < count; ++i) {
            out.push_back(first + static_cast<std::uint64_t>(i));
        }
        return out;
    }
};

// "a:n" -> n seeds starting at a; "a" -> just a.
inline SeedRange parse_seed_range(const std::string& s)
{
    try {
        const auto colon = s.find(':');
        if (colon == std::string::npos) {
            return {std::stoull(s), 1};
        }
        return {std::stoull(s.substr(0, colon)), std::stoi(s.substr(colon + 1))};
    } catch (const std::logic_error&) {
        throw ConfigError("bad seed range '" + s + "', expected FIRST or FIRST:COUNT");
    }
}

struct RunConfig {
    std::uint64_t seed = 1;
    scene::TaskTemplate task = scene::TaskTemplate::packing;

    // data
    SeedRange train_seeds{0, 64};
    SeedRange val_seeds{1000, 8};
    SeedRange eval_seeds{2000, 10};
    std::string out_dir = "runs";

    // model
    net::NetConfig net;
    net::TrainConfig train;

    // allocator, simulator, remote allocator
    pipeline::AllocParams alloc;
    sim::SimConfig sim;

    std::string checkpoint() const { return out_dir + "/model.sfdc"; }
    std::string checkpoint_unshared() const { return out_dir + "/model_unshared.sfdc"; }
};

namespace config_detail {

template <class T>
void read(const toml::table& t, std::string_view section, std::string_view key, T& out)
{
    const toml::node* n = section.empty() ? t.get(key) : nullptr;
    if (!section.empty()) {
        if (const auto* sec = t.get_as<toml::table>(section)) {
            n = sec->get(key);
        }
    }
    if (!n) {
        return;
    }
    const std::string where = section.empty() ? std::string(key) : std::string(section) + "." + std::string(key);
    if constexpr (std::is_same_v<T, bool>) {
        if (auto v = n->value<bool>()) {
            out = *v;
            return;
        }
    } else if constexpr (std::is_integral_v<T>) {
        if (auto v = n->value<std::int64_t>()) {
            if (*v < 0 && std::is_unsigned_v<T>) {
                throw ConfigError(where + " must not be negative");
            }
            out = static_cast<T>(*v);
            return;
        }
    } else if constexpr (std::is_floating_point_v<T>) {
        if (auto v = n->value<double>()) {
            out = *v;
            return;
        }
    } else {
        if (auto v = n->value<std::string>()) {
            out = *v;
            return;
        }
    }
    throw ConfigError(where + " has the wrong type");
}

inline void read_range(const toml::table& t, std::string_view key, SeedRange& out)
{
    std::string s;
    read(t, "data", key, s);
    if (!s.empty()) {
        out = parse_seed_range(s);
    }
}

} // namespace config_detail

inline void validate(const RunConfig& c)
{
    auto positive = [](double v, const char* what) {
        if (!(v > 0.0)) {
            throw ConfigError(std::string(what) + " must be positive");
        }
    };
    positive(c.net.grid, "model.grid");
    positive(c.net.latent, "model.latent");
    positive(c.net.d_text, "model.d_text");
    positive(c.net.steps, "model.steps");
    positive(c.net.lora_rank, "model.lora_rank");
    positive(c.net.heads, "model.heads");
    if (c.net.latent % c.net.heads != 0) {
        throw ConfigError("model.heads must divide model.latent");
    }
    positive(c.train.optimizer.lr, "model.lr");
    if (c.train.optimizer.weight_decay < 0.0) {
        throw ConfigError("model.wd must not be negative");
    }
    if (!(c.net.beta_first > 0.0 && c.net.beta_first < c.net.beta_last && c.net.beta_last < 1.0)) {
        throw ConfigError("model.beta_first and model.beta_last must satisfy 0 < first < last < 1");
    }
    if (c.train.epochs < 0 || c.train.vae_epochs < 0) {
        throw ConfigError("epoch counts must not be negative");
    }
    positive(c.train_seeds.count, "data.train_seeds count");
    positive(c.alloc.d_safe, "alloc.d_safe");
    positive(c.alloc.m_max, "alloc.m_max");
    positive(c.sim.dt, "sim.dt");
    positive(c.sim.v_max, "sim.v_max");
    positive(c.alloc.vlm.timeout_s, "vlm.timeout");
}

inline RunConfig parse_config(const toml::table& t)
{
    using config_detail::read;
    RunConfig c;
    read(t, "", "seed", c.seed);
    std::string task = scene::to_string(c.task);
    read(t, "", "task", task);
    try {
        c.task = scene::task_from_string(task);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    config_detail::read_range(t, "train_seeds", c.train_seeds);
    config_detail::read_range(t, "val_seeds", c.val_seeds);
    config_detail::read_range(t, "eval_seeds", c.eval_seeds);
    read(t, "data", "out_dir", c.out_dir);

    read(t, "model", "grid", c.net.grid);
    read(t, "model", "latent", c.net.latent);
    read(t, "model", "d_text", c.net.d_text);
    read(t, "model", "steps", c.net.steps);
    read(t, "model", "beta_first", c.net.beta_first);
    read(t, "model", "beta_last", c.net.beta_last);
    read(t, "model", "lora_rank", c.net.lora_rank);
    read(t, "model", "heads", c.net.heads);
    read(t, "model", "lr", c.train.optimizer.lr);
    read(t, "model", "wd", c.train.optimizer.weight_decay);
    read(t, "model", "epochs", c.train.epochs);
    read(t, "model", "vae_epochs", c.train.vae_epochs);
    read(t, "model", "vae_lr", c.train.vae_lr);

    read(t, "alloc", "d_safe", c.alloc.d_safe);
    read(t, "alloc", "m_max", c.alloc.m_max);
    read(t, "sim", "dt", c.sim.dt);
    read(t, "sim", "v_max", c.sim.v_max);
    read(t, "vlm", "endpoint", c.alloc.vlm.endpoint);
    read(t, "vlm", "timeout", c.alloc.vlm.timeout_s);
    return c;
}

inline RunConfig load_config(const std::string& path)
{
    if (!std::filesystem::exists(path)) {
        throw ConfigError("config file " + path + " not found");
    }
    try {
        return parse_config(toml::parse_file(path));
    } catch (const toml::parse_error& e) {
        throw ConfigError("config " + path + ": " + std::string(e.description()));
    }
}

// Applied after command-line overrides.
inline RunConfig finalize(RunConfig c)
{
    c.alloc.vlm = alloc::with_env_override(c.alloc.vlm);
    c.train.seed = c.seed;
    validate(c);
    return c;
}

} // namespace sfd::app
