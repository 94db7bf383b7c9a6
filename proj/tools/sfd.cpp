// sfd: synthesize episodes, train the flow model, and run the dual-arm pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sfd/app/runner.hpp"
#include "sfd/pipeline/plan_io.hpp"

namespace fs = std::filesystem;
using namespace sfd;

namespace {

constexpr int kUsageError = 1;
constexpr int kPipelineError = 2;

void require_file(const std::string& path, const std::string& what)
{
    if (!fs::is_regular_file(path)) {
        throw app::ConfigError(what + " " + path + " not found");
    }
}

void prepare_output(const std::string& path)
{
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) {
        fs::create_directories(parent);
    }
}

void write_text(const std::string& path, const std::string& text)
{
    prepare_output(path);
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    os << text;
}

void write_events(const std::string& path, const std::vector<sim::Event>& events)
{
    prepare_output(path);
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    sim::write_event_log(os, events);
}

// Flags that override the TOML file. Applied only when given.
struct Overrides {
    std::string config;
    std::uint64_t seed = 0;
    std::string task;
    std::string out_dir;
    int latent = 0, d_text = 0, steps = 0, grid = 0, lora_rank = 0, epochs = 0, vae_epochs = 0, m_max = 0;
    double lr = 0, wd = 0, d_safe = 0, dt = 0, v_max = 0, vlm_timeout = 0;
    std::string vlm_endpoint;
    std::map<std::string, CLI::Option*> opts;

    void attach(CLI::App& app)
    {
        auto add = [&](const std::string& flag, auto& target, const std::string& help) {
            opts[flag] = app.add_option(flag, target, help);
        };
        app.add_option("-c,--config", config, "TOML run configuration");
        add("--seed", seed, "run seed");
        add("--task", task, "put_into_pot, packing, pouring or drawer_place");
        add("--out-dir", out_dir, "directory for default artifact paths");
        add("--latent", latent, "latent width d");
        add("--d-text", d_text, "text embedding width");
        add("--diffusion-steps", steps, "diffusion steps T");
        add("--grid", grid, "query grid size G");
        add("--lora-rank", lora_rank, "LoRA rank");
        add("--lr", lr, "denoiser learning rate");
        add("--wd", wd, "AdamW weight decay");
        add("--epochs", epochs, "denoiser epochs");
        add("--vae-epochs", vae_epochs, "VAE epochs");
        add("--d-safe", d_safe, "conflict clearance (m)");
        add("--m-max", m_max, "maximum segments per stream");
        add("--dt", dt, "simulator tick (s)");
        add("--v-max", v_max, "arm speed limit (m/s)");
        add("--vlm-endpoint", vlm_endpoint, "remote allocator URL");
        add("--vlm-timeout", vlm_timeout, "remote allocator timeout (s)");
    }

    bool given(const std::string& flag) const { return opts.at(flag)->count() > 0; }

    app::RunConfig resolve() const
    {
        app::RunConfig c = config.empty() ? app::RunConfig{} : app::load_config(config);
        if (given("--seed")) c.seed = seed;
        if (given("--task")) {
            try {
                c.task = scene::task_from_string(task);
            } catch (const std::exception& e) {
                throw app::ConfigError(e.what());
            }
        }
        if (given("--out-dir")) c.out_dir = out_dir;
        if (given("--latent")) c.net.latent = latent;
        if (given("--d-text")) c.net.d_text = d_text;
        if (given("--diffusion-steps")) c.net.steps = steps;
        if (given("--grid")) c.net.grid = grid;
        if (given("--lora-rank")) c.net.lora_rank = lora_rank;
        if (given("--lr")) c.train.optimizer.lr = lr;
        if (given("--wd")) c.train.optimizer.weight_decay = wd;
        if (given("--epochs")) c.train.epochs = epochs;
        if (given("--vae-epochs")) c.train.vae_epochs = vae_epochs;
        if (given("--d-safe")) c.alloc.d_safe = d_safe;
        if (given("--m-max")) c.alloc.m_max = m_max;
        if (given("--dt")) c.sim.dt = dt;
        if (given("--v-max")) c.sim.v_max = v_max;
        if (given("--vlm-endpoint")) c.alloc.vlm.endpoint = vlm_endpoint;
        if (given("--vlm-timeout")) c.alloc.vlm.timeout_s = vlm_timeout;
        return app::finalize(c);
    }
};

app::SeedRange seeds_or(const std::string& flag, const app::SeedRange& fallback)
{
    return flag.empty() ? fallback : app::parse_seed_range(flag);
}

net::SfdNet<float> load_checkpoint(const std::string& path)
{
    require_file(path, "checkpoint");
    return net::load_model<float>(path);
}

net::SfdNet<float> train_and_save(const app::RunConfig& cfg, bool shared, const std::string& checkpoint,
                                  const std::string& log_path)
{
    std::cerr << "training " << (shared ? "shared" : "unshared") << " model on " << cfg.train_seeds.count << " "
              << scene::to_string(cfg.task) << " episodes\n";
    auto t = app::train_model(cfg, shared, app::make_episodes(cfg.task, cfg.train_seeds),
                              app::make_episodes(cfg.task, cfg.val_seeds));
    prepare_output(checkpoint);
    net::save_model(t.model, checkpoint);
    write_text(log_path, app::loss_csv(t.log));
    if (!t.log.empty()) {
        const auto& last = t.log.back();
        std::cerr << "final stage " << last.stage << " loss " << last.train << " (val " << last.val << ")\n";
    }
    std::cerr << "wrote " << checkpoint << " and " << log_path << '\n';
    return std::move(t.model);
}

std::string default_log(const app::RunConfig& cfg, bool shared)
{
    return cfg.out_dir + (shared ? "/loss.csv" : "/loss_unshared.csv");
}

void print_summary(const std::vector<app::SummaryRow>& rows)
{
    std::cout << app::summary_csv(rows);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App cli{"Object-centric flow synthesis and dual-arm allocation"};
    cli.require_subcommand(1);
    cli.fallthrough();
    Overrides ov;
    ov.attach(cli);

    // synth
    auto* synth = cli.add_subcommand("synth", "generate scripted episodes (JSON lines) and their ground-truth flows");
    std::string synth_seeds, synth_out, synth_flows;
    synth->add_option("--seeds", synth_seeds, "FIRST or FIRST:COUNT (default: training seeds)");
    synth->add_option("-o,--out", synth_out, "episode file (default OUT_DIR/episodes.jsonl)");
    synth->add_option("--flows-dir", synth_flows, "also write ground-truth flows here");

    // train
    auto* train = cli.add_subcommand("train", "train the VAE and the denoiser");
    std::string train_eps, train_val, train_out, train_log;
    bool train_unshared = false;
    train->add_option("--episodes", train_eps, "training episodes (default: generated from the training seeds)");
    train->add_option("--val-episodes", train_val, "validation episodes (default: generated)");
    train->add_flag("--unshared", train_unshared, "give each stream its own VAE and denoiser");
    train->add_option("-o,--out", train_out, "checkpoint path");
    train->add_option("--log", train_log, "loss CSV path");

    // sample
    auto* sample = cli.add_subcommand("sample", "sample both flows for one episode");
    std::uint64_t ep_seed = 0;
    std::string sample_ckpt, sample_out;
    bool sample_oracle = false;
    sample->add_option("--episode", ep_seed, "episode seed")->required();
    sample->add_option("--checkpoint", sample_ckpt, "model checkpoint (default OUT_DIR/model.sfdc)");
    sample->add_flag("--oracle", sample_oracle, "write ground-truth flows instead");
    sample->add_option("-o,--out", sample_out, "flow file (.sfdf)")->required();

    // lift
    auto* lift = cli.add_subcommand("lift", "lift a flow pair to 3D trajectories");
    std::string lift_flows, lift_out;
    bool lift_oracle_depth = false;
    lift->add_option("--episode", ep_seed, "episode seed")->required();
    lift->add_option("--flows", lift_flows, "flow file")->required();
    lift->add_flag("--oracle-depth", lift_oracle_depth, "use rendered depth instead of the table-plane estimate");
    lift->add_option("-o,--out", lift_out, "trajectory JSON")->required();

    // allocate
    auto* allocate = cli.add_subcommand("allocate", "segment, assign and schedule two trajectories");
    std::string alloc_traj, alloc_out, alloc_svg;
    bool alloc_bypass = false;
    allocate->add_option("--episode", ep_seed, "episode seed")->required();
    allocate->add_option("--trajectories", alloc_traj, "trajectory JSON")->required();
    allocate->add_flag("--no-allocation", alloc_bypass, "one segment per stream, both in a single slot");
    allocate->add_option("-o,--out", alloc_out, "plan JSON")->required();
    allocate->add_option("--svg", alloc_svg, "trajectory overlay");

    // execute
    auto* execute = cli.add_subcommand("execute", "run a plan in the simulator");
    std::string exec_traj, exec_plan, exec_events, exec_out;
    execute->add_option("--episode", ep_seed, "episode seed")->required();
    execute->add_option("--trajectories", exec_traj, "trajectory JSON")->required();
    execute->add_option("--plan", exec_plan, "plan JSON")->required();
    execute->add_option("--events", exec_events, "event log (JSON lines)");
    execute->add_option("-o,--out", exec_out, "single-episode report");

    // pipeline
    auto* pipe = cli.add_subcommand("pipeline", "sample, lift, allocate, execute and evaluate a seed range");
    std::string pipe_mode = "full", pipe_seeds, pipe_ckpt, pipe_out, pipe_events;
    bool pipe_oracle = false, pipe_train = false;
    pipe->add_option("--mode", pipe_mode, "full, no_allocation or no_siamese")
        ->check(CLI::IsMember({"full", "no_allocation", "no_siamese"}));
    pipe->add_option("--seeds", pipe_seeds, "FIRST or FIRST:COUNT (default: evaluation seeds)");
    pipe->add_flag("--oracle-flows", pipe_oracle, "use ground-truth flows and depth");
    pipe->add_flag("--train", pipe_train, "train and save the checkpoint first");
    pipe->add_option("--checkpoint", pipe_ckpt, "model checkpoint");
    pipe->add_option("-o,--out", pipe_out, "report JSON");
    pipe->add_option("--events-dir", pipe_events, "write one event log per episode");

    // report
    auto* report = cli.add_subcommand("report", "aggregate run reports");
    std::vector<std::string> report_in;
    std::string report_csv, report_svg;
    report->add_option("reports", report_in, "report JSON files")->required();
    report->add_option("--csv", report_csv, "summary CSV");
    report->add_option("--svg", report_svg, "summary bar chart");

    // ablate
    auto* ablate = cli.add_subcommand("ablate", "full vs no_allocation (vs no_siamese on learned flows)");
    std::string abl_seeds, abl_dir;
    bool abl_oracle = false, abl_train = false;
    ablate->add_option("--seeds", abl_seeds, "FIRST or FIRST:COUNT (default: evaluation seeds)");
    ablate->add_flag("--oracle-flows", abl_oracle, "use ground-truth flows; skips no_siamese");
    ablate->add_flag("--train", abl_train, "train both checkpoints first");
    ablate->add_option("--dir", abl_dir, "output directory (default OUT_DIR/ablate_TASK)");

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = cli.exit(e);
        return code == 0 ? 0 : kUsageError;
    }

    try {
        const auto cfg = ov.resolve();
        const auto task = scene::to_string(cfg.task);
        const auto episode = [&] { return scene::generate_episode(cfg.task, ep_seed); };

        if (*synth) {
            const auto eps = app::make_episodes(cfg.task, seeds_or(synth_seeds, cfg.train_seeds));
            const auto out = synth_out.empty() ? cfg.out_dir + "/episodes.jsonl" : synth_out;
            prepare_output(out);
            scene::write_episodes(out, eps);
            if (!synth_flows.empty()) {
                fs::create_directories(synth_flows);
                for (const auto& ep : eps) {
                    scene::save_flows(synth_flows + "/" + task + "_" + std::to_string(ep.seed) + ".sfdf",
                                      pipeline::oracle_flows(ep, cfg.net.grid));
                }
            }
            std::cout << "wrote " << eps.size() << " episodes to " << out << '\n';
        } else if (*train) {
            const bool shared = !train_unshared;
            std::vector<scene::EpisodeRecord> tr, va;
            if (!train_eps.empty()) {
                require_file(train_eps, "episode file");
                tr = scene::read_episodes(train_eps);
            } else {
                tr = app::make_episodes(cfg.task, cfg.train_seeds);
            }
            if (!train_val.empty()) {
                require_file(train_val, "episode file");
                va = scene::read_episodes(train_val);
            } else {
                va = app::make_episodes(cfg.task, cfg.val_seeds);
            }
            if (tr.empty() || va.empty()) {
                throw app::ConfigError("training and validation sets must not be empty");
            }
            const auto out = train_out.empty() ? (shared ? cfg.checkpoint() : cfg.checkpoint_unshared()) : train_out;
            const auto log = train_log.empty() ? default_log(cfg, shared) : train_log;
            auto t = app::train_model(cfg, shared, tr, va);
            prepare_output(out);
            net::save_model(t.model, out);
            write_text(log, app::loss_csv(t.log));
            std::cout << "wrote " << out << " and " << log << '\n';
        } else if (*sample) {
            const auto ep = episode();
            scene::FlowPair flows;
            if (sample_oracle) {
                flows = pipeline::oracle_flows(ep, cfg.net.grid);
            } else {
                const auto model = load_checkpoint(sample_ckpt.empty() ? cfg.checkpoint() : sample_ckpt);
                flows = app::predict_flows(model, ep, cfg.seed);
            }
            prepare_output(sample_out);
            scene::save_flows(sample_out, flows);
            std::cout << "wrote " << sample_out << '\n';
        } else if (*lift) {
            require_file(lift_flows, "flow file");
            const auto ep = episode();
            const auto tr = pipeline::lift_pair(ep, scene::load_flows(lift_flows), lift_oracle_depth);
            prepare_output(lift_out);
            lift::save_trajectories(lift_out, {tr[0], tr[1]});
            std::cout << "wrote " << lift_out << '\n';
        } else if (*allocate) {
            require_file(alloc_traj, "trajectory file");
            const auto ep = episode();
            const auto trs = lift::load_trajectories(alloc_traj);
            if (trs.size() != 2) {
                throw app::ConfigError("trajectory file must hold two streams");
            }
            const pipeline::TrajectoryPair tr{trs[0], trs[1]};
            const auto plan = pipeline::allocate(ep, tr, cfg.alloc, alloc_bypass);
            prepare_output(alloc_out);
            pipeline::save_plan(alloc_out, plan);
            if (!alloc_svg.empty()) {
                write_text(alloc_svg, alloc::render_overlay(alloc::overlay_scene(ep), plan.segments, plan.assignment));
            }
            if (plan.fallback) {
                std::cerr << "remote allocator rejected: " << *plan.fallback << '\n';
            }
            std::cout << "wrote " << alloc_out << " (" << plan.schedule.slots.size() << " slots, makespan "
                      << alloc::makespan(plan.problem, plan.schedule) << " s)\n";
        } else if (*execute) {
            require_file(exec_traj, "trajectory file");
            require_file(exec_plan, "plan file");
            const auto ep = episode();
            const auto trs = lift::load_trajectories(exec_traj);
            if (trs.size() != 2) {
                throw app::ConfigError("trajectory file must hold two streams");
            }
            const pipeline::TrajectoryPair tr{trs[0], trs[1]};
            const auto plan = pipeline::load_plan(exec_plan);
            const auto out = pipeline::execute(ep, tr, plan, cfg.sim);
            if (!exec_events.empty()) {
                write_events(exec_events, out.events);
            }
            if (!exec_out.empty()) {
                app::RunReport r{task, plan.allocator == "none" ? "no_allocation" : "full", "file", cfg.seed,
                                 {app::episode_result(out)}};
                prepare_output(exec_out);
                app::save_report(exec_out, r);
            }
            std::cout << (out.success ? "success" : "failure") << ", " << out.collisions << " collisions\n";
            for (const auto& r : out.reasons) {
                std::cout << "  " << r << '\n';
            }
        } else if (*pipe) {
            const auto mode = pipeline::mode_from_string(pipe_mode);
            const bool shared = mode != pipeline::Mode::no_siamese;
            std::optional<net::SfdNet<float>> model;
            if (!pipe_oracle) {
                const auto ckpt =
                    pipe_ckpt.empty() ? (shared ? cfg.checkpoint() : cfg.checkpoint_unshared()) : pipe_ckpt;
                if (pipe_train) {
                    model.emplace(train_and_save(cfg, shared, ckpt, default_log(cfg, shared)));
                } else {
                    if (!fs::is_regular_file(ckpt)) {
                        throw app::ConfigError("checkpoint " + ckpt + " not found; train one or pass --train");
                    }
                    model.emplace(load_checkpoint(ckpt));
                }
            } else if (pipe_train) {
                throw app::ConfigError("--train has no effect with --oracle-flows");
            }
            const auto eps = app::make_episodes(cfg.task, seeds_or(pipe_seeds, cfg.eval_seeds));
            const auto run = app::run_pipeline(cfg, eps, mode, model ? &*model : nullptr);
            const auto out = pipe_out.empty()
                                 ? cfg.out_dir + "/report_" + task + "_" + pipe_mode + "_" + run.report.flows + ".json"
                                 : pipe_out;
            prepare_output(out);
            app::save_report(out, run.report);
            if (!pipe_events.empty()) {
                for (std::size_t i = 0; i < eps.size(); ++i) {
                    write_events(pipe_events + "/" + task + "_" + std::to_string(eps[i].seed) + ".jsonl", run.events[i]);
                }
            }
            print_summary(app::aggregate({run.report}));
            std::cout << "wrote " << out << '\n';
        } else if (*report) {
            std::vector<app::RunReport> reports;
            for (const auto& p : report_in) {
                require_file(p, "report");
                reports.push_back(app::load_report(p));
            }
            const auto rows = app::aggregate(reports);
            print_summary(rows);
            if (!report_csv.empty()) {
                write_text(report_csv, app::summary_csv(rows));
            }
            if (!report_svg.empty()) {
                write_text(report_svg, app::summary_svg(rows));
            }
        } else if (*ablate) {
            const auto dir = abl_dir.empty() ? cfg.out_dir + "/ablate_" + task : abl_dir;
            fs::create_directories(dir);
            const auto eps = app::make_episodes(cfg.task, seeds_or(abl_seeds, cfg.eval_seeds));
            std::vector<app::RunReport> reports;
            auto run_mode = [&](pipeline::Mode mode, const net::SfdNet<float>* model) {
                auto run = app::run_pipeline(cfg, eps, mode, model);
                app::save_report(dir + "/report_" + pipeline::to_string(mode) + ".json", run.report);
                reports.push_back(std::move(run.report));
            };
            if (abl_oracle) {
                run_mode(pipeline::Mode::full, nullptr);
                run_mode(pipeline::Mode::no_allocation, nullptr);
            } else {
                auto get = [&](bool shared) {
                    const auto ckpt = shared ? cfg.checkpoint() : cfg.checkpoint_unshared();
                    if (abl_train) {
                        return train_and_save(cfg, shared, ckpt, default_log(cfg, shared));
                    }
                    if (!fs::is_regular_file(ckpt)) {
                        throw app::ConfigError("checkpoint " + ckpt + " not found; train one or pass --train");
                    }
                    return load_checkpoint(ckpt);
                };
                const auto shared_model = get(true);
                const auto unshared_model = get(false);
                run_mode(pipeline::Mode::full, &shared_model);
                run_mode(pipeline::Mode::no_allocation, &shared_model);
                run_mode(pipeline::Mode::no_siamese, &unshared_model);
            }
            const auto rows = app::aggregate(reports);
            write_text(dir + "/summary.csv", app::summary_csv(rows));
            write_text(dir + "/summary.svg", app::summary_svg(rows));
            print_summary(rows);
            std::cout << "wrote " << dir << '\n';
        }
        return 0;
    } catch (const app::ConfigError& e) {
        std::cerr << "sfd: " << e.what() << '\n';
        return kUsageError;
    } catch (const app::ReportError& e) {
        std::cerr << "sfd: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "sfd: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "sfd: " << e.what() << '\n';
        return kPipelineError;
    }
}
