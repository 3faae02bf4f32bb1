// cep3: batch pipeline for community event forecasting on dynamic graphs.
//
// Commands: ingest | communities | train | evaluate | forecast | simulate |
//           export-viz | bench-scaling
// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

#include "cep3/baselines.hpp"
#include "cep3/evaluation.hpp"
#include "cep3/synth.hpp"
#include "cep3/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct AppConfig {
    // model (defaults match the reference hyperparameters)
    std::size_t hidden_dim = 100;
    std::size_t head_hidden = 50;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t fanout = 15;
    std::size_t d_time = 16;
    std::size_t rollout_hops = 2;
    std::size_t mlp_hidden = 0;
    bool hierarchical = true;
    std::string ar_mode = "full";  // full | incident
    // training
    std::size_t epochs = 100;
    double lr = 1e-4;
    std::size_t window_k = 200;
    std::size_t parallel_windows = 1;
    double clip_norm = 5.0;
    // data
    double train_frac = 0.70;
    double val_frac = 0.15;
};

cep3::Cep3Config to_model_config(const AppConfig& a) {
    cep3::Cep3Config c;
    c.enc.hidden_dim = a.hidden_dim;
    c.enc.layers = a.layers;
    c.enc.heads = a.heads;
    c.enc.fanout = a.fanout;
    c.enc.d_time = a.d_time;
    c.enc.mlp_hidden = a.mlp_hidden;
    c.fc.head_hidden = a.head_hidden;
    c.hierarchical = a.hierarchical;
    c.ar = a.ar_mode == "incident" ? cep3::Cep3Config::ArMode::IncidentOnly
                                   : cep3::Cep3Config::ArMode::Full;
    c.rollout_hops = a.rollout_hops;
    c.sync();
    return c;
}

json config_json(const AppConfig& a) {
    return json{{"hidden_dim", a.hidden_dim},
                {"head_hidden", a.head_hidden},
                {"layers", a.layers},
                {"heads", a.heads},
                {"fanout", a.fanout},
                {"d_time", a.d_time},
                {"rollout_hops", a.rollout_hops},
                {"mlp_hidden", a.mlp_hidden},
                {"hierarchical", a.hierarchical},
                {"ar_mode", a.ar_mode},
                {"epochs", a.epochs},
                {"lr", a.lr},
                {"window_k", a.window_k},
                {"parallel_windows", a.parallel_windows},
                {"clip_norm", a.clip_norm},
                {"train_frac", a.train_frac},
                {"val_frac", a.val_frac}};
}

// File-backed values fill in whatever the command line did not set.
void apply_config_file(CLI::App* cmd, AppConfig& a, const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw cep3::DataError("config file not found: " + path);
    json j;
    in >> j;
    auto ov = [&](const char* flag, const char* key, auto& field) {
        if (!j.contains(key)) return;
        const CLI::Option* o = cmd->get_option_no_throw(flag);
        if (o && o->count() > 0) return;  // explicit flag wins
        j.at(key).get_to(field);
    };
    ov("--hidden-dim", "hidden_dim", a.hidden_dim);
    ov("--head-hidden", "head_hidden", a.head_hidden);
    ov("--layers", "layers", a.layers);
    ov("--heads", "heads", a.heads);
    ov("--fanout", "fanout", a.fanout);
    ov("--d-time", "d_time", a.d_time);
    ov("--rollout-hops", "rollout_hops", a.rollout_hops);
    ov("--mlp-hidden", "mlp_hidden", a.mlp_hidden);
    ov("--hierarchical", "hierarchical", a.hierarchical);
    ov("--ar-mode", "ar_mode", a.ar_mode);
    ov("--epochs", "epochs", a.epochs);
    ov("--lr", "lr", a.lr);
    ov("--window-k", "window_k", a.window_k);
    ov("--parallel-windows", "parallel_windows", a.parallel_windows);
    ov("--clip-norm", "clip_norm", a.clip_norm);
    ov("--train-frac", "train_frac", a.train_frac);
    ov("--val-frac", "val_frac", a.val_frac);
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    return h;
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct Manifest {
    std::string command;
    json config;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& out_dir) const {
        json j;
        j["command"] = command;
        j["config"] = config;
        j["seed"] = seed;
        json in = json::object(), out = json::object();
        for (const auto& p : inputs) in[p] = hex64(fnv1a_file(p));
        for (const auto& p : outputs) out[p] = hex64(fnv1a_file(p));
        j["inputs"] = in;
        j["outputs"] = out;
        j["wall_clock_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                .count();
        std::ofstream f(out_dir / "manifest.json");
        f << j.dump(2) << "\n";
    }
};

cep3::EventStream load_stream(const std::string& path) {
    if (!fs::exists(path)) throw cep3::DataError("input not found: " + path);
    return cep3::ingest_events_file(path);
}

cep3::CommunityAssignment load_communities(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw cep3::DataError("communities file not found: " + path);
    return cep3::read_communities_csv(in);
}

void write_trace_csv(const std::vector<cep3::TraceEntry>& trace,
                     const std::string& path) {
    std::ofstream f(path);
    f << "epoch,batch,time_nll,entity_nll,total\n";
    f.precision(17);
    for (const auto& e : trace)
        f << e.epoch << "," << e.batch << "," << e.time_nll << "," << e.entity_nll
          << "," << e.total << "\n";
}

void write_steps_csv(std::ostream& f, int community_id,
                     const std::vector<cep3::ForecastStep>& steps) {
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& s = steps[i];
        f << community_id << "," << i << "," << s.t_abs << "," << s.dt << ","
          << s.source << "," << s.dest << "," << s.lambda_total << "\n";
    }
}

// Test-split windows: one K-event window per community.
std::vector<cep3::Window> eval_windows(const cep3::EventStream& stream,
                                       const cep3::CommunityAssignment& comm,
                                       const AppConfig& cfg) {
    cep3::SplitSpec ss;
    ss.train_frac = cfg.train_frac;
    ss.val_frac = cfg.val_frac;
    ss.test_frac = 1.0 - cfg.train_frac - cfg.val_frac;
    auto split = cep3::chronological_split(stream, ss);
    return cep3::make_windows(split.test, comm, cfg.window_k);
}

int run(int argc, char** argv) {
    CLI::App app{"community event prediction on continuous-time dynamic graphs"};
    app.require_subcommand(1);

    AppConfig cfg;
    std::uint64_t seed = 0;
    std::string config_path, out_dir, input_path, comm_path, ckpt_dir, model_name;

    auto add_common = [&](CLI::App* c, bool needs_out = true) {
        c->add_option("--seed", seed, "RNG seed");
        c->add_option("--config", config_path, "flat JSON config file");
        auto* o = c->add_option("--out", out_dir, "output directory");
        if (needs_out) o->required();
    };
    auto add_model_opts = [&](CLI::App* c) {
        c->add_option("--hidden-dim", cfg.hidden_dim);
        c->add_option("--head-hidden", cfg.head_hidden);
        c->add_option("--layers", cfg.layers);
        c->add_option("--heads", cfg.heads);
        c->add_option("--fanout", cfg.fanout);
        c->add_option("--d-time", cfg.d_time);
        c->add_option("--rollout-hops", cfg.rollout_hops);
        c->add_option("--mlp-hidden", cfg.mlp_hidden);
        c->add_option("--hierarchical", cfg.hierarchical,
                      "chain p(u)p(v|u) heads instead of the joint pair head");
        c->add_option("--ar-mode", cfg.ar_mode)
            ->check(CLI::IsMember({"full", "incident"}));
        c->add_option("--window-k", cfg.window_k);
        c->add_option("--train-frac", cfg.train_frac);
        c->add_option("--val-frac", cfg.val_frac);
    };

    // ingest ---------------------------------------------------------------
    auto* c_ing = app.add_subcommand(
        "ingest", "normalize an event CSV: compact ids, sort, synthesize "
                  "10-dim features when absent, rescale times to [0,1000]");
    bool no_rescale = false, no_features = false;
    c_ing->add_option("--input", input_path, "event CSV source,dest,time[,f...]")
        ->required();
    c_ing->add_flag("--no-rescale", no_rescale);
    c_ing->add_flag("--no-features", no_features);
    add_common(c_ing);

    // communities ------------------------------------------------------------
    auto* c_com = app.add_subcommand(
        "communities", "Louvain communities on the train split's count-weighted "
                       "static projection (CSV: node,community)");
    bool full_stream = false;
    c_com->add_option("--input", input_path)->required();
    c_com->add_flag("--full-stream", full_stream,
                    "use the whole stream instead of the train split");
    c_com->add_option("--train-frac", cfg.train_frac);
    c_com->add_option("--val-frac", cfg.val_frac);
    add_common(c_com);

    // train -------------------------------------------------------------
    auto* c_tr = app.add_subcommand("train", "train the model; writes params.bin, "
                                             "params.json and trace.csv");
    c_tr->add_option("--input", input_path)->required();
    c_tr->add_option("--communities", comm_path)->required();
    c_tr->add_option("--epochs", cfg.epochs);
    c_tr->add_option("--lr", cfg.lr);
    c_tr->add_option("--parallel-windows", cfg.parallel_windows);
    c_tr->add_option("--clip-norm", cfg.clip_norm);
    add_model_opts(c_tr);
    add_common(c_tr);

    // evaluate ------------------------------------------------------------
    auto* c_ev = app.add_subcommand(
        "evaluate", "teacher-forced perplexity and free-running normalized MAE "
                    "on the test split, averaged over communities");
    c_ev->add_option("--input", input_path)->required();
    c_ev->add_option("--communities", comm_path)->required();
    c_ev->add_option("--model", model_name, "cep3 | poisson | hawkes")
        ->default_val("cep3");
    c_ev->add_option("--checkpoint", ckpt_dir, "train output dir (cep3 only)");
    add_model_opts(c_ev);
    add_common(c_ev);

    // forecast -----------------------------------------------------------
    auto* c_fc = app.add_subcommand(
        "forecast", "free-running K-step rollout per community "
                    "(CSV: community,step,t_abs,dt,source,dest,lambda_total)");
    c_fc->add_option("--input", input_path)->required();
    c_fc->add_option("--communities", comm_path)->required();
    c_fc->add_option("--checkpoint", ckpt_dir)->required();
    bool sample_dt = false;
    c_fc->add_flag("--sample", sample_dt, "sample event gaps instead of 1/lambda");
    add_model_opts(c_fc);
    add_common(c_fc);

    // simulate ------------------------------------------------------------
    auto* c_sim = app.add_subcommand(
        "simulate", "synthesize an event stream from a ground-truth process "
                    "spec (writes events.csv and spec.json)");
    std::string preset = "poisson", spec_path;
    double sim_rate = 0.05, sim_mu = 0.02, sim_alpha = 0.5, sim_beta = 1.0,
           sim_horizon = 1000.0;
    c_sim->add_option("--preset", preset, "poisson | hawkes (two 6-node "
                                          "communities, zero cross rates)")
        ->check(CLI::IsMember({"poisson", "hawkes"}));
    c_sim->add_option("--spec", spec_path, "spec JSON (overrides --preset)");
    c_sim->add_option("--rate", sim_rate);
    c_sim->add_option("--mu", sim_mu);
    c_sim->add_option("--alpha", sim_alpha);
    c_sim->add_option("--beta", sim_beta);
    c_sim->add_option("--horizon", sim_horizon);
    add_common(c_sim);

    // export-viz ----------------------------------------------------
    auto* c_viz = app.add_subcommand(
        "export-viz", "per-pair frequency over 3 sampled rollouts per "
                      "community, keeping the top 33% most frequent pairs "
                      "(CSV: community,source,dest,frequency,rank)");
    c_viz->add_option("--input", input_path)->required();
    c_viz->add_option("--communities", comm_path)->required();
    c_viz->add_option("--checkpoint", ckpt_dir)->required();
    add_model_opts(c_viz);
    add_common(c_viz);

    // bench-scaling -------------------------------------------------------
    auto* c_bn = app.add_subcommand(
        "bench-scaling", "ns/step of the hierarchical vs joint entity heads "
                         "across community sizes (CSV: size,head,ns_per_step)");
    std::vector<std::size_t> sizes{32, 128, 512};
    std::size_t bench_reps = 20;
    c_bn->add_option("--sizes", sizes)->delimiter(',');
    c_bn->add_option("--reps", bench_reps);
    c_bn->add_option("--hidden-dim", cfg.hidden_dim);
    c_bn->add_option("--d-time", cfg.d_time);
    add_common(c_bn);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error code=1 reason=\"" << e.what() << "\"\n";
        return 1;
    }
    CLI::App* cmd = app.get_subcommands().front();
    apply_config_file(cmd, cfg, config_path);
    if (!out_dir.empty()) fs::create_directories(out_dir);

    Manifest man;
    man.command = cmd->get_name();
    man.config = config_json(cfg);
    man.seed = seed;
    const fs::path out(out_dir);

    if (cmd == c_ing) {
        cep3::EventStream s = load_stream(input_path);
        if (s.feature_dim == 0 && !no_features)
            s = cep3::synthesize_edge_features(s);
        if (!no_rescale) s = cep3::rescale_times(s);
        const std::string out_csv = (out / "events.csv").string();
        cep3::write_events_csv_file(s, out_csv);
        man.inputs = {input_path};
        man.outputs = {out_csv};
        man.write(out);
        std::cout << "ingest ok events=" << s.size() << " nodes=" << s.node_count
                  << " feature_dim=" << s.feature_dim << "\n";
        return 0;
    }

    if (cmd == c_com) {
        cep3::EventStream s = load_stream(input_path);
        cep3::CommunityAssignment a;
        if (full_stream) {
            a = cep3::detect_communities_louvain(s);
        } else {
            cep3::SplitSpec ss;
            ss.train_frac = cfg.train_frac;
            ss.val_frac = cfg.val_frac;
            ss.test_frac = 1.0 - cfg.train_frac - cfg.val_frac;
            a = cep3::detect_communities_louvain(
                cep3::chronological_split(s, ss).train);
        }
        const std::string out_csv = (out / "communities.csv").string();
        std::ofstream f(out_csv);
        cep3::write_communities_csv(a, f);
        f.close();
        man.inputs = {input_path};
        man.outputs = {out_csv};
        man.write(out);
        std::cout << "communities ok count=" << a.communities.size() << "\n";
        return 0;
    }

    if (cmd == c_tr) {
        cep3::EventStream s = load_stream(input_path);
        auto comm = load_communities(comm_path);
        cep3::SplitSpec ss;
        ss.train_frac = cfg.train_frac;
        ss.val_frac = cfg.val_frac;
        ss.test_frac = 1.0 - cfg.train_frac - cfg.val_frac;
        auto split = cep3::chronological_split(s, ss);
        auto windows = cep3::make_windows(split.train, comm, cfg.window_k);
        if (windows.empty()) throw cep3::DataError("train: no usable windows");

        cep3::TemporalGraph graph(split.train);
        cep3::Cep3Model model(to_model_config(cfg), seed, s.feature_dim);
        model.attach(graph);

        cep3::TrainConfig tc;
        tc.epochs = cfg.epochs;
        tc.lr = cfg.lr;
        tc.window_k = cfg.window_k;
        tc.parallel_windows = cfg.parallel_windows;
        tc.clip_norm = cfg.clip_norm;
        tc.seed = seed;
        auto trace = cep3::train(model, windows, tc,
                                 [](std::size_t e, const cep3::EpochResult& r) {
                                     std::cout << "epoch " << e
                                               << " loss=" << r.total_loss << "\n";
                                 });

        const std::string blob = (out / "params.bin").string();
        const std::string pman = (out / "params.json").string();
        const std::string trc = (out / "trace.csv").string();
        model.params().save(blob, pman);
        write_trace_csv(trace, trc);
        man.inputs = {input_path, comm_path};
        man.outputs = {blob, pman, trc};
        man.write(out);
        std::cout << "train ok windows=" << windows.size()
                  << " final_loss=" << (trace.empty() ? 0.0 : trace.back().total)
                  << "\n";
        return 0;
    }

    if (cmd == c_ev || cmd == c_fc || cmd == c_viz) {
        cep3::EventStream s = load_stream(input_path);
        auto comm = load_communities(comm_path);
        auto windows = eval_windows(s, comm, cfg);
        if (windows.empty()) throw cep3::DataError("no test windows");

        cep3::TemporalGraph graph(s);  // neighbor lookups are time-bounded
        std::unique_ptr<cep3::ForecastModel> model;
        std::unique_ptr<cep3::Cep3Model> cep3_model;
        const std::string name = cmd == c_ev ? model_name : "cep3";
        if (name == "cep3") {
            cep3_model = std::make_unique<cep3::Cep3Model>(to_model_config(cfg),
                                                           seed, s.feature_dim);
            cep3_model->attach(graph);
            if (!ckpt_dir.empty())
                cep3_model->params() = cep3::ad::ParameterSet::load(
                    (fs::path(ckpt_dir) / "params.bin").string(),
                    (fs::path(ckpt_dir) / "params.json").string());
        } else if (name == "poisson" || name == "hawkes") {
            cep3::SplitSpec ss;
            ss.train_frac = cfg.train_frac;
            ss.val_frac = cfg.val_frac;
            ss.test_frac = 1.0 - cfg.train_frac - cfg.val_frac;
            auto split = cep3::chronological_split(s, ss);
            const double span =
                split.train.empty() ? 1.0
                                    : split.train.t_max() - split.train.t_min();
            auto pcm = std::make_unique<cep3::PerCommunityModel>();
            for (std::size_t q = 0; q < comm.communities.size(); ++q) {
                std::vector<cep3::Event> local;
                for (const cep3::Event& e : split.train.events) {
                    auto cu = comm.community_of.find(e.source);
                    auto cv = comm.community_of.find(e.dest);
                    if (cu != comm.community_of.end() && cu->second == (int)q &&
                        cv != comm.community_of.end() && cv->second == (int)q)
                        local.push_back(e);
                }
                if (name == "poisson") {
                    pcm->set((int)q, std::make_unique<cep3::PoissonForecast>(
                                         cep3::fit_poisson(local, span,
                                                           comm.communities[q])));
                } else {
                    if (local.empty()) {
                        // fall back to the Poisson smoothing floor
                        cep3::PoissonModel pm =
                            cep3::fit_poisson(local, span, comm.communities[q]);
                        pcm->set((int)q, std::make_unique<cep3::PoissonForecast>(pm));
                    } else {
                        pcm->set((int)q, std::make_unique<cep3::HawkesForecast>(
                                             cep3::fit_hawkes(local, span,
                                                              comm.communities[q])));
                    }
                }
            }
            model = std::move(pcm);
        } else {
            std::cerr << "error code=1 reason=\"unknown model '" << name << "'\"\n";
            return 1;
        }
        cep3::ForecastModel& fm = model ? *model : *cep3_model;

        if (cmd == c_ev) {
            std::mt19937_64 rng(seed);
            cep3::MetricReport r =
                cep3::evaluate_model(fm, windows, cep3::DtMode::Mean, &rng);
            r.model_id = name;
            r.split = "test";
            r.seed = seed;
            const std::string rj = (out / "report.json").string();
            const std::string rc = (out / "report.csv").string();
            {
                std::ofstream f(rj);
                cep3::write_report_json(r, f);
            }
            {
                std::ofstream f(rc);
                cep3::write_report_csv(r, f);
            }
            man.inputs = {input_path, comm_path};
            man.outputs = {rj, rc};
            man.write(out);
            std::cout << "evaluate ok model=" << name << " pp=" << r.mean_pp
                      << " mae=" << r.mean_mae << "\n";
            return 0;
        }

        if (cmd == c_fc) {
            const std::string out_csv = (out / "forecast.csv").string();
            std::ofstream f(out_csv);
            f << "community,step,t_abs,dt,source,dest,lambda_total\n";
            f.precision(17);
            std::mt19937_64 rng(seed);
            std::set<int> done;
            for (const cep3::Window& w : windows) {
                if (!done.insert(w.community_id).second) continue;
                fm.begin(w);
                auto steps = cep3::rollout(
                    fm, w.truth.size(),
                    sample_dt ? cep3::DtMode::Sample : cep3::DtMode::Mean, &rng);
                write_steps_csv(f, w.community_id, steps);
            }
            f.close();
            man.inputs = {input_path, comm_path};
            man.outputs = {out_csv};
            man.write(out);
            std::cout << "forecast ok communities=" << done.size() << "\n";
            return 0;
        }

        // export-viz: three sampled rollouts, keep the top third of pairs
        const std::string out_csv = (out / "viz.csv").string();
        std::ofstream f(out_csv);
        f << "community,source,dest,frequency,rank\n";
        std::set<int> done;
        for (const cep3::Window& w : windows) {
            if (!done.insert(w.community_id).second) continue;
            std::map<std::pair<cep3::NodeId, cep3::NodeId>, std::size_t> freq;
            for (std::uint64_t rep = 0; rep < 3; ++rep) {
                std::mt19937_64 rng(seed * 1000003ULL + rep);
                fm.begin(w);
                for (const auto& st :
                     cep3::rollout(fm, w.truth.size(), cep3::DtMode::Sample, &rng))
                    freq[{st.source, st.dest}] += 1;
            }
            std::vector<std::pair<std::pair<cep3::NodeId, cep3::NodeId>,
                                  std::size_t>>
                pairs(freq.begin(), freq.end());
            std::stable_sort(pairs.begin(), pairs.end(),
                             [](const auto& a, const auto& b) {
                                 return a.second > b.second;
                             });
            const std::size_t keep = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::ceil(pairs.size() / 3.0)));
            for (std::size_t i = 0; i < keep && i < pairs.size(); ++i)
                f << w.community_id << "," << pairs[i].first.first << ","
                  << pairs[i].first.second << "," << pairs[i].second << ","
                  << (i + 1) << "\n";
        }
        f.close();
        man.inputs = {input_path, comm_path};
        man.outputs = {out_csv};
        man.write(out);
        std::cout << "export-viz ok communities=" << done.size() << "\n";
        return 0;
    }

    if (cmd == c_sim) {
        cep3::GroundTruthSpec spec;
        if (!spec_path.empty()) {
            std::ifstream in(spec_path);
            if (!in) throw cep3::DataError("spec not found: " + spec_path);
            spec = cep3::read_spec_json(in);
            spec.seed = seed;
        } else if (preset == "poisson") {
            spec = cep3::two_community_poisson(sim_rate, sim_horizon, seed);
        } else {
            spec = cep3::two_community_hawkes(sim_mu, sim_alpha, sim_beta,
                                              sim_horizon, seed);
        }
        cep3::SimStats stats;
        cep3::EventStream s = cep3::simulate(spec, &stats);
        const std::string out_csv = (out / "events.csv").string();
        const std::string out_spec = (out / "spec.json").string();
        cep3::write_events_csv_file(s, out_csv);
        {
            std::ofstream f(out_spec);
            cep3::write_spec_json(spec, f);
        }
        if (!spec_path.empty()) man.inputs = {spec_path};
        man.outputs = {out_csv, out_spec};
        man.write(out);
        std::cout << "simulate ok events=" << s.size()
                  << " thinning_accept_rate="
                  << (stats.thinning_proposals
                          ? double(stats.thinning_accepts) /
                                double(stats.thinning_proposals)
                          : 1.0)
                  << "\n";
        return 0;
    }

    if (cmd == c_bn) {
        cep3::ForecasterConfig fc;
        fc.hidden_dim = cfg.hidden_dim;
        fc.head_hidden = cfg.head_hidden;
        fc.d_time = cfg.d_time;
        const std::string out_csv = (out / "bench.csv").string();
        std::ofstream f(out_csv);
        f << "size,head,ns_per_step\n";
        for (std::size_t n : sizes) {
            cep3::ad::ParameterSet ps(seed);
            cep3::forecaster_init(ps, fc);
            cep3::joint_head_init(ps, fc);
            std::mt19937_64 rng(seed + n);
            std::normal_distribution<double> nd(0.0, 0.5);
            cep3::ad::Tensor states(n, fc.hidden_dim);
            for (double& x : states.v) x = nd(rng);

            auto once = [&](bool joint) {
                cep3::ad::Tape t;
                std::vector<cep3::ad::Var> rows;
                cep3::ad::Var all = t.constant(states);
                rows.reserve(n);
                for (std::size_t i = 0; i < n; ++i) rows.push_back(t.row(all, i));
                if (joint) {
                    cep3::joint_distribution(t, ps, fc, rows, 0.5);
                } else {
                    cep3::ad::Var pu = cep3::source_distribution(t, ps, fc, rows, 0.5);
                    cep3::dest_distribution(
                        t, ps, fc, rows,
                        cep3::argmax_lowest(t.value(pu).v), 0.5);
                }
            };
            for (int head = 0; head < 2; ++head) {
                const bool joint = head == 1;
                once(joint);  // warm-up
                auto t0 = std::chrono::steady_clock::now();
                for (std::size_t r = 0; r < bench_reps; ++r) once(joint);
                const double ns =
                    std::chrono::duration<double, std::nano>(
                        std::chrono::steady_clock::now() - t0)
                        .count() /
                    static_cast<double>(bench_reps);
                f << n << "," << (joint ? "joint" : "hierarchical") << "," << ns
                  << "\n";
            }
        }
        f.close();
        man.outputs = {out_csv};
        man.write(out);
        std::cout << "bench-scaling ok sizes=" << sizes.size() << "\n";
        return 0;
    }

    std::cerr << "error code=1 reason=\"no command\"\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CLI::Error& e) {
        std::cerr << "error code=1 reason=\"" << e.what() << "\"\n";
        return 1;
    } catch (const cep3::DataError& e) {
        std::cerr << "error code=2 reason=\"" << e.what() << "\"\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error code=3 reason=\"" << e.what() << "\"\n";
        return 3;
    }
}
