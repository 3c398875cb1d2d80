// itl: dataset generation, training, evaluation, sweeps, the capacity
// bound, circuit verification, and plot-data emission from one binary.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "itl/circuit.hpp"
#include "itl/lab.hpp"
#include "itl/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace itl;

namespace {

constexpr const char* kVersion = "1.0.0";

factstore::Regime parse_regime(const std::string& s) {
    if (s == "in_weight") return factstore::Regime::in_weight;
    if (s == "in_tool") return factstore::Regime::in_tool;
    throw CLI::ValidationError("regime must be in_weight or in_tool");
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const json& config) {
    fs::create_directories(out_dir);
    json m;
    m["tool"] = "itl";
    m["version"] = kVersion;
    m["command"] = command;
    m["config"] = config;
    std::ofstream f(out_dir / "manifest.json");
    f << m.dump(2) << "\n";
}

// Shared sweep flags; a JSON config file may preset any of them, explicit
// flags win.
struct SweepArgs {
    std::string regime = "in_weight";
    std::vector<int> sizes;
    std::vector<int> dims = {4, 8, 12, 16, 24, 32, 48, 64};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    double threshold = 0.95;
    int max_steps = 20000;
    int batch_size = 32;
    int k_databases = 8;
    int eval_every = 250;
    std::string cache_dir;
    std::string config_file;
    std::string out = "sweep_records.jsonl";
    std::vector<std::string> stop_override;  // "size=threshold"

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--config", config_file,
                        "JSON file presetting any of these options");
        cmd->add_option("--regime", regime, "in_weight | in_tool");
        cmd->add_option("--sizes", sizes, "fact counts")->delimiter(',');
        cmd->add_option("--dims", dims, "embedding dims")->delimiter(',');
        cmd->add_option("--seeds", seeds, "seeds")->delimiter(',');
        cmd->add_option("--threshold", threshold, "recall threshold");
        cmd->add_option("--max-steps", max_steps, "step budget per cell");
        cmd->add_option("--batch-size", batch_size, "batch size");
        cmd->add_option("--k-databases", k_databases,
                        "in_tool: databases mixed per run");
        cmd->add_option("--eval-every", eval_every, "eval interval (steps)");
        cmd->add_option("--cache-dir", cache_dir, "per-cell result cache");
        cmd->add_option("--stop-override", stop_override,
                        "size=threshold early-stop overrides")
            ->delimiter(',');
        cmd->add_option("--out", out, "output records JSONL");
    }

    void load_config_file(const CLI::App* cmd) {
        if (config_file.empty()) return;
        std::ifstream f(config_file);
        if (!f) throw CLI::ValidationError("cannot read " + config_file);
        json j = json::parse(f);
        auto set = [&](const char* key, auto& field) {
            if (j.contains(key) && cmd->count(std::string("--") +
                                              std::string(key)) == 0)
                field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        set("regime", regime);
        set("sizes", sizes);
        set("dims", dims);
        set("seeds", seeds);
        set("threshold", threshold);
        set("max-steps", max_steps);
        set("batch-size", batch_size);
        set("k-databases", k_databases);
        set("eval-every", eval_every);
        set("cache-dir", cache_dir);
        set("out", out);
    }

    lab::SweepConfig to_config() const {
        lab::SweepConfig cfg;
        cfg.regime = parse_regime(regime);
        cfg.sizes = sizes;
        cfg.dims = dims;
        cfg.seeds = seeds;
        cfg.threshold = threshold;
        cfg.max_steps = max_steps;
        cfg.batch_size = batch_size;
        cfg.k_databases = k_databases;
        cfg.eval_every = eval_every;
        cfg.cache_dir = cache_dir;
        cfg.verbose = true;
        for (const auto& s : stop_override) {
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw CLI::ValidationError("--stop-override wants size=thr");
            cfg.stop_override[std::stoi(s.substr(0, eq))] =
                std::stod(s.substr(eq + 1));
        }
        return cfg;
    }

    json to_json() const {
        return {{"regime", regime},         {"sizes", sizes},
                {"dims", dims},             {"seeds", seeds},
                {"threshold", threshold},   {"max_steps", max_steps},
                {"batch_size", batch_size}, {"k_databases", k_databases},
                {"eval_every", eval_every}, {"out", out}};
    }
};

void save_records(const std::vector<lab::SweepRecord>& records,
                  const std::string& path) {
    std::ofstream f(path);
    for (const auto& r : records) f << lab::sweep_record_to_json(r) << "\n";
}

std::vector<lab::SweepRecord> load_records(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<lab::SweepRecord> out;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) out.push_back(lab::sweep_record_from_json(line));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"in-weight vs in-tool learning laboratory"};
    app.require_subcommand(1);

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "generate a dialog dataset (JSONL)");
    int gen_facts = 64;
    std::uint64_t gen_seed = 1;
    double gen_alpha = 0.0;
    std::string gen_regime = "in_weight", gen_out = "dataset.jsonl";
    gen->add_option("--facts", gen_facts, "fact count (multiple of 4)");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--alpha", gen_alpha, "fact correlation in [0,1]");
    gen->add_option("--regime", gen_regime, "in_weight | in_tool");
    gen->add_option("--out", gen_out, "output JSONL path");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train one model");
    int tr_facts = 64, tr_dim = 32, tr_steps = 20000, tr_batch = 32;
    std::uint64_t tr_seed = 1;
    double tr_threshold = 0.95, tr_alpha = 0.0;
    int tr_k = 8;
    std::string tr_regime = "in_weight", tr_out = "run";
    train_cmd->add_option("--facts", tr_facts, "fact count");
    train_cmd->add_option("--dim", tr_dim, "embedding dim");
    train_cmd->add_option("--seed", tr_seed, "seed");
    train_cmd->add_option("--alpha", tr_alpha, "fact correlation");
    train_cmd->add_option("--max-steps", tr_steps, "step budget");
    train_cmd->add_option("--batch-size", tr_batch, "batch size");
    train_cmd->add_option("--threshold", tr_threshold,
                          "early-stop recall threshold (<0 disables)");
    train_cmd->add_option("--k-databases", tr_k, "in_tool database mix");
    train_cmd->add_option("--regime", tr_regime, "in_weight | in_tool");
    train_cmd->add_option("--out", tr_out, "output directory");

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_regime = "in_weight";
    int ev_facts = 64;
    std::uint64_t ev_seed = 1;
    bool ev_ood = false, ev_fresh_names = false;
    eval_cmd->add_option("--checkpoint", ev_ckpt, "model checkpoint")
        ->required();
    eval_cmd->add_option("--facts", ev_facts, "fact count");
    eval_cmd->add_option("--seed", ev_seed, "data seed");
    eval_cmd->add_option("--regime", ev_regime, "in_weight | in_tool");
    eval_cmd->add_flag("--ood", ev_ood, "evaluate on a fresh-value database");
    eval_cmd->add_flag("--fresh-names", ev_fresh_names,
                       "OOD with resampled names too");

    // ---- sweep / correlate ----
    auto* sweep_cmd =
        app.add_subcommand("sweep", "minimal-parameter sweep over a grid");
    SweepArgs sweep_args;
    sweep_args.add_flags(sweep_cmd);

    auto* corr_cmd = app.add_subcommand(
        "correlate", "min-param sweep per correlation level alpha");
    SweepArgs corr_args;
    corr_args.add_flags(corr_cmd);
    std::vector<double> corr_alphas = {0.0, 0.5, 1.0};
    corr_cmd->add_option("--alphas", corr_alphas, "alpha grid")
        ->delimiter(',');

    // ---- bound ----
    auto* bound_cmd =
        app.add_subcommand("bound", "Theorem 3.2 capacity lower bound");
    int bd_names = 1, bd_bits = 64;
    std::uint64_t bd_seed = 1;
    bound_cmd->add_option("--names", bd_names, "number of names |N|");
    bound_cmd->add_option("--bits", bd_bits, "bits per parameter b");
    bound_cmd->add_option("--seed", bd_seed, "pool seed");

    // ---- circuit-verify ----
    auto* cv = app.add_subcommand("circuit-verify",
                                  "verify the hand-built querying circuit");
    int cv_attrs = 4, cv_names = 200;
    std::uint64_t cv_seed = 7;
    cv->add_option("--attributes", cv_attrs, "attribute count |A|");
    cv->add_option("--names", cv_names, "random names to test");
    cv->add_option("--seed", cv_seed, "name seed");

    // ---- plot-data ----
    auto* plot = app.add_subcommand("plot-data",
                                    "aggregate sweep records into figure CSVs");
    int pl_figure = 2;
    std::string pl_records, pl_records2, pl_out = "figure.csv";
    double pl_threshold = 0.95;
    std::vector<double> pl_thresholds = {0.80, 0.95, 0.99};
    plot->add_option("--figure", pl_figure, "2, 4 or 8");
    plot->add_option("--records", pl_records, "sweep records JSONL")
        ->required();
    plot->add_option("--records-in-tool", pl_records2,
                     "figure 2: in_tool records JSONL");
    plot->add_option("--threshold", pl_threshold, "recall threshold");
    plot->add_option("--thresholds", pl_thresholds,
                     "figure 8 threshold grid")
        ->delimiter(',');
    plot->add_option("--out", pl_out, "output CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            auto bundle = lab::make_experiment_data(
                parse_regime(gen_regime), gen_facts, gen_seed, gen_alpha);
            factstore::write_jsonl(bundle.dialogs, gen_out);
            write_manifest(fs::path(gen_out).parent_path(), "gen",
                           {{"facts", gen_facts},
                            {"seed", gen_seed},
                            {"alpha", gen_alpha},
                            {"regime", gen_regime},
                            {"out", gen_out}});
            std::printf("wrote %zu dialogs to %s\n", bundle.dialogs.size(),
                        gen_out.c_str());
        } else if (*train_cmd) {
            auto regime = parse_regime(tr_regime);
            auto bundle = lab::make_experiment_data(regime, tr_facts, tr_seed,
                                                    tr_alpha, tr_k);
            lab::TrainOptions opt;
            opt.model.dim = tr_dim;
            opt.regime = regime;
            opt.optim.batch_size = tr_batch;
            opt.optim.max_steps = tr_steps;
            opt.optim.seed = derive_seed(tr_seed, "init");
            opt.stop_threshold = tr_threshold;
            auto res = lab::train(opt, bundle.dialogs, bundle.eval_db,
                                  bundle.rs ? &*bundle.rs : nullptr);
            fs::create_directories(tr_out);
            neuralcore::save_checkpoint(res.model,
                                        (fs::path(tr_out) / "model.ckpt")
                                            .string());
            std::ofstream mf(fs::path(tr_out) / "metrics.jsonl");
            for (const auto& p : res.log) {
                json j = {{"step", p.step},
                          {"loss", p.loss},
                          {"lr", p.lr}};
                if (p.recall >= 0) j["recall"] = p.recall;
                mf << j.dump() << "\n";
            }
            write_manifest(tr_out, "train",
                           {{"facts", tr_facts},
                            {"dim", tr_dim},
                            {"seed", tr_seed},
                            {"alpha", tr_alpha},
                            {"regime", tr_regime},
                            {"max_steps", tr_steps},
                            {"batch_size", tr_batch},
                            {"threshold", tr_threshold},
                            {"k_databases", tr_k}});
            std::printf("steps=%d final_loss=%.6f final_recall=%.4f\n",
                        res.steps_used, res.final_loss, res.final_recall);
        } else if (*eval_cmd) {
            auto regime = parse_regime(ev_regime);
            auto model = neuralcore::load_checkpoint(ev_ckpt);
            if (ev_ood) {
                auto db = lab::make_ood_database(ev_facts, ev_seed,
                                                 ev_fresh_names);
                auto rs = toolagent::RetrievalSystem::from_database(db);
                auto rep = lab::eval_ood(model, db, rs);
                std::printf("ood_accuracy=%.4f constant_baseline=%.4f\n",
                            rep.ood_accuracy, rep.constant_baseline);
            } else {
                auto bundle = lab::make_experiment_data(regime, ev_facts,
                                                        ev_seed);
                auto rep = lab::eval_recall(model, bundle.eval_db, regime,
                                            bundle.rs ? &*bundle.rs
                                                      : nullptr);
                std::printf(
                    "recall=%.4f queries=%d tool_calls=%d tool_errors=%d\n",
                    rep.recall_accuracy, rep.n_queries, rep.n_tool_calls,
                    rep.n_tool_errors);
            }
        } else if (*sweep_cmd) {
            sweep_args.load_config_file(sweep_cmd);
            auto cfg = sweep_args.to_config();
            auto records = lab::min_param_sweep(cfg);
            save_records(records, sweep_args.out);
            write_manifest(fs::path(sweep_args.out).parent_path(), "sweep",
                           sweep_args.to_json());
            auto minima = lab::summarize_minima(records, cfg.sizes, cfg.seeds,
                                                cfg.threshold);
            for (const auto& m : minima)
                std::printf("size=%d min_params mean=%.0f std=%.0f%s\n",
                            m.n_facts, m.mean, m.stddev,
                            m.saturated ? " (saturated)" : "");
        } else if (*corr_cmd) {
            corr_args.load_config_file(corr_cmd);
            auto cfg = corr_args.to_config();
            auto records = lab::correlation_experiment(cfg, corr_alphas);
            save_records(records, corr_args.out);
            json cj = corr_args.to_json();
            cj["alphas"] = corr_alphas;
            write_manifest(fs::path(corr_args.out).parent_path(), "correlate",
                           cj);
            for (double a : corr_alphas) {
                std::vector<lab::SweepRecord> sub;
                for (const auto& r : records)
                    if (r.alpha == a) sub.push_back(r);
                auto minima = lab::summarize_minima(sub, cfg.sizes, cfg.seeds,
                                                    cfg.threshold);
                for (const auto& m : minima)
                    std::printf("alpha=%.2f size=%d min_params mean=%.0f\n",
                                a, m.n_facts, m.mean);
            }
        } else if (*bound_cmd) {
            auto pools =
                factstore::build_value_pools(derive_seed(bd_seed, "pools"));
            std::vector<std::size_t> sizes;
            for (auto a : factstore::kAllAttributes)
                sizes.push_back(pools.at(a).size());
            auto cb = lab::theoretical_lower_bound(bd_names, sizes, bd_bits);
            std::printf("n_names=%d b=%d pools=[", cb.n_names,
                        cb.bits_per_param);
            for (std::size_t i = 0; i < cb.value_pool_sizes.size(); ++i)
                std::printf("%s%zu", i ? "," : "", cb.value_pool_sizes[i]);
            std::printf("] P_min=%.6f c=%.6f\n", cb.bound_params, cb.c);
        } else if (*cv) {
            auto prog = circuit::build_circuit(circuit::default_config(
                cv_attrs));
            auto names = factstore::generate_names(
                cv_names, derive_seed(cv_seed, "circuit-names"));
            int mismatches = 0;
            long long queries = 0;
            for (int a = 0; a < cv_attrs; ++a)
                for (const auto& n : names) {
                    const std::string q =
                        circuit::render_question(prog, a, n.full());
                    auto r = circuit::run_querying(prog, q);
                    ++queries;
                    if (r.malformed ||
                        r.text != circuit::render_target(prog, a, n.full()))
                        ++mismatches;
                }
            auto facts =
                circuit::verify_facts(prog, 0, names.front().full());
            bool facts_ok = true;
            std::printf("%-64s %s\n", "fact", "result");
            for (const auto& f : facts) {
                std::printf("%-64s %s\n", f.fact.c_str(),
                            f.pass ? "pass" : "FAIL");
                facts_ok = facts_ok && f.pass;
            }
            std::printf(
                "blocks=%d params=%zu queries=%lld exact_match=%.3f\n",
                prog.block_count(), prog.param_count(), queries,
                queries == 0 ? 0.0
                             : 1.0 - static_cast<double>(mismatches) /
                                        queries);
            if (mismatches > 0 || !facts_ok) return 1;
        } else if (*plot) {
            auto records = load_records(pl_records);
            std::vector<int> sizes;
            std::vector<std::uint64_t> seeds;
            for (const auto& r : records) {
                if (std::find(sizes.begin(), sizes.end(), r.n_facts) ==
                    sizes.end())
                    sizes.push_back(r.n_facts);
                if (std::find(seeds.begin(), seeds.end(), r.seed) ==
                    seeds.end())
                    seeds.push_back(r.seed);
            }
            std::sort(sizes.begin(), sizes.end());
            std::sort(seeds.begin(), seeds.end());
            if (pl_figure == 2) {
                auto inw = lab::summarize_minima(records, sizes, seeds,
                                                 pl_threshold);
                std::vector<lab::SizeMinimum> intool;
                if (!pl_records2.empty()) {
                    auto rt = load_records(pl_records2);
                    std::vector<int> sizes2;
                    for (const auto& r : rt)
                        if (std::find(sizes2.begin(), sizes2.end(),
                                      r.n_facts) == sizes2.end())
                            sizes2.push_back(r.n_facts);
                    std::sort(sizes2.begin(), sizes2.end());
                    intool = lab::summarize_minima(rt, sizes2, seeds,
                                                   pl_threshold);
                }
                lab::write_fig2_csv(inw, intool, pl_out);
            } else if (pl_figure == 4) {
                std::vector<lab::AlphaMinimum> rows;
                std::vector<double> alphas;
                for (const auto& r : records)
                    if (std::find(alphas.begin(), alphas.end(), r.alpha) ==
                        alphas.end())
                        alphas.push_back(r.alpha);
                std::sort(alphas.begin(), alphas.end());
                for (double a : alphas) {
                    std::vector<lab::SweepRecord> sub;
                    for (const auto& r : records)
                        if (r.alpha == a) sub.push_back(r);
                    for (auto& m : lab::summarize_minima(sub, sizes, seeds,
                                                         pl_threshold))
                        rows.push_back({a, m});
                }
                lab::write_fig4_csv(rows, pl_out);
            } else if (pl_figure == 8) {
                std::vector<lab::ThresholdMinimum> rows;
                for (double t : pl_thresholds)
                    for (auto& m :
                         lab::summarize_minima(records, sizes, seeds, t))
                        rows.push_back({t, m});
                lab::write_fig8_csv(rows, pl_out);
            } else {
                throw CLI::ValidationError("--figure must be 2, 4 or 8");
            }
            std::printf("wrote %s\n", pl_out.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
