#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "itl/lab.hpp"
#include "itl/rng.hpp"
#include "json.hpp"

namespace itl::lab {

using factstore::FactDatabase;
using nlohmann::json;

namespace {

const char* regime_name(Regime r) {
    return r == Regime::in_weight ? "in_weight" : "in_tool";
}

double cell_stop_threshold(const SweepConfig& cfg, int size) {
    auto it = cfg.stop_override.find(size);
    return it == cfg.stop_override.end() ? cfg.threshold
                                         : std::max(cfg.threshold, it->second);
}

std::string cell_cache_path(const SweepConfig& cfg, int size, int dim,
                            std::uint64_t seed) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s_a%.2f_s%d_d%d_seed%llu_t%.2f.json",
                  regime_name(cfg.regime), cfg.alpha, size, dim,
                  static_cast<unsigned long long>(seed),
                  cell_stop_threshold(cfg, size));
    return (std::filesystem::path(cfg.cache_dir) / buf).string();
}

SweepRecord run_cell(const SweepConfig& cfg, const DataBundle& cd, int size,
                     int dim, std::uint64_t seed) {
    TrainOptions opt;
    opt.model.dim = dim;
    opt.regime = cfg.regime;
    opt.optim.batch_size = cfg.batch_size;
    opt.optim.max_steps = cfg.max_steps;
    opt.optim.seed = derive_seed(
        derive_seed(derive_seed(seed, "init"), size),
        static_cast<std::uint64_t>(dim));
    opt.stop_threshold = cell_stop_threshold(cfg, size);
    // Full-database recall evaluation scales with the number of facts, so
    // stretch the eval cadence for large databases to keep its cost a small
    // fraction of training. Sizes up to 512 keep the configured cadence so
    // threshold-crossing step counts stay finely resolved.
    opt.eval_every = cfg.eval_every * std::max(1, size / 512);
    opt.log_every = 0;
    opt.record_thresholds = {0.80, 0.95, 0.99};
    if (std::find(opt.record_thresholds.begin(), opt.record_thresholds.end(),
                  cfg.threshold) == opt.record_thresholds.end())
        opt.record_thresholds.push_back(cfg.threshold);

    TrainResult tr =
        train(opt, cd.dialogs, cd.eval_db, cd.rs ? &*cd.rs : nullptr);

    SweepRecord rec;
    rec.regime = cfg.regime;
    rec.alpha = cfg.alpha;
    rec.n_facts = size;
    rec.dim = dim;
    rec.param_count = neuralcore::param_count(opt.model);
    rec.recall = tr.final_recall;
    rec.seed = seed;
    rec.steps_used = tr.steps_used;
    rec.threshold_steps = tr.threshold_steps;
    return rec;
}

}  // namespace

DataBundle make_experiment_data(Regime regime, int n_facts,
                                std::uint64_t seed, double alpha,
                                int k_databases) {
    if (n_facts % factstore::kNumAttributes != 0)
        throw TrainError("fact count must be a multiple of 4");
    const int n_names = n_facts / factstore::kNumAttributes;
    auto pools = factstore::build_value_pools(derive_seed(seed, "pools"));
    auto names = factstore::generate_names(
        n_names, derive_seed(derive_seed(seed, "names"), n_facts));

    DataBundle cd;
    if (regime == Regime::in_weight) {
        cd.eval_db = factstore::build_database_with_names(
            names, pools, derive_seed(derive_seed(seed, "values"), n_facts),
            alpha);
        cd.dialogs = factstore::build_dialogs(cd.eval_db, Regime::in_weight);
    } else {
        if (k_databases < 1) throw TrainError("k_databases must be >= 1");
        for (int k = 0; k < k_databases; ++k) {
            auto db = factstore::build_database_with_names(
                names, pools,
                derive_seed(
                    derive_seed(derive_seed(seed, "values"), n_facts),
                    static_cast<std::uint64_t>(k)),
                0.0);
            auto part = factstore::build_dialogs(db, Regime::in_tool);
            cd.dialogs.insert(cd.dialogs.end(), part.begin(), part.end());
            if (k == 0) {
                cd.rs = toolagent::RetrievalSystem::from_database(db);
                cd.eval_db = std::move(db);
            }
        }
    }
    return cd;
}

factstore::FactDatabase make_ood_database(int n_facts, std::uint64_t seed,
                                          bool fresh_names) {
    const int n_names = n_facts / factstore::kNumAttributes;
    auto pools = factstore::build_value_pools(derive_seed(seed, "pools"));
    auto names = factstore::generate_names(
        n_names,
        fresh_names
            ? derive_seed(derive_seed(seed, "ood-names"), n_facts)
            : derive_seed(derive_seed(seed, "names"), n_facts));
    return factstore::build_database_with_names(
        names, pools, derive_seed(derive_seed(seed, "ood-values"), n_facts),
        0.0);
}

std::string sweep_record_to_json(const SweepRecord& r) {
    json j;
    j["regime"] = regime_name(r.regime);
    j["alpha"] = r.alpha;
    j["n_facts"] = r.n_facts;
    j["dim"] = r.dim;
    j["param_count"] = r.param_count;
    j["recall"] = r.recall;
    j["seed"] = r.seed;
    j["steps_used"] = r.steps_used;
    json steps = json::object();
    for (auto& [t, s] : r.threshold_steps) {
        char key[16];
        std::snprintf(key, sizeof key, "%.2f", t);
        steps[key] = s;
    }
    j["threshold_steps"] = steps;
    return j.dump();
}

SweepRecord sweep_record_from_json(const std::string& text) {
    json j = json::parse(text);
    SweepRecord r;
    r.regime = j.at("regime").get<std::string>() == "in_tool"
                   ? Regime::in_tool
                   : Regime::in_weight;
    r.alpha = j.at("alpha").get<double>();
    r.n_facts = j.at("n_facts").get<int>();
    r.dim = j.at("dim").get<int>();
    r.param_count = j.at("param_count").get<long>();
    r.recall = j.at("recall").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.steps_used = j.at("steps_used").get<int>();
    for (auto& [k, v] : j.at("threshold_steps").items())
        r.threshold_steps[std::stod(k)] = v.get<int>();
    return r;
}

std::vector<SweepRecord> min_param_sweep(const SweepConfig& cfg) {
    if (!std::is_sorted(cfg.dims.begin(), cfg.dims.end()))
        throw TrainError("dims must be sorted ascending");
    if (!cfg.cache_dir.empty())
        std::filesystem::create_directories(cfg.cache_dir);

    std::vector<SweepRecord> out;
    // Capacity needed to store a database is nondecreasing in its size, so
    // for each seed the ascending dim search can start a little below the
    // smallest dim that succeeded at the previous (smaller) size instead of
    // at the bottom of the grid. The two-step margin keeps the search able
    // to detect a non-monotone minimum if one exists; skipped dims simply
    // produce no records.
    std::map<std::uint64_t, std::size_t> warm_start;
    for (int size : cfg.sizes) {
        const double stop_thr = cell_stop_threshold(cfg, size);
        for (std::uint64_t seed : cfg.seeds) {
            std::optional<DataBundle> cd;
            const std::size_t first_idx =
                warm_start.count(seed)
                    ? (warm_start[seed] >= 2 ? warm_start[seed] - 2 : 0)
                    : 0;
            for (std::size_t di = first_idx; di < cfg.dims.size(); ++di) {
                const int dim = cfg.dims[di];
                SweepRecord rec;
                const std::string cache =
                    cfg.cache_dir.empty()
                        ? std::string()
                        : cell_cache_path(cfg, size, dim, seed);
                bool loaded = false;
                if (!cache.empty() && std::filesystem::exists(cache)) {
                    std::ifstream in(cache);
                    std::stringstream ss;
                    ss << in.rdbuf();
                    rec = sweep_record_from_json(ss.str());
                    loaded = true;
                }
                if (!loaded) {
                    if (!cd)
                        cd = make_experiment_data(cfg.regime, size, seed,
                                                  cfg.alpha, cfg.k_databases);
                    if (cfg.verbose)
                        std::fprintf(stderr,
                                     "[sweep] %s size=%d dim=%d seed=%llu\n",
                                     regime_name(cfg.regime), size, dim,
                                     static_cast<unsigned long long>(seed));
                    rec = run_cell(cfg, *cd, size, dim, seed);
                    if (cfg.verbose)
                        std::fprintf(stderr,
                                     "[sweep]   done: params=%ld recall=%.4f "
                                     "steps=%d\n",
                                     rec.param_count, rec.recall,
                                     rec.steps_used);
                    if (!cache.empty()) {
                        std::ofstream outf(cache);
                        outf << sweep_record_to_json(rec) << "\n";
                    }
                }
                out.push_back(rec);
                if (rec.reached(stop_thr)) {
                    warm_start[seed] = di;
                    break;
                }
            }
        }
    }
    return out;
}

std::vector<SizeMinimum> summarize_minima(
    const std::vector<SweepRecord>& records, const std::vector<int>& sizes,
    const std::vector<std::uint64_t>& seeds, double threshold) {
    std::vector<SizeMinimum> out;
    for (int size : sizes) {
        SizeMinimum sm;
        sm.n_facts = size;
        sm.threshold = threshold;
        for (std::uint64_t seed : seeds) {
            double best = -1.0;
            for (const auto& r : records) {
                if (r.n_facts != size || r.seed != seed ||
                    !r.reached(threshold))
                    continue;
                if (best < 0 || r.param_count < best) best = r.param_count;
            }
            sm.per_seed_min.push_back(best);
            if (best < 0) sm.saturated = true;
        }
        double sum = 0.0;
        int n = 0;
        for (double v : sm.per_seed_min)
            if (v >= 0) {
                sum += v;
                ++n;
            }
        sm.mean = n == 0 ? -1.0 : sum / n;
        double var = 0.0;
        for (double v : sm.per_seed_min)
            if (v >= 0) var += (v - sm.mean) * (v - sm.mean);
        sm.stddev = n <= 1 ? 0.0 : std::sqrt(var / (n - 1));
        out.push_back(std::move(sm));
    }
    return out;
}

CapacityBound theoretical_lower_bound(
    int n_names, const std::vector<std::size_t>& pool_sizes, int bits) {
    if (bits < 1) throw TrainError("bits_per_param must be >= 1");
    CapacityBound cb;
    cb.n_names = n_names;
    cb.value_pool_sizes = pool_sizes;
    cb.bits_per_param = bits;
    double sum_log2 = 0.0;
    for (std::size_t p : pool_sizes)
        sum_log2 += std::log2(static_cast<double>(p));
    cb.bound_params = static_cast<double>(n_names) / bits * sum_log2;
    cb.c = pool_sizes.empty()
               ? 0.0
               : sum_log2 / (bits * static_cast<double>(pool_sizes.size()));
    return cb;
}

CapacityBound theoretical_lower_bound(const FactDatabase& db,
                                      const factstore::ValuePools& pools,
                                      int bits) {
    std::vector<std::size_t> sizes;
    for (factstore::Attribute a : factstore::kAllAttributes)
        sizes.push_back(pools.at(a).size());
    return theoretical_lower_bound(static_cast<int>(db.names.size()), sizes,
                                   bits);
}

std::vector<SweepRecord> correlation_experiment(
    const SweepConfig& base, const std::vector<double>& alphas) {
    std::vector<SweepRecord> out;
    for (double alpha : alphas) {
        if (alpha < 0.0 || alpha > 1.0)
            throw TrainError("alpha must lie in [0, 1]");
        SweepConfig cfg = base;
        cfg.regime = Regime::in_weight;
        cfg.alpha = alpha;
        auto part = min_param_sweep(cfg);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

namespace {

std::ofstream open_csv(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw TrainError("cannot write " + path);
    return f;
}

void write_minimum_rows(std::ofstream& f, const std::string& prefix,
                        const SizeMinimum& sm) {
    f << prefix << sm.n_facts << "," << sm.mean << "," << sm.stddev << ","
      << (sm.saturated ? 1 : 0) << "\n";
}

}  // namespace

void write_fig2_csv(const std::vector<SizeMinimum>& in_weight,
                    const std::vector<SizeMinimum>& in_tool,
                    const std::string& path) {
    auto f = open_csv(path);
    f << "n_facts,regime,min_params_mean,min_params_std,saturated\n";
    auto sorted = [](std::vector<SizeMinimum> v) {
        std::sort(v.begin(), v.end(), [](auto& a, auto& b) {
            return a.n_facts < b.n_facts;
        });
        return v;
    };
    for (const auto& sm : sorted(in_weight)) {
        f << sm.n_facts << ",in_weight," << sm.mean << "," << sm.stddev << ","
          << (sm.saturated ? 1 : 0) << "\n";
    }
    for (const auto& sm : sorted(in_tool)) {
        f << sm.n_facts << ",in_tool," << sm.mean << "," << sm.stddev << ","
          << (sm.saturated ? 1 : 0) << "\n";
    }
}

void write_fig3_csv(const std::vector<OodRow>& rows, const std::string& path) {
    auto f = open_csv(path);
    f << "n_facts,seed,ood_accuracy,constant_baseline\n";
    auto sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) {
        return std::tie(a.n_facts, a.seed) < std::tie(b.n_facts, b.seed);
    });
    for (const auto& r : sorted)
        f << r.n_facts << "," << r.seed << "," << r.ood_accuracy << ","
          << r.baseline << "\n";
}

void write_fig4_csv(const std::vector<AlphaMinimum>& rows,
                    const std::string& path) {
    auto f = open_csv(path);
    f << "alpha,n_facts,min_params_mean,min_params_std,saturated\n";
    auto sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) {
        return std::tie(a.minimum.n_facts, a.alpha) <
               std::tie(b.minimum.n_facts, b.alpha);
    });
    for (const auto& r : sorted) {
        std::ostringstream prefix;
        prefix << r.alpha << ",";
        write_minimum_rows(f, prefix.str(), r.minimum);
    }
}

void write_fig8_csv(const std::vector<ThresholdMinimum>& rows,
                    const std::string& path) {
    auto f = open_csv(path);
    f << "threshold,n_facts,min_params_mean,min_params_std,saturated\n";
    auto sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) {
        return std::tie(a.minimum.n_facts, a.threshold) <
               std::tie(b.minimum.n_facts, b.threshold);
    });
    for (const auto& r : sorted) {
        std::ostringstream prefix;
        prefix << r.threshold << ",";
        write_minimum_rows(f, prefix.str(), r.minimum);
    }
}

}  // namespace itl::lab
