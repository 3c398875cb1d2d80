// Experiment harness: training loop with early stopping, recall/OOD
// evaluation, minimal-parameter sweeps, the capacity lower bound, the
// correlation experiment, and plot-ready CSV emission.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "itl/factstore.hpp"
#include "itl/model.hpp"
#include "itl/optim.hpp"
#include "itl/toolagent.hpp"

namespace itl::lab {

using factstore::Regime;

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvalReport {
    double recall_accuracy = 0.0;
    int n_queries = 0;
    int n_tool_calls = 0;
    int n_tool_errors = 0;
};

struct OodReport {
    double ood_accuracy = 0.0;
    double constant_baseline = 0.0;
};

struct CapacityBound {
    int n_names = 0;
    std::vector<std::size_t> value_pool_sizes;
    int bits_per_param = 0;
    double bound_params = 0.0;  // P_min = (|N|/b) sum_a log2 |V_a|
    double c = 0.0;             // mean of log2|V_a| / b; P_min = c * #facts
};

struct TrainOptions {
    neuralcore::ModelConfig model;
    neuralcore::TrainConfig optim;
    Regime regime = Regime::in_weight;
    // Early stop once full-database recall reaches this value; < 0 disables.
    double stop_threshold = -1.0;
    // Recall levels whose first crossing step is recorded along the way.
    std::vector<double> record_thresholds = {0.80, 0.95, 0.99};
    int eval_every = 250;
    int log_every = 100;
};

struct MetricsPoint {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double recall = -1.0;  // -1 when no evaluation ran at this step
};

struct TrainResult {
    neuralcore::ModelState model;
    std::vector<MetricsPoint> log;
    int steps_used = 0;
    double final_loss = 0.0;
    double final_recall = 0.0;
    // threshold -> first step at which measured recall reached it
    std::map<double, int> threshold_steps;
};

// Trains on `data`; recall is measured over every fact of `eval_db`
// (in_tool evaluation goes through `rs`, which is then required).
TrainResult train(const TrainOptions& opt,
                  const std::vector<factstore::Dialog>& data,
                  const factstore::FactDatabase& eval_db,
                  const toolagent::RetrievalSystem* rs = nullptr);

EvalReport eval_recall(const neuralcore::ModelState& m,
                       const factstore::FactDatabase& db, Regime regime,
                       const toolagent::RetrievalSystem* rs = nullptr);

// Mean over attributes of the most frequent value's frequency in db.
double constant_baseline(const factstore::FactDatabase& db);

OodReport eval_ood(const neuralcore::ModelState& m,
                   const factstore::FactDatabase& fresh_db,
                   const toolagent::RetrievalSystem& rs_fresh);

// Training data plus the database/retrieval system recall is measured on.
// All randomness flows from (seed, n_facts, alpha), so every dim in a sweep
// trains against the same database. in_tool mixes k_databases distinct
// value assignments over one name pool; eval_db/rs are the first of them.
struct DataBundle {
    std::vector<factstore::Dialog> dialogs;
    factstore::FactDatabase eval_db;
    std::optional<toolagent::RetrievalSystem> rs;
};
DataBundle make_experiment_data(Regime regime, int n_facts,
                                std::uint64_t seed, double alpha = 0.0,
                                int k_databases = 8);

// Same names as the training data for (n_facts, seed) with freshly seeded
// values; fresh_names additionally resamples the name pool.
factstore::FactDatabase make_ood_database(int n_facts, std::uint64_t seed,
                                          bool fresh_names = false);

struct SweepConfig {
    Regime regime = Regime::in_weight;
    std::vector<int> sizes;  // fact counts (4 x name count)
    std::vector<int> dims = {4, 8, 12, 16, 24, 32, 48, 64};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    double threshold = 0.95;
    // Per-size early-stop override (e.g. train 512-fact cells to 0.99 so
    // the recall-vs-params comparison has data at the higher threshold).
    std::map<int, double> stop_override;
    double alpha = 0.0;
    int max_steps = 20000;
    int batch_size = 32;
    int k_databases = 8;  // in_tool: distinct value assignments mixed in
    int eval_every = 250;
    std::string cache_dir;  // per-cell JSON result cache; empty = off
    bool verbose = false;
};

struct SweepRecord {
    Regime regime = Regime::in_weight;
    double alpha = 0.0;
    int n_facts = 0;
    int dim = 0;
    long param_count = 0;
    double recall = 0.0;
    std::uint64_t seed = 0;
    int steps_used = 0;
    std::map<double, int> threshold_steps;

    bool reached(double threshold) const {
        return threshold_steps.count(threshold) > 0;
    }
};

struct SizeMinimum {
    int n_facts = 0;
    double threshold = 0.0;
    std::vector<double> per_seed_min;  // param counts; -1 = saturated at max
    double mean = 0.0;
    double stddev = 0.0;
    bool saturated = false;  // some seed never reached the threshold
};

std::vector<SweepRecord> min_param_sweep(const SweepConfig& cfg);

std::vector<SizeMinimum> summarize_minima(
    const std::vector<SweepRecord>& records, const std::vector<int>& sizes,
    const std::vector<std::uint64_t>& seeds, double threshold);

CapacityBound theoretical_lower_bound(
    int n_names, const std::vector<std::size_t>& pool_sizes, int bits);
CapacityBound theoretical_lower_bound(const factstore::FactDatabase& db,
                                      const factstore::ValuePools& pools,
                                      int bits);

// min_param_sweep per alpha over alpha-correlated in-weight databases.
std::vector<SweepRecord> correlation_experiment(
    const SweepConfig& base, const std::vector<double>& alphas);

// ---- CSV emission (one file per figure shape) ----
void write_fig2_csv(const std::vector<SizeMinimum>& in_weight,
                    const std::vector<SizeMinimum>& in_tool,
                    const std::string& path);
struct OodRow {
    int n_facts = 0;
    std::uint64_t seed = 0;
    double ood_accuracy = 0.0;
    double baseline = 0.0;
};
void write_fig3_csv(const std::vector<OodRow>& rows, const std::string& path);
struct AlphaMinimum {
    double alpha = 0.0;
    SizeMinimum minimum;
};
void write_fig4_csv(const std::vector<AlphaMinimum>& rows,
                    const std::string& path);
struct ThresholdMinimum {
    double threshold = 0.0;
    SizeMinimum minimum;
};
void write_fig8_csv(const std::vector<ThresholdMinimum>& rows,
                    const std::string& path);

// Serialization of sweep records (cell cache and results files).
std::string sweep_record_to_json(const SweepRecord& r);
SweepRecord sweep_record_from_json(const std::string& json);

}  // namespace itl::lab
