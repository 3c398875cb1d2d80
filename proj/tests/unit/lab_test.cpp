#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "itl/lab.hpp"

using namespace itl::lab;
namespace factstore = itl::factstore;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

SweepRecord make_record(Regime regime, int n_facts, int dim, long params,
                        std::uint64_t seed, bool reached, double thr) {
    SweepRecord r;
    r.regime = regime;
    r.n_facts = n_facts;
    r.dim = dim;
    r.param_count = params;
    r.seed = seed;
    r.recall = reached ? thr : thr / 2;
    r.steps_used = 1000;
    if (reached) r.threshold_steps[thr] = 900;
    return r;
}

}  // namespace

TEST_SUITE("lab") {

TEST_CASE("capacity lower bound reproduces the worked value") {
    std::vector<std::size_t> pools = {7, 16800, 213, 100};
    CapacityBound b = theoretical_lower_bound(1, pools, 16);
    // (1/16) * (log2 7 + log2 16800 + log2 213 + log2 100)
    CHECK(b.bound_params == doctest::Approx(1.951381).epsilon(1e-6));
    CHECK(b.n_names == 1);
    CHECK(b.bits_per_param == 16);
    // bound = c * n_facts with n_facts = 4 * n_names.
    CHECK(b.c * 4.0 == doctest::Approx(b.bound_params).epsilon(1e-12));

    // Inverse proportionality in bits, linearity in names.
    CapacityBound b8 = theoretical_lower_bound(1, pools, 8);
    CHECK(b8.bound_params == doctest::Approx(2 * b.bound_params).epsilon(1e-12));
    CapacityBound b100 = theoretical_lower_bound(100, pools, 16);
    CHECK(b100.bound_params ==
          doctest::Approx(100 * b.bound_params).epsilon(1e-9));

    // The database overload agrees with the explicit pool sizes.
    auto vp = factstore::build_value_pools(1);
    factstore::GenConfig cfg;
    cfg.n_names = 25;
    cfg.seed = 1;
    auto db = factstore::build_database(cfg, vp);
    CapacityBound bd = theoretical_lower_bound(db, vp, 16);
    CHECK(bd.bound_params == doctest::Approx(25 * b.bound_params).epsilon(1e-9));
}

TEST_CASE("constant baseline equals the brute-force mode frequency") {
    auto vp = factstore::build_value_pools(31);
    factstore::GenConfig cfg;
    cfg.n_names = 50;
    cfg.seed = 31;
    auto db = factstore::build_database(cfg, vp);

    double acc = 0;
    for (factstore::Attribute a : factstore::kAllAttributes) {
        std::map<std::string, int> freq;
        int best = 0;
        for (int i = 0; i < 50; ++i) best = std::max(best, ++freq[db.value_of(i, a)]);
        acc += static_cast<double>(best) / 50.0;
    }
    CHECK(constant_baseline(db) == doctest::Approx(acc / 4.0).epsilon(1e-12));
}

TEST_CASE("experiment data is deterministic and regime-shaped") {
    DataBundle iw = make_experiment_data(Regime::in_weight, 64, 5);
    CHECK(iw.dialogs.size() == 64);
    CHECK(iw.eval_db.n_facts() == 64);
    CHECK(!iw.rs.has_value());
    DataBundle iw2 = make_experiment_data(Regime::in_weight, 64, 5);
    CHECK(iw2.dialogs == iw.dialogs);

    DataBundle it = make_experiment_data(Regime::in_tool, 64, 5, 0.0, 8);
    CHECK(it.dialogs.size() == 64 * 8);
    CHECK(it.eval_db.n_facts() == 64);
    REQUIRE(it.rs.has_value());
    // The retrieval system answers the eval database's facts.
    for (int i = 0; i < it.eval_db.n_facts(); ++i) {
        auto f = it.eval_db.fact(i);
        CHECK(it.rs->execute({f.attr, f.name.full()}) == f.value);
    }
    // Same name pool across regimes and mixed databases.
    CHECK(it.eval_db.names == iw.eval_db.names);
    // In-tool dialogs span conflicting value assignments: more distinct
    // (question, answer) pairs than facts.
    std::set<std::string> qa;
    for (const auto& d : it.dialogs)
        qa.insert(d.turns.front().content + "\x1f" + d.answer);
    CHECK(qa.size() > 64);
}

TEST_CASE("OOD databases share names but not values") {
    DataBundle base = make_experiment_data(Regime::in_weight, 64, 9);
    factstore::FactDatabase ood = make_ood_database(64, 9);
    CHECK(ood.names == base.eval_db.names);
    CHECK(ood.values != base.eval_db.values);
    factstore::FactDatabase ood2 = make_ood_database(64, 9);
    CHECK(ood2.values == ood.values);

    factstore::FactDatabase fresh = make_ood_database(64, 9, true);
    CHECK(fresh.names != base.eval_db.names);
}

TEST_CASE("sweep records round-trip through JSON") {
    SweepRecord r;
    r.regime = Regime::in_tool;
    r.alpha = 0.5;
    r.n_facts = 512;
    r.dim = 24;
    r.param_count = 12345;
    r.recall = 0.971875;
    r.seed = 3;
    r.steps_used = 7250;
    r.threshold_steps[0.80] = 3000;
    r.threshold_steps[0.95] = 7000;

    SweepRecord back = sweep_record_from_json(sweep_record_to_json(r));
    CHECK(back.regime == r.regime);
    CHECK(back.alpha == r.alpha);
    CHECK(back.n_facts == r.n_facts);
    CHECK(back.dim == r.dim);
    CHECK(back.param_count == r.param_count);
    CHECK(back.recall == doctest::Approx(r.recall).epsilon(1e-12));
    CHECK(back.seed == r.seed);
    CHECK(back.steps_used == r.steps_used);
    CHECK(back.threshold_steps == r.threshold_steps);
    CHECK(back.reached(0.95));
    CHECK(!back.reached(0.99));
}

TEST_CASE("summarize_minima picks the smallest reaching dim per seed") {
    std::vector<SweepRecord> recs;
    // Size 64: seed 1 reaches at dim 8 (params 200), seed 2 at dim 16
    // (params 800); seed 3 never reaches.
    recs.push_back(make_record(Regime::in_weight, 64, 4, 50, 1, false, 0.95));
    recs.push_back(make_record(Regime::in_weight, 64, 8, 200, 1, true, 0.95));
    recs.push_back(make_record(Regime::in_weight, 64, 16, 800, 1, true, 0.95));
    recs.push_back(make_record(Regime::in_weight, 64, 16, 800, 2, true, 0.95));
    recs.push_back(make_record(Regime::in_weight, 64, 16, 800, 3, false, 0.95));

    auto minima = summarize_minima(recs, {64}, {1, 2, 3}, 0.95);
    REQUIRE(minima.size() == 1);
    const SizeMinimum& m = minima[0];
    CHECK(m.n_facts == 64);
    CHECK(m.saturated);
    REQUIRE(m.per_seed_min.size() == 3);
    CHECK(m.per_seed_min[0] == 200);
    CHECK(m.per_seed_min[1] == 800);
    CHECK(m.per_seed_min[2] == -1);
    // Mean and sample stddev over the seeds that did reach the threshold.
    CHECK(m.mean == doctest::Approx(500.0));
    CHECK(m.stddev == doctest::Approx(std::sqrt(180000.0)));

    // Unsaturated case.
    auto ok = summarize_minima({recs[1], recs[3],
                                make_record(Regime::in_weight, 64, 8, 200, 3,
                                            true, 0.95)},
                               {64}, {1, 2, 3}, 0.95);
    CHECK(!ok[0].saturated);
    CHECK(ok[0].mean == doctest::Approx((200 + 800 + 200) / 3.0));
}

TEST_CASE("figure CSVs have stable headers and sorted rows") {
    SizeMinimum a;
    a.n_facts = 64;
    a.threshold = 0.95;
    a.mean = 500;
    a.stddev = 10;
    SizeMinimum b = a;
    b.n_facts = 1024;
    b.mean = 9000;

    std::string p2 = "/tmp/itl_test_fig2.csv";
    write_fig2_csv({b, a}, {a}, p2);
    std::string fig2 = slurp(p2);
    std::remove(p2.c_str());
    CHECK(fig2.find("n_facts,regime,min_params_mean,min_params_std,saturated") ==
          0);
    CHECK(fig2.find("64,in_weight") != std::string::npos);
    CHECK(fig2.find("1024,in_weight") != std::string::npos);
    CHECK(fig2.find("64,in_tool") != std::string::npos);
    // Sorted ascending within a regime.
    CHECK(fig2.find("64,in_weight") < fig2.find("1024,in_weight"));

    std::string p3 = "/tmp/itl_test_fig3.csv";
    write_fig3_csv({{64, 1, 0.25, 0.3}, {4096, 1, 0.9, 0.3}}, p3);
    std::string fig3 = slurp(p3);
    std::remove(p3.c_str());
    CHECK(fig3.find("n_facts,seed,ood_accuracy,constant_baseline") == 0);
    CHECK(fig3.find("4096,1,0.9") != std::string::npos);

    std::string p4 = "/tmp/itl_test_fig4.csv";
    write_fig4_csv({{0.0, a}, {1.0, b}}, p4);
    std::string fig4 = slurp(p4);
    std::remove(p4.c_str());
    CHECK(fig4.find("alpha,") == 0);

    std::string p8 = "/tmp/itl_test_fig8.csv";
    write_fig8_csv({{0.80, a}, {0.99, b}}, p8);
    std::string fig8 = slurp(p8);
    std::remove(p8.c_str());
    CHECK(fig8.find("threshold,") == 0);
}

TEST_CASE("training refuses an empty dataset") {
    TrainOptions opt;
    opt.model.dim = 4;
    opt.optim.max_steps = 10;
    DataBundle d = make_experiment_data(Regime::in_weight, 16, 1);
    CHECK_THROWS_AS(train(opt, {}, d.eval_db), TrainError);
}

TEST_CASE("training is deterministic for a fixed seed") {
    TrainOptions opt;
    opt.model.dim = 4;
    opt.optim.batch_size = 8;
    opt.optim.max_steps = 30;
    opt.optim.seed = 7;
    opt.eval_every = 1000;  // skip mid-run recall; final eval only
    DataBundle d = make_experiment_data(Regime::in_weight, 16, 7);

    TrainResult a = train(opt, d.dialogs, d.eval_db);
    TrainResult b = train(opt, d.dialogs, d.eval_db);
    CHECK(a.steps_used == 30);
    CHECK(a.final_loss == b.final_loss);
    REQUIRE(a.log.size() == b.log.size());
    CHECK(a.log.back().loss == b.log.back().loss);
    CHECK(std::isfinite(a.final_loss));

    // A different optimizer seed samples different batches.
    opt.optim.seed = 8;
    TrainResult c = train(opt, d.dialogs, d.eval_db);
    CHECK(c.final_loss != a.final_loss);
}

}  // TEST_SUITE
