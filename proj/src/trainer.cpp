#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <span>

#include "itl/generate.hpp"
#include "itl/lab.hpp"
#include "itl/rng.hpp"
#include "itl/textcodec.hpp"

namespace itl::lab {

using factstore::Attribute;
using factstore::Dialog;
using factstore::FactDatabase;
using neuralcore::Batch;
using neuralcore::ForwardCache;
using neuralcore::lr_at;
using neuralcore::ModelState;
using neuralcore::Tensor;
namespace tc = textcodec;

namespace {

Batch make_batch(const std::vector<tc::EncodedDialog>& enc,
                 std::span<const std::size_t> picks) {
    Batch b;
    b.B = static_cast<int>(picks.size());
    std::size_t maxlen = 0;
    for (std::size_t i : picks) maxlen = std::max(maxlen, enc[i].tokens.size());
    b.T = static_cast<int>(maxlen) - 1;
    b.tokens.assign(static_cast<std::size_t>(b.B) * b.T, tc::kEod);
    b.targets.assign(static_cast<std::size_t>(b.B) * b.T, 0);
    b.target_mask.assign(static_cast<std::size_t>(b.B) * b.T, 0);
    for (int r = 0; r < b.B; ++r) {
        const auto& e = enc[picks[r]];
        const int n = static_cast<int>(e.tokens.size());
        for (int t = 0; t + 1 < n; ++t) {
            b.tokens[static_cast<std::size_t>(r) * b.T + t] = e.tokens[t];
            b.targets[static_cast<std::size_t>(r) * b.T + t] = e.tokens[t + 1];
            b.target_mask[static_cast<std::size_t>(r) * b.T + t] =
                e.loss_mask[t + 1];
        }
    }
    return b;
}

}  // namespace

EvalReport eval_recall(const ModelState& m, const FactDatabase& db,
                       Regime regime, const toolagent::RetrievalSystem* rs) {
    if (regime == Regime::in_tool && rs == nullptr)
        throw TrainError("in_tool evaluation requires a retrieval system");
    EvalReport rep;
    rep.n_queries = db.n_facts();
    int hits = 0;
    for (int i = 0; i < db.n_facts(); ++i) {
        auto f = db.fact(i);
        const std::string q = factstore::render_question(f.name, f.attr);
        std::string answer;
        if (regime == Regime::in_weight) {
            std::vector<int> prefix;
            prefix.push_back(tc::kUser);
            for (int t : tc::encode_text(q)) prefix.push_back(t);
            prefix.push_back(tc::kAssistant);
            const std::array<int, 1> stops = {tc::kEod};
            auto g = neuralcore::generate(m, prefix, stops, 96);
            std::string text;
            for (int t : g.tokens)
                if (t >= 0 && t <= 255) text.push_back(static_cast<char>(t));
            answer = toolagent::extract_answer_value(text);
        } else {
            auto tr = toolagent::run_dialog(m, q, *rs, 240);
            answer = tr.final_answer;
            if (tr.tool_called) ++rep.n_tool_calls;
            for (const auto& turn : tr.dialog.turns)
                if (turn.source == factstore::TurnSource::database &&
                    turn.content == toolagent::kNotFound)
                    ++rep.n_tool_errors;
        }
        if (answer == f.value) ++hits;
    }
    rep.recall_accuracy =
        rep.n_queries == 0 ? 0.0
                           : static_cast<double>(hits) / rep.n_queries;
    return rep;
}

double constant_baseline(const FactDatabase& db) {
    double sum = 0.0;
    const int n = static_cast<int>(db.names.size());
    for (Attribute a : factstore::kAllAttributes) {
        std::map<std::string, int> freq;
        int best = 0;
        for (int i = 0; i < n; ++i) best = std::max(best, ++freq[db.value_of(i, a)]);
        sum += n == 0 ? 0.0 : static_cast<double>(best) / n;
    }
    return sum / factstore::kNumAttributes;
}

OodReport eval_ood(const ModelState& m, const FactDatabase& fresh_db,
                   const toolagent::RetrievalSystem& rs_fresh) {
    OodReport rep;
    rep.ood_accuracy =
        eval_recall(m, fresh_db, Regime::in_tool, &rs_fresh).recall_accuracy;
    rep.constant_baseline = constant_baseline(fresh_db);
    return rep;
}

TrainResult train(const TrainOptions& opt, const std::vector<Dialog>& data,
                  const FactDatabase& eval_db,
                  const toolagent::RetrievalSystem* rs) {
    if (data.empty()) throw TrainError("empty training dataset");
    opt.model.validate();

    std::vector<tc::EncodedDialog> enc;
    enc.reserve(data.size());
    for (const auto& d : data) enc.push_back(tc::encode_dialog(d));

    TrainResult res;
    res.model = ModelState::init(opt.model, opt.optim.seed);
    neuralcore::AdamW adam(res.model, opt.optim);
    SplitMix64 rng(derive_seed(opt.optim.seed, "batch-sampler"));

    const int B = opt.optim.batch_size;
    std::vector<std::size_t> picks(B);
    double last_loss = 0.0;
    double last_recall = -1.0;
    int step = 0;
    int last_eval_step = -1;
    bool stop = false;

    auto evaluate = [&](int at_step) {
        last_eval_step = at_step;
        last_recall =
            eval_recall(res.model, eval_db, opt.regime, rs).recall_accuracy;
        res.log.push_back({at_step, last_loss, lr_at(at_step, opt.optim),
                           last_recall});
        if (std::getenv("ITL_PROGRESS"))
            std::fprintf(stderr, "[train] step=%d loss=%.4f recall=%.4f\n",
                         at_step, last_loss, last_recall);
        for (double t : opt.record_thresholds)
            if (last_recall >= t && !res.threshold_steps.count(t))
                res.threshold_steps[t] = at_step;
        if (opt.stop_threshold >= 0 && last_recall >= opt.stop_threshold)
            stop = true;
    };

    for (step = 1; step <= opt.optim.max_steps && !stop; ++step) {
        for (int i = 0; i < B; ++i) picks[i] = rng.below(enc.size());
        Batch b = make_batch(enc, picks);
        ForwardCache cache;
        Tensor logits =
            neuralcore::forward(res.model, b.tokens, b.B, b.T, &cache);
        Tensor dlogits;
        last_loss = neuralcore::masked_cross_entropy(logits, b.targets,
                                                     b.target_mask, &dlogits);
        if (!std::isfinite(last_loss))
            throw TrainError("training diverged: non-finite loss at step " +
                             std::to_string(step));
        res.model.zero_grads();
        neuralcore::backward(res.model, cache, dlogits);
        const double lr = lr_at(step, opt.optim);
        adam.step(res.model, step, lr);

        if (opt.log_every > 0 && step % opt.log_every == 0)
            res.log.push_back({step, last_loss, lr, -1.0});
        if (opt.eval_every > 0 && step % opt.eval_every == 0) evaluate(step);
    }
    res.steps_used = step - 1;
    if (last_eval_step != res.steps_used) evaluate(res.steps_used);
    res.final_loss = last_loss;
    res.final_recall = last_recall;
    return res;
}

}  // namespace itl::lab
