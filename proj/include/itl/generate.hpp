// KV-cached greedy decoding. An InferenceSession owns one growing cache;
// generate() is the convenience wrapper used everywhere.
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "itl/model.hpp"

namespace itl::neuralcore {

class InferenceSession {
public:
    explicit InferenceSession(const ModelState& m);

    // Appends one token and returns the logits row for predicting the next
    // token. The returned span is valid until the next call.
    std::span<const double> step(int token);

    std::span<const double> prefill(std::span<const int> tokens);

    int length() const { return len_; }
    int context() const { return model_->config.context; }

private:
    const ModelState* model_;
    int len_ = 0;
    struct LayerKV {
        std::vector<double> k, v;  // [context, dim]
    };
    std::vector<LayerKV> kv_;
    std::vector<double> logits_;
    // scratch
    std::vector<double> x_, norm_, q_, att_, probs_, gate_, up_, act_, ffn_;
};

struct GenResult {
    std::vector<int> tokens;  // newly generated, including the stop id
    bool truncated = false;   // hit context or max_new before a stop id
};

GenResult generate(const ModelState& m, std::span<const int> prefix,
                   std::span<const int> stop_ids, int max_new);

// Next-token policy abstraction so orchestration and evaluation can run
// against scripted policies in tests as well as real models.
using NextTokenFn = std::function<int(std::span<const int> tokens)>;

}  // namespace itl::neuralcore
