// AdamW with decoupled weight decay and the warmup + cosine schedule.
#pragma once

#include <cstdint>
#include <vector>

#include "itl/model.hpp"

namespace itl::neuralcore {

struct TrainConfig {
    int batch_size = 128;
    int max_steps = 100000;
    double lr_max = 1e-3;
    int warmup = 50;
    double final_lr_ratio = 0.0;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
};

// Linear ramp 0 -> lr_max over warmup steps, then cosine decay down to
// final_lr_ratio * lr_max at max_steps.
double lr_at(int step, const TrainConfig& cfg);

class AdamW {
public:
    explicit AdamW(ModelState& m, const TrainConfig& cfg);

    // Applies one update from the gradients currently stored in the model's
    // tensors. `step` is 1-based (bias correction).
    void step(ModelState& m, int step, double lr);

private:
    TrainConfig cfg_;
    struct Slot {
        std::vector<double> m, v;
        bool decay = false;  // weight decay applies to matrices only
    };
    std::vector<Slot> slots_;
};

}  // namespace itl::neuralcore
