#include "itl/optim.hpp"

#include <cmath>

namespace itl::neuralcore {

double lr_at(int step, const TrainConfig& cfg) {
    if (step <= cfg.warmup)
        return cfg.lr_max * static_cast<double>(step) / cfg.warmup;
    double progress = static_cast<double>(step - cfg.warmup) /
                      static_cast<double>(cfg.max_steps - cfg.warmup);
    double floor = cfg.lr_max * cfg.final_lr_ratio;
    return floor + (cfg.lr_max - floor) * 0.5 *
                       (1.0 + std::cos(3.141592653589793 * progress));
}

AdamW::AdamW(ModelState& m, const TrainConfig& cfg) : cfg_(cfg) {
    for (auto& [name, t] : m.named_parameters()) {
        Slot s;
        s.m.assign(t->data.size(), 0.0);
        s.v.assign(t->data.size(), 0.0);
        s.decay = t->shape.size() >= 2;
        slots_.push_back(std::move(s));
    }
}

void AdamW::step(ModelState& m, int step, double lr) {
    double bc1 = 1.0 - std::pow(cfg_.beta1, step);
    double bc2 = 1.0 - std::pow(cfg_.beta2, step);
    auto params = m.named_parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p].second;
        Slot& s = slots_[p];
        double wd = s.decay ? cfg_.weight_decay : 0.0;
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            double g = t.grad[i];
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
            double mhat = s.m[i] / bc1;
            double vhat = s.v[i] / bc2;
            t.data[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.adam_eps) +
                               wd * t.data[i]);
        }
    }
}

}  // namespace itl::neuralcore
