#include "itl/generate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace itl::neuralcore {

namespace {
inline void rope_rotate_one(double* row, int n_heads, int head_dim, int pos) {
    for (int h = 0; h < n_heads; ++h) {
        double* hp = row + h * head_dim;
        for (int i = 0; i < head_dim / 2; ++i) {
            double freq = std::pow(kRopeBase, -2.0 * i / head_dim);
            double ang = pos * freq;
            double c = std::cos(ang), s = std::sin(ang);
            double x0 = hp[2 * i], x1 = hp[2 * i + 1];
            hp[2 * i] = x0 * c - x1 * s;
            hp[2 * i + 1] = x0 * s + x1 * c;
        }
    }
}

inline void rmsnorm_one(const double* x, const double* gain, double* y,
                        int dim) {
    double ms = 0;
    for (int i = 0; i < dim; ++i) ms += x[i] * x[i];
    double inv = 1.0 / std::sqrt(ms / dim + kRmsEps);
    for (int i = 0; i < dim; ++i) y[i] = gain[i] * x[i] * inv;
}
}  // namespace

InferenceSession::InferenceSession(const ModelState& m) : model_(&m) {
    const auto& cfg = m.config;
    kv_.resize(cfg.n_layers);
    for (auto& l : kv_) {
        l.k.assign(static_cast<std::size_t>(cfg.context) * cfg.dim, 0.0);
        l.v.assign(l.k.size(), 0.0);
    }
    int d = cfg.dim, f = cfg.ffn_hidden();
    x_.resize(d);
    norm_.resize(d);
    q_.resize(d);
    att_.resize(d);
    probs_.resize(cfg.context);
    gate_.resize(f);
    up_.resize(f);
    act_.resize(f);
    ffn_.resize(d);
    logits_.resize(cfg.vocab);
}

std::span<const double> InferenceSession::step(int token) {
    const ModelConfig& cfg = model_->config;
    if (len_ >= cfg.context)
        throw LengthError("KV cache full: context " +
                          std::to_string(cfg.context));
    const int d = cfg.dim, f = cfg.ffn_hidden();
    const int H = cfg.n_heads, hd = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const int pos = len_;

    std::memcpy(x_.data(), &model_->tok_emb.data[static_cast<std::size_t>(token) * d],
                sizeof(double) * d);

    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& ly = model_->layers[l];
        auto& kv = kv_[l];
        rmsnorm_one(x_.data(), ly.attn_norm.data.data(), norm_.data(), d);
        double* krow = &kv.k[static_cast<std::size_t>(pos) * d];
        double* vrow = &kv.v[static_cast<std::size_t>(pos) * d];
        linear(norm_.data(), ly.wq.data.data(), q_.data(), 1, d, d);
        linear(norm_.data(), ly.wk.data.data(), krow, 1, d, d);
        linear(norm_.data(), ly.wv.data.data(), vrow, 1, d, d);
        rope_rotate_one(q_.data(), H, hd, pos);
        rope_rotate_one(krow, H, hd, pos);

        for (int h = 0; h < H; ++h) {
            const double* qh = q_.data() + h * hd;
            double mx = -1e300;
            for (int j = 0; j <= pos; ++j) {
                const double* kj = &kv.k[static_cast<std::size_t>(j) * d + h * hd];
                double s = 0;
                for (int i = 0; i < hd; ++i) s += qh[i] * kj[i];
                probs_[j] = s * scale;
                mx = std::max(mx, probs_[j]);
            }
            double sum = 0;
            for (int j = 0; j <= pos; ++j) {
                probs_[j] = std::exp(probs_[j] - mx);
                sum += probs_[j];
            }
            double inv = 1.0 / sum;
            double* oh = att_.data() + h * hd;
            std::fill(oh, oh + hd, 0.0);
            for (int j = 0; j <= pos; ++j) {
                double p = probs_[j] * inv;
                const double* vj = &kv.v[static_cast<std::size_t>(j) * d + h * hd];
                for (int i = 0; i < hd; ++i) oh[i] += p * vj[i];
            }
        }
        linear(att_.data(), ly.wo.data.data(), ffn_.data(), 1, d, d);
        for (int i = 0; i < d; ++i) x_[i] += ffn_[i];

        rmsnorm_one(x_.data(), ly.ffn_norm.data.data(), norm_.data(), d);
        linear(norm_.data(), ly.w_gate.data.data(), gate_.data(), 1, f, d);
        linear(norm_.data(), ly.w_up.data.data(), up_.data(), 1, f, d);
        for (int i = 0; i < f; ++i) {
            double s = 1.0 / (1.0 + std::exp(-gate_[i]));
            act_[i] = gate_[i] * s * up_[i];
        }
        linear(act_.data(), ly.w_down.data.data(), ffn_.data(), 1, d, f);
        for (int i = 0; i < d; ++i) x_[i] += ffn_[i];
    }

    rmsnorm_one(x_.data(), model_->final_norm.data.data(), norm_.data(), d);
    const Tensor& head =
        cfg.tie_embeddings ? model_->tok_emb : model_->out_head;
    linear(norm_.data(), head.data.data(), logits_.data(), 1, cfg.vocab, d);
    ++len_;
    return logits_;
}

std::span<const double> InferenceSession::prefill(std::span<const int> tokens) {
    std::span<const double> out;
    for (int t : tokens) out = step(t);
    return out;
}

GenResult generate(const ModelState& m, std::span<const int> prefix,
                   std::span<const int> stop_ids, int max_new) {
    GenResult r;
    if (prefix.empty()) throw LengthError("generate: empty prefix");
    if (static_cast<int>(prefix.size()) >= m.config.context)
        throw LengthError("generate: prefix fills the context");
    InferenceSession s(m);
    std::span<const double> logits = s.prefill(prefix);
    for (int n = 0; n < max_new; ++n) {
        int next = static_cast<int>(
            std::max_element(logits.begin(), logits.end()) - logits.begin());
        r.tokens.push_back(next);
        if (std::find(stop_ids.begin(), stop_ids.end(), next) !=
            stop_ids.end())
            return r;
        if (s.length() >= m.config.context) {
            r.truncated = true;
            return r;
        }
        logits = s.step(next);
    }
    r.truncated = true;
    return r;
}

}  // namespace itl::neuralcore
