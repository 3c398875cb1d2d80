#include "itl/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "itl/rng.hpp"

namespace itl::neuralcore {

void ModelConfig::validate() const {
    if (dim < 2) throw ConfigError("dim must be >= 2");
    if (n_heads < 1 || n_layers < 1)
        throw ConfigError("n_heads and n_layers must be >= 1");
    if (dim % n_heads != 0) throw ConfigError("dim must divide by n_heads");
    if ((dim / n_heads) % 2 != 0)
        throw ConfigError("head_dim must be even for RoPE");
    if (vocab < 1 || context < 1) throw ConfigError("bad vocab/context");
}

long param_count(const ModelConfig& cfg) {
    long d = cfg.dim;
    long f = cfg.ffn_hidden();
    long per_layer = 4 * d * d + 2 * f * d + d * f + 2 * d;
    long total = static_cast<long>(cfg.vocab) * d + cfg.n_layers * per_layer + d;
    if (!cfg.tie_embeddings) total += static_cast<long>(cfg.vocab) * d;
    return total;
}

namespace {

Tensor randn(std::vector<int> shape, SplitMix64& g, double std_) {
    Tensor t(std::move(shape));
    for (double& x : t.data) x = g.normal(0.0, std_);
    return t;
}

Tensor ones(int n) {
    Tensor t({n});
    std::fill(t.data.begin(), t.data.end(), 1.0);
    return t;
}

inline void rope_rotate(double* row, int n_heads, int head_dim, int pos,
                        int direction) {
    for (int h = 0; h < n_heads; ++h) {
        double* hp = row + h * head_dim;
        for (int i = 0; i < head_dim / 2; ++i) {
            double freq = std::pow(kRopeBase, -2.0 * i / head_dim);
            double ang = direction * pos * freq;
            double c = std::cos(ang), s = std::sin(ang);
            double x0 = hp[2 * i], x1 = hp[2 * i + 1];
            hp[2 * i] = x0 * c - x1 * s;
            hp[2 * i + 1] = x0 * s + x1 * c;
        }
    }
}

inline void rmsnorm_rows(const double* x, const double* gain, double* y,
                         double* inv_rms, int rows, int dim) {
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + static_cast<std::size_t>(r) * dim;
        double* yr = y + static_cast<std::size_t>(r) * dim;
        double ms = 0;
        for (int i = 0; i < dim; ++i) ms += xr[i] * xr[i];
        double inv = 1.0 / std::sqrt(ms / dim + kRmsEps);
        inv_rms[r] = inv;
        for (int i = 0; i < dim; ++i) yr[i] = gain[i] * xr[i] * inv;
    }
}

// dx/dgain for y = gain * x * inv_rms(x); accumulates into dx and dgain.
inline void rmsnorm_backward_rows(const double* x, const double* gain,
                                  const double* inv_rms, const double* dy,
                                  double* dx, double* dgain, int rows,
                                  int dim) {
    for (int r = 0; r < rows; ++r) {
        std::size_t off = static_cast<std::size_t>(r) * dim;
        const double* xr = x + off;
        const double* dyr = dy + off;
        double* dxr = dx + off;
        double inv = inv_rms[r];
        double dot = 0;
        for (int i = 0; i < dim; ++i) dot += gain[i] * dyr[i] * xr[i];
        double coef = dot * inv * inv * inv / dim;
        for (int i = 0; i < dim; ++i) {
            dxr[i] += gain[i] * dyr[i] * inv - xr[i] * coef;
            dgain[i] += dyr[i] * xr[i] * inv;
        }
    }
}

}  // namespace

ModelState ModelState::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelState m;
    m.config = cfg;
    SplitMix64 g(derive_seed(seed, 0x4d4f44));  // "MOD"
    int d = cfg.dim, f = cfg.ffn_hidden();
    m.tok_emb = randn({cfg.vocab, d}, g, kInitStd);
    for (int l = 0; l < cfg.n_layers; ++l) {
        Layer lay;
        lay.attn_norm = ones(d);
        lay.wq = randn({d, d}, g, kInitStd);
        lay.wk = randn({d, d}, g, kInitStd);
        lay.wv = randn({d, d}, g, kInitStd);
        lay.wo = randn({d, d}, g, kInitStd);
        lay.ffn_norm = ones(d);
        lay.w_gate = randn({f, d}, g, kInitStd);
        lay.w_up = randn({f, d}, g, kInitStd);
        lay.w_down = randn({d, f}, g, kInitStd);
        m.layers.push_back(std::move(lay));
    }
    m.final_norm = ones(d);
    if (!cfg.tie_embeddings) m.out_head = randn({cfg.vocab, d}, g, kInitStd);
    return m;
}

std::vector<std::pair<std::string, Tensor*>> ModelState::named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("tok_emb", &tok_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        std::string p = "layers." + std::to_string(l) + ".";
        Layer& y = layers[l];
        out.emplace_back(p + "attn_norm", &y.attn_norm);
        out.emplace_back(p + "wq", &y.wq);
        out.emplace_back(p + "wk", &y.wk);
        out.emplace_back(p + "wv", &y.wv);
        out.emplace_back(p + "wo", &y.wo);
        out.emplace_back(p + "ffn_norm", &y.ffn_norm);
        out.emplace_back(p + "w_gate", &y.w_gate);
        out.emplace_back(p + "w_up", &y.w_up);
        out.emplace_back(p + "w_down", &y.w_down);
    }
    out.emplace_back("final_norm", &final_norm);
    if (!config.tie_embeddings) out.emplace_back("out_head", &out_head);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelState::named_parameters()
    const {
    auto mut = const_cast<ModelState*>(this)->named_parameters();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [n, t] : mut) out.emplace_back(n, t);
    return out;
}

void ModelState::ensure_grads() {
    for (auto& [n, t] : named_parameters()) t->ensure_grad();
}

void ModelState::zero_grads() {
    for (auto& [n, t] : named_parameters()) t->zero_grad();
}

Tensor forward(const ModelState& m, std::span<const int> tokens, int B, int T,
               ForwardCache* cache) {
    const ModelConfig& cfg = m.config;
    if (T > cfg.context)
        throw LengthError("sequence length " + std::to_string(T) +
                          " exceeds context " + std::to_string(cfg.context));
    if (static_cast<int>(tokens.size()) != B * T)
        throw LengthError("token buffer does not match B*T");
    const int N = B * T, d = cfg.dim, f = cfg.ffn_hidden();
    const int H = cfg.n_heads, hd = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.B = B;
    c.T = T;
    c.tokens.assign(tokens.begin(), tokens.end());
    c.layers.assign(cfg.n_layers, {});

    std::vector<double> x(static_cast<std::size_t>(N) * d);
    for (int i = 0; i < N; ++i) {
        int tok = tokens[i];
        if (tok < 0 || tok >= cfg.vocab)
            throw LengthError("token id out of vocabulary: " +
                              std::to_string(tok));
        std::memcpy(&x[static_cast<std::size_t>(i) * d],
                    &m.tok_emb.data[static_cast<std::size_t>(tok) * d],
                    sizeof(double) * d);
    }

    for (int l = 0; l < cfg.n_layers; ++l) {
        auto& lc = c.layers[l];
        const auto& ly = m.layers[l];
        lc.x_in = x;
        lc.ln1.resize(x.size());
        lc.r1.resize(N);
        rmsnorm_rows(x.data(), ly.attn_norm.data.data(), lc.ln1.data(),
                     lc.r1.data(), N, d);

        lc.q.resize(x.size());
        lc.k.resize(x.size());
        lc.v.resize(x.size());
        linear(lc.ln1.data(), ly.wq.data.data(), lc.q.data(), N, d, d);
        linear(lc.ln1.data(), ly.wk.data.data(), lc.k.data(), N, d, d);
        linear(lc.ln1.data(), ly.wv.data.data(), lc.v.data(), N, d, d);
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t) {
                std::size_t row = (static_cast<std::size_t>(b) * T + t) * d;
                rope_rotate(&lc.q[row], H, hd, t, +1);
                rope_rotate(&lc.k[row], H, hd, t, +1);
            }

        lc.att_p.assign(static_cast<std::size_t>(B) * H * T * T, 0.0);
        lc.att_o.assign(x.size(), 0.0);
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h) {
                const double* qs = &lc.q[(static_cast<std::size_t>(b) * T) * d +
                                         static_cast<std::size_t>(h) * hd];
                const double* ks = &lc.k[(static_cast<std::size_t>(b) * T) * d +
                                         static_cast<std::size_t>(h) * hd];
                const double* vs = &lc.v[(static_cast<std::size_t>(b) * T) * d +
                                         static_cast<std::size_t>(h) * hd];
                double* P = &lc.att_p[((static_cast<std::size_t>(b) * H + h) *
                                       T) * T];
                // scores then causal softmax in place
                gemm(false, true, T, T, hd, scale, qs, d, ks, d, 0.0, P, T);
                for (int t = 0; t < T; ++t) {
                    double* row = P + static_cast<std::size_t>(t) * T;
                    double mx = row[0];
                    for (int j = 1; j <= t; ++j) mx = std::max(mx, row[j]);
                    double sum = 0;
                    for (int j = 0; j <= t; ++j) {
                        row[j] = std::exp(row[j] - mx);
                        sum += row[j];
                    }
                    double inv = 1.0 / sum;
                    for (int j = 0; j <= t; ++j) row[j] *= inv;
                    for (int j = t + 1; j < T; ++j) row[j] = 0.0;
                }
                double* os = &lc.att_o[(static_cast<std::size_t>(b) * T) * d +
                                       static_cast<std::size_t>(h) * hd];
                gemm(false, false, T, hd, T, 1.0, P, T, vs, d, 0.0, os, d);
            }

        // x += Wo(att_o)
        lc.x_mid.resize(x.size());
        linear(lc.att_o.data(), ly.wo.data.data(), lc.x_mid.data(), N, d, d);
        for (std::size_t i = 0; i < x.size(); ++i) lc.x_mid[i] += x[i];
        x = lc.x_mid;

        lc.ln2.resize(x.size());
        lc.r2.resize(N);
        rmsnorm_rows(x.data(), ly.ffn_norm.data.data(), lc.ln2.data(),
                     lc.r2.data(), N, d);
        lc.gate.resize(static_cast<std::size_t>(N) * f);
        lc.up.resize(lc.gate.size());
        lc.act.resize(lc.gate.size());
        linear(lc.ln2.data(), ly.w_gate.data.data(), lc.gate.data(), N, f, d);
        linear(lc.ln2.data(), ly.w_up.data.data(), lc.up.data(), N, f, d);
        for (std::size_t i = 0; i < lc.gate.size(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-lc.gate[i]));
            lc.act[i] = lc.gate[i] * s * lc.up[i];
        }
        std::vector<double> ffn_out(x.size());
        linear(lc.act.data(), ly.w_down.data.data(), ffn_out.data(), N, d, f);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += ffn_out[i];
    }

    c.ln_f.resize(x.size());
    c.r_f.resize(N);
    // final residual is recoverable from the last layer cache; stash it in
    // ln_f's sibling via x_in of a virtual layer -- instead keep it simple:
    c.layers.emplace_back();
    c.layers.back().x_in = x;
    rmsnorm_rows(x.data(), m.final_norm.data.data(), c.ln_f.data(),
                 c.r_f.data(), N, d);

    const Tensor& head = cfg.tie_embeddings ? m.tok_emb : m.out_head;
    Tensor logits({N, cfg.vocab});
    linear(c.ln_f.data(), head.data.data(), logits.data.data(), N, cfg.vocab,
           d);
    return logits;
}

double masked_cross_entropy(const Tensor& logits, std::span<const int> targets,
                            std::span<const std::uint8_t> mask,
                            Tensor* dlogits) {
    const int N = logits.shape[0], V = logits.shape[1];
    if (static_cast<int>(targets.size()) != N ||
        static_cast<int>(mask.size()) != N)
        throw LengthError("targets/mask size mismatch");
    long n_active = 0;
    for (auto m_ : mask) n_active += m_ ? 1 : 0;
    if (n_active == 0) throw LengthError("empty loss mask");

    if (dlogits) {
        dlogits->shape = logits.shape;
        dlogits->data.assign(logits.data.size(), 0.0);
    }
    double loss = 0;
    double inv_n = 1.0 / static_cast<double>(n_active);
    for (int i = 0; i < N; ++i) {
        if (!mask[i]) continue;
        const double* row = &logits.data[static_cast<std::size_t>(i) * V];
        double mx = row[0];
        for (int j = 1; j < V; ++j) mx = std::max(mx, row[j]);
        double sum = 0;
        for (int j = 0; j < V; ++j) sum += std::exp(row[j] - mx);
        double lse = mx + std::log(sum);
        loss += lse - row[targets[i]];
        if (dlogits) {
            double* drow = &dlogits->data[static_cast<std::size_t>(i) * V];
            double inv_sum = 1.0 / sum;
            for (int j = 0; j < V; ++j)
                drow[j] = std::exp(row[j] - mx) * inv_sum * inv_n;
            drow[targets[i]] -= inv_n;
        }
    }
    return loss * inv_n;
}

void backward(ModelState& m, const ForwardCache& c, const Tensor& dlogits) {
    const ModelConfig& cfg = m.config;
    const int B = c.B, T = c.T, N = B * T, d = cfg.dim, f = cfg.ffn_hidden();
    const int H = cfg.n_heads, hd = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    m.ensure_grads();

    const std::vector<double>& x_final = c.layers.back().x_in;
    Tensor& head = cfg.tie_embeddings ? m.tok_emb : m.out_head;

    // head and final norm
    std::vector<double> dln_f(static_cast<std::size_t>(N) * d, 0.0);
    linear_dx(dlogits.data.data(), head.data.data(), dln_f.data(), N,
              cfg.vocab, d);
    linear_dw(dlogits.data.data(), c.ln_f.data(), head.grad.data(), N,
              cfg.vocab, d);
    std::vector<double> dx(static_cast<std::size_t>(N) * d, 0.0);
    rmsnorm_backward_rows(x_final.data(), m.final_norm.data.data(),
                          c.r_f.data(), dln_f.data(), dx.data(),
                          m.final_norm.grad.data(), N, d);

    std::vector<double> buf(static_cast<std::size_t>(N) * d);
    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const auto& lc = c.layers[l];
        auto& ly = m.layers[l];

        // ffn: x_out = x_mid + W_down(act)
        std::vector<double> dact(static_cast<std::size_t>(N) * f, 0.0);
        linear_dx(dx.data(), ly.w_down.data.data(), dact.data(), N, d, f);
        linear_dw(dx.data(), lc.act.data(), ly.w_down.grad.data(), N, d, f);
        std::vector<double> dgate(dact.size()), dup(dact.size());
        for (std::size_t i = 0; i < dact.size(); ++i) {
            double g = lc.gate[i];
            double s = 1.0 / (1.0 + std::exp(-g));
            double silu = g * s;
            dup[i] = dact[i] * silu;
            dgate[i] = dact[i] * lc.up[i] * (s * (1.0 + g * (1.0 - s)));
        }
        std::vector<double> dln2(static_cast<std::size_t>(N) * d, 0.0);
        linear_dx(dgate.data(), ly.w_gate.data.data(), dln2.data(), N, f, d);
        linear_dx(dup.data(), ly.w_up.data.data(), dln2.data(), N, f, d);
        linear_dw(dgate.data(), lc.ln2.data(), ly.w_gate.grad.data(), N, f, d);
        linear_dw(dup.data(), lc.ln2.data(), ly.w_up.grad.data(), N, f, d);
        rmsnorm_backward_rows(lc.x_mid.data(), ly.ffn_norm.data.data(),
                              lc.r2.data(), dln2.data(), dx.data(),
                              ly.ffn_norm.grad.data(), N, d);

        // attention: x_mid = x_in + Wo(att_o)
        std::vector<double> datt_o(static_cast<std::size_t>(N) * d, 0.0);
        linear_dx(dx.data(), ly.wo.data.data(), datt_o.data(), N, d, d);
        linear_dw(dx.data(), lc.att_o.data(), ly.wo.grad.data(), N, d, d);

        std::vector<double> dq(static_cast<std::size_t>(N) * d, 0.0);
        std::vector<double> dk(dq.size()), dv(dq.size());
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        std::vector<double> dP(static_cast<std::size_t>(T) * T);
        std::vector<double> dS(dP.size());
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h) {
                std::size_t base = (static_cast<std::size_t>(b) * T) * d +
                                   static_cast<std::size_t>(h) * hd;
                const double* qs = &lc.q[base];
                const double* ks = &lc.k[base];
                const double* vs = &lc.v[base];
                const double* P =
                    &lc.att_p[((static_cast<std::size_t>(b) * H + h) * T) * T];
                const double* dO = &datt_o[base];
                // dP = dO * v^T ; dv += P^T * dO
                gemm(false, true, T, T, hd, 1.0, dO, d, vs, d, 0.0, dP.data(),
                     T);
                gemm(true, false, T, hd, T, 1.0, P, T, dO, d, 1.0, &dv[base],
                     d);
                // softmax backward (causal rows)
                for (int t = 0; t < T; ++t) {
                    const double* Pr = P + static_cast<std::size_t>(t) * T;
                    const double* dPr = dP.data() + static_cast<std::size_t>(t) * T;
                    double* dSr = dS.data() + static_cast<std::size_t>(t) * T;
                    double dot = 0;
                    for (int j = 0; j <= t; ++j) dot += dPr[j] * Pr[j];
                    for (int j = 0; j <= t; ++j)
                        dSr[j] = Pr[j] * (dPr[j] - dot);
                    for (int j = t + 1; j < T; ++j) dSr[j] = 0.0;
                }
                // dq += dS * k * scale ; dk += dS^T * q * scale
                gemm(false, false, T, hd, T, scale, dS.data(), T, ks, d, 1.0,
                     &dq[base], d);
                gemm(true, false, T, hd, T, scale, dS.data(), T, qs, d, 1.0,
                     &dk[base], d);
            }
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t) {
                std::size_t row = (static_cast<std::size_t>(b) * T + t) * d;
                rope_rotate(&dq[row], H, hd, t, -1);
                rope_rotate(&dk[row], H, hd, t, -1);
            }
        std::vector<double> dln1(static_cast<std::size_t>(N) * d, 0.0);
        linear_dx(dq.data(), ly.wq.data.data(), dln1.data(), N, d, d);
        linear_dx(dk.data(), ly.wk.data.data(), dln1.data(), N, d, d);
        linear_dx(dv.data(), ly.wv.data.data(), dln1.data(), N, d, d);
        linear_dw(dq.data(), lc.ln1.data(), ly.wq.grad.data(), N, d, d);
        linear_dw(dk.data(), lc.ln1.data(), ly.wk.grad.data(), N, d, d);
        linear_dw(dv.data(), lc.ln1.data(), ly.wv.grad.data(), N, d, d);
        rmsnorm_backward_rows(lc.x_in.data(), ly.attn_norm.data.data(),
                              lc.r1.data(), dln1.data(), dx.data(),
                              ly.attn_norm.grad.data(), N, d);
    }

    for (int i = 0; i < N; ++i) {
        double* g = &m.tok_emb.grad[static_cast<std::size_t>(c.tokens[i]) * d];
        const double* dxi = &dx[static_cast<std::size_t>(i) * d];
        for (int j = 0; j < d; ++j) g[j] += dxi[j];
    }
}

namespace {
constexpr char kMagic[8] = {'I', 'T', 'L', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const ModelState& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(kMagic, 8);
    auto w32 = [&](std::int32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
    w32(m.config.n_layers);
    w32(m.config.n_heads);
    w32(m.config.dim);
    w32(m.config.vocab);
    w32(m.config.context);
    w32(m.config.tie_embeddings ? 1 : 0);
    auto params = m.named_parameters();
    w32(static_cast<std::int32_t>(params.size()));
    for (auto& [name, t] : params) {
        w32(static_cast<std::int32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        w32(static_cast<std::int32_t>(t->shape.size()));
        for (int s : t->shape) w32(s);
        f.write(reinterpret_cast<const char*>(t->data.data()),
                static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    auto r32 = [&]() {
        std::int32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    ModelConfig cfg;
    cfg.n_layers = r32();
    cfg.n_heads = r32();
    cfg.dim = r32();
    cfg.vocab = r32();
    cfg.context = r32();
    cfg.tie_embeddings = r32() != 0;
    ModelState m = ModelState::init(cfg, 0);
    int n = r32();
    auto params = m.named_parameters();
    if (n != static_cast<int>(params.size()))
        throw std::runtime_error("checkpoint parameter count mismatch");
    for (auto& [name, t] : params) {
        int len = r32();
        std::string got(static_cast<std::size_t>(len), '\0');
        f.read(got.data(), len);
        if (got != name)
            throw std::runtime_error("checkpoint tensor order mismatch: " +
                                     got + " vs " + name);
        int nd = r32();
        std::vector<int> shape(nd);
        for (int& s : shape) s = r32();
        if (shape != t->shape)
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        f.read(reinterpret_cast<char*>(t->data.data()),
               static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("checkpoint truncated: " + path);
    return m;
}

}  // namespace itl::neuralcore
