// Llama3-style decoder in 64-bit floats: RoPE, causal attention, gated SiLU
// MLP, RMSNorm, tied embeddings. Forward records activations; backward is
// hand-derived and checked against finite differences in the tests.
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "itl/tensor.hpp"

namespace itl::neuralcore {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LengthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    int n_layers = 2;
    int n_heads = 2;
    int dim = 16;
    int vocab = 260;
    int context = 257;
    bool tie_embeddings = true;

    int ffn_hidden() const { return 4 * dim; }
    int head_dim() const { return dim / n_heads; }
    void validate() const;
};

struct ModelState {
    ModelConfig config;

    struct Layer {
        Tensor attn_norm;  // [dim]
        Tensor wq, wk, wv, wo;  // [dim, dim]
        Tensor ffn_norm;   // [dim]
        Tensor w_gate, w_up;    // [ffn, dim]
        Tensor w_down;     // [dim, ffn]
    };

    Tensor tok_emb;  // [vocab, dim]
    std::vector<Layer> layers;
    Tensor final_norm;  // [dim]
    Tensor out_head;    // [vocab, dim], only if untied

    static ModelState init(const ModelConfig& cfg, std::uint64_t seed);

    std::vector<std::pair<std::string, Tensor*>> named_parameters();
    std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;
    void ensure_grads();
    void zero_grads();
};

long param_count(const ModelConfig& cfg);

inline constexpr double kRmsEps = 1e-5;
inline constexpr double kRopeBase = 10000.0;
inline constexpr double kInitStd = 0.02;

// One training micro-batch, already shifted: at row index i the model's
// logits are scored against targets[i] when target_mask[i] is set.
struct Batch {
    int B = 0, T = 0;
    std::vector<int> tokens;               // [B*T]
    std::vector<int> targets;              // [B*T]
    std::vector<std::uint8_t> target_mask; // [B*T]
};

struct ForwardCache {
    int B = 0, T = 0;
    std::vector<int> tokens;
    struct LayerCache {
        std::vector<double> x_in;    // residual entering the block [N,dim]
        std::vector<double> ln1, r1; // rmsnorm out [N,dim], inv-rms [N]
        std::vector<double> q, k, v; // post-RoPE q,k [N,dim]
        std::vector<double> att_p;   // probs [B,H,T,T]
        std::vector<double> att_o;   // heads concat, pre-Wo [N,dim]
        std::vector<double> x_mid;   // residual after attention [N,dim]
        std::vector<double> ln2, r2;
        std::vector<double> gate, up, act; // [N,ffn]; act = silu(gate)*up
    };
    std::vector<LayerCache> layers;
    std::vector<double> ln_f, r_f;  // final norm out, inv-rms
};

// logits [B*T, vocab]; cache may be null when only logits are needed.
Tensor forward(const ModelState& m, std::span<const int> tokens, int B, int T,
               ForwardCache* cache);

// Mean NLL over mask-true rows. When dlogits is non-null it receives
// d(loss)/d(logits) with the same shape.
double masked_cross_entropy(const Tensor& logits, std::span<const int> targets,
                            std::span<const std::uint8_t> mask,
                            Tensor* dlogits);

// Accumulates parameter gradients for d(loss)/d(logits).
void backward(ModelState& m, const ForwardCache& cache, const Tensor& dlogits);

void save_checkpoint(const ModelState& m, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace itl::neuralcore
