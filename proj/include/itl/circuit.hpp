// Hand-constructed hard-attention transformer for the querying task:
// given Q = phi1(a) . n . phi3(a), emit T = chi1(a) . " FOR " . n . " </DB>"
// with exact weights, 8 blocks, and a residual dimension linear in the
// attribute count. Every internal register is exposed for inspection.
#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace itl::circuit {

// Character-level tokens (0..255) plus two template atoms.
inline constexpr int kDbOpen = 256;   // "<DB>"
inline constexpr int kDbClose = 257;  // "</DB>"
inline constexpr int kAtomCount = 258;
inline constexpr int kNumBlocks = 8;

struct CircuitAttribute {
    std::string name;
    std::string phi1;        // question prefix, e.g. "Where was "
    std::string phi3;        // question suffix ending in '?', e.g. " born?"
    std::string tool_field;  // e.g. "birthplace"
    // chi1(a) = kChi1Preamble + <DB> + " FIND " + tool_field
};

inline constexpr std::string_view kChi1Preamble =
    "To answer this request, I will make a tool-call. ";

struct CircuitConfig {
    std::vector<CircuitAttribute> attributes;
    std::string name_charset;  // characters allowed in names
    int max_seq_len = 512;
};

// Named preconditions (assumptions 1-5) violated at build time.
struct AssumptionError : std::runtime_error {
    int assumption;  // 1..5
    AssumptionError(int which, const std::string& msg)
        : std::runtime_error("assumption " + std::to_string(which) + ": " +
                             msg),
          assumption(which) {}
};

struct MalformedQueryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sparse affine form sum_i coeff_i * reg_i + bias; the building block of
// every query, key, value and feedforward weight in the program.
struct Affine {
    std::vector<std::pair<int, double>> terms;
    double bias = 0.0;
};

// One hard-max attention head. score(p, j) = q1(x_p)k1(x_j) + q2(x_p)k2(x_j)
// over j <= p; if the max score reaches `threshold`, each write target at p
// is set to its expression evaluated on the registers of the argmax j.
struct Head {
    std::string name;
    Affine q1, k1, q2, k2;
    double threshold = 0.5;
    std::vector<std::pair<int, Affine>> writes;
};

// Feedforward micro-ops applied in order at each position: gated affine
// assignment, integer step comparison, and exact lookup tables keyed on
// rounded register values (the "one-hot selection + linear readout" form).
struct FfnOp {
    enum class Kind { assign, cmp_ge, table };
    Kind kind;
    int dst = -1;
    Affine expr;    // assign: dst = expr; cmp_ge: dst = [expr >= 0.5]
    int gate = -1;  // -1 = unconditional, else apply iff reg[gate] >= 0.5
    std::vector<int> key_regs;                       // table only
    std::map<std::vector<long long>, double> table;  // key -> value for dst
};

struct Block {
    std::vector<Head> heads;
    std::vector<FfnOp> ops;
};

struct RegisterSpan {
    int offset;
    int length;
};

struct RegisterLayout {
    int n_attributes = 0;
    int dim = 0;
    std::map<std::string, RegisterSpan> spans;

    const RegisterSpan& span(const std::string& name) const;
    int reg(const std::string& name, int i = 0) const;
};

struct CircuitProgram {
    CircuitConfig config;
    RegisterLayout layout;
    std::vector<Block> blocks;  // exactly kNumBlocks
    // Per-attribute token sequences, frozen at build time.
    std::vector<std::vector<int>> phi1_tokens;
    std::vector<std::vector<int>> phi3_tokens;
    std::vector<std::vector<int>> prefix_tokens;  // chi1(a) + " FOR "

    int block_count() const { return static_cast<int>(blocks.size()); }
    std::size_t param_count() const;
    // FNV-1a digest over a canonical weight serialization; byte-identical
    // rebuilds produce equal digests.
    std::uint64_t weights_digest() const;
};

// [blocks+1] slabs of [positions x dim]: slab 0 is the embedding output,
// slab k the residual stream after block k.
struct CircuitTrace {
    int positions = 0;
    int dim = 0;
    std::vector<double> data;

    double at(int slab, int pos, int reg) const {
        return data[(static_cast<std::size_t>(slab) * positions + pos) * dim +
                    reg];
    }
};

struct RunResult {
    std::string text;         // detokenized emission (T on well-formed input)
    std::vector<int> tokens;  // emitted tokens including the terminator
    bool malformed = false;   // Q matched no attribute; emission halted
};

struct FactResult {
    std::string fact;
    bool pass = false;
    std::string detail;
};

std::vector<int> tokenize(std::string_view text);
std::string detokenize(const std::vector<int>& tokens);

// The four concrete attributes used throughout; counts 2/8/16 extend or
// truncate this set with synthetic templates for the scaling checks.
std::vector<CircuitAttribute> default_attributes(int count = 4);
CircuitConfig default_config(int n_attributes = 4);

CircuitProgram build_circuit(const CircuitConfig& cfg);

std::string render_question(const CircuitProgram& prog, int attr,
                            std::string_view name);
std::string render_target(const CircuitProgram& prog, int attr,
                          std::string_view name);

CircuitTrace run_forward(const CircuitProgram& prog,
                         const std::vector<int>& tokens);
RunResult run_querying(const CircuitProgram& prog, std::string_view question);

// Final-block value(s) of a named register at every position of `text`.
// result[pos] has one entry per coordinate of the register's span.
std::vector<std::vector<double>> inspect(const CircuitProgram& prog,
                                         std::string_view text,
                                         const std::string& register_name);

// Register-level checks mirroring the proof's Facts, evaluated on the full
// Q . T sequence for one (attribute, name) pair.
std::vector<FactResult> verify_facts(const CircuitProgram& prog, int attr,
                                     std::string_view name);

}  // namespace itl::circuit
