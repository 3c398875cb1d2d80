#include "itl/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "itl/rng.hpp"

namespace itl::circuit {

namespace {

// Register indices. The residual stream is 28 bookkeeping coordinates plus
// four per-attribute spans, so dim = 28 + 4*A.
enum Reg : int {
    kOne = 0,
    kPos,
    kPosSq,
    kTok,
    kIsQ,       // question_mark_flag
    kQMatched,  // a '?' exists at or before this position
    kQmarkPos,
    kAfterQ,  // after_question_flag
    kScratch0,
    kScratch1,
    kPhi1End,
    kAttrMatched,
    kAttrId,
    kNameLen,
    kRel,  // distance from the question mark
    kEmit,
    kQueryEnd,  // query_end_flag
    kQendMatched,
    kQendPos,
    kDistQend,  // d' of the proof
    kCopyDist,  // d  of the proof
    kCopySrc,
    kCopiedTok,
    kInCopy,
    kNameCopied,  // name_copied_flag
    kLastNMatched,
    kLastNPos,
    kTermDist,
    kFixedRegs,  // == 28
};

int mm_reg(int a) { return kFixedRegs + a; }                     // mismatch
int anymm_reg(int A, int a) { return kFixedRegs + A + a; }       // any_mismatch
int flag_reg(int A, int a) { return kFixedRegs + 2 * A + a; }    // attribute_flags
int onehot_reg(int A, int a) { return kFixedRegs + 3 * A + a; }  // attr_onehot

Affine unit(int reg) { return {{{reg, 1.0}}, 0.0}; }
Affine constant(double c) { return {{}, c}; }

double eval(const Affine& e, const double* x) {
    double v = e.bias;
    for (auto& [r, c] : e.terms) v += c * x[r];
    return v;
}

RegisterLayout make_layout(int A) {
    RegisterLayout ly;
    ly.n_attributes = A;
    ly.dim = kFixedRegs + 4 * A;
    auto one = [&](const std::string& n, int r) { ly.spans[n] = {r, 1}; };
    one("one", kOne);
    one("absolute_position", kPos);
    one("position_sq", kPosSq);
    one("current_token", kTok);
    one("question_mark_flag", kIsQ);
    one("qmark_matched", kQMatched);
    one("qmark_pos", kQmarkPos);
    one("after_question_flag", kAfterQ);
    one("phi1_end_pos", kPhi1End);
    one("attr_matched", kAttrMatched);
    one("attr_id", kAttrId);
    one("name_length", kNameLen);
    one("rel", kRel);
    one("emit_token", kEmit);
    one("query_end_flag", kQueryEnd);
    one("qend_matched", kQendMatched);
    one("qend_pos", kQendPos);
    one("dist_from_query_end", kDistQend);
    one("copy_distance", kCopyDist);
    one("copy_src", kCopySrc);
    one("copied_token", kCopiedTok);
    one("in_copy_flag", kInCopy);
    one("name_copied_flag", kNameCopied);
    ly.spans["mismatch"] = {kFixedRegs, A};
    ly.spans["any_mismatch"] = {kFixedRegs + A, A};
    ly.spans["attribute_flags"] = {kFixedRegs + 2 * A, A};
    ly.spans["attr_onehot"] = {kFixedRegs + 3 * A, A};
    return ly;
}

std::string chi1_text(const CircuitAttribute& a) {
    return std::string(kChi1Preamble) + "<DB> FIND " + a.tool_field;
}

void check_assumptions(const CircuitConfig& cfg) {
    const auto& as = cfg.attributes;
    if (as.empty())
        throw AssumptionError(1, "attribute set is empty");
    for (const auto& a : as) {
        if (a.phi1.empty())
            throw AssumptionError(1, "phi1 empty for attribute " + a.name);
        if (a.phi3.empty() || a.phi3.back() != '?')
            throw AssumptionError(
                2, "phi3 must end with '?' for attribute " + a.name);
        std::string interior = a.phi3.substr(0, a.phi3.size() - 1);
        if (a.phi1.find('?') != std::string::npos ||
            interior.find('?') != std::string::npos ||
            a.tool_field.find('?') != std::string::npos)
            throw AssumptionError(
                2, "'?' must appear only at the end of phi3 (attribute " +
                       a.name + ")");
        // Char-level tokenization of the templates must not collide with the
        // <DB>/</DB> atoms.
        if (tokenize(a.phi1).size() != a.phi1.size() ||
            tokenize(a.phi3).size() != a.phi3.size() ||
            tokenize(a.tool_field).size() != a.tool_field.size())
            throw AssumptionError(
                3, "template collides with a tool-call atom (attribute " +
                       a.name + ")");
    }
    if (cfg.name_charset.empty() ||
        cfg.name_charset.find('?') != std::string::npos)
        throw AssumptionError(
            2, "name charset must be nonempty and exclude '?'");
    for (std::size_t i = 0; i < as.size(); ++i)
        for (std::size_t j = 0; j < as.size(); ++j) {
            if (i == j) continue;
            if (as[i].phi1 == as[j].phi1)
                throw AssumptionError(1, "phi1 not injective: " + as[i].name +
                                             " vs " + as[j].name);
            if (as[j].phi1.find(as[i].phi1) != std::string::npos)
                throw AssumptionError(
                    4, "phi1(" + as[i].name + ") is a substring of phi1(" +
                           as[j].name + ")");
        }
    for (const auto& a : as) {
        std::size_t fixed = a.phi1.size() + a.phi3.size() +
                            tokenize(chi1_text(a) + " FOR ").size() + 2;
        if (fixed + 64 > static_cast<std::size_t>(cfg.max_seq_len))
            throw AssumptionError(
                5, "template token counts exceed max_seq_len (attribute " +
                       a.name + ")");
    }
}

}  // namespace

const RegisterSpan& RegisterLayout::span(const std::string& name) const {
    auto it = spans.find(name);
    if (it == spans.end())
        throw std::out_of_range("unknown register: " + name);
    return it->second;
}

int RegisterLayout::reg(const std::string& name, int i) const {
    const auto& s = span(name);
    if (i < 0 || i >= s.length)
        throw std::out_of_range("register index out of span: " + name);
    return s.offset + i;
}

std::vector<int> tokenize(std::string_view text) {
    std::vector<int> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, 5, "</DB>") == 0) {
            out.push_back(kDbClose);
            i += 5;
        } else if (text.compare(i, 4, "<DB>") == 0) {
            out.push_back(kDbOpen);
            i += 4;
        } else {
            out.push_back(static_cast<unsigned char>(text[i]));
            ++i;
        }
    }
    return out;
}

std::string detokenize(const std::vector<int>& tokens) {
    std::string s;
    for (int t : tokens) {
        if (t == kDbOpen)
            s += "<DB>";
        else if (t == kDbClose)
            s += "</DB>";
        else
            s.push_back(static_cast<char>(t));
    }
    return s;
}

std::vector<CircuitAttribute> default_attributes(int count) {
    std::vector<CircuitAttribute> base = {
        {"birth_place", "Where was ", " born?", "birthplace"},
        {"birth_date", "When was ", " born?", "birthdate"},
        {"current_address", "Where does ", " currently live?", "address"},
        {"occupation", "What does ", " do for a living?", "occupation"},
    };
    std::vector<CircuitAttribute> out;
    for (int i = 0; i < count; ++i) {
        if (i < static_cast<int>(base.size())) {
            out.push_back(base[i]);
        } else {
            std::string k = std::to_string(i);
            out.push_back({"extra_" + k, "Query " + k + " for ",
                           " under rule " + k + "?", "field" + k});
        }
    }
    return out;
}

CircuitConfig default_config(int n_attributes) {
    CircuitConfig cfg;
    cfg.attributes = default_attributes(n_attributes);
    cfg.name_charset =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ -'";
    cfg.max_seq_len = 512;
    return cfg;
}

CircuitProgram build_circuit(const CircuitConfig& cfg) {
    check_assumptions(cfg);
    const int A = static_cast<int>(cfg.attributes.size());

    CircuitProgram p;
    p.config = cfg;
    p.layout = make_layout(A);
    p.blocks.resize(kNumBlocks);
    for (const auto& a : cfg.attributes) {
        p.phi1_tokens.push_back(tokenize(a.phi1));
        p.phi3_tokens.push_back(tokenize(a.phi3));
        p.prefix_tokens.push_back(tokenize(chi1_text(a) + " FOR "));
    }

    auto assign = [](int dst, Affine e, int gate = -1) {
        FfnOp op;
        op.kind = FfnOp::Kind::assign;
        op.dst = dst;
        op.expr = std::move(e);
        op.gate = gate;
        return op;
    };
    auto cmp = [](int dst, Affine e, int gate = -1) {
        FfnOp op;
        op.kind = FfnOp::Kind::cmp_ge;
        op.dst = dst;
        op.expr = std::move(e);
        op.gate = gate;
        return op;
    };
    auto table = [](int dst, std::vector<int> keys,
                    std::map<std::vector<long long>, double> tbl,
                    int gate = -1) {
        FfnOp op;
        op.kind = FfnOp::Kind::table;
        op.dst = dst;
        op.key_regs = std::move(keys);
        op.table = std::move(tbl);
        op.gate = gate;
        return op;
    };

    // ---- Block 1: position bookkeeping, question-mark flags, per-position
    //      template-mismatch bits.
    {
        Block& b = p.blocks[0];
        Head h;
        h.name = "find_qmark";
        h.q1 = unit(kOne);
        h.k1 = unit(kIsQ);
        h.writes = {{kQMatched, constant(1)}, {kQmarkPos, unit(kPos)}};
        b.heads.push_back(std::move(h));
        b.ops.push_back(cmp(kAfterQ, {{{kQMatched, 1}, {kIsQ, -1}}, 0}));
        for (int a = 0; a < A; ++a) {
            const auto& phi1 = p.phi1_tokens[a];
            const long long len = static_cast<long long>(phi1.size());
            std::map<std::vector<long long>, double> match;
            for (long long i = 0; i < len; ++i)
                match[{i, phi1[i]}] = 1.0;
            b.ops.push_back(assign(kScratch0, constant(0)));
            b.ops.push_back(table(kScratch0, {kPos, kTok}, std::move(match)));
            // scratch1 = [pos < len(phi1(a))]
            b.ops.push_back(
                cmp(kScratch1, {{{kPos, -1}}, static_cast<double>(len) - 0.5}));
            b.ops.push_back(
                cmp(mm_reg(a), {{{kScratch1, 1}, {kScratch0, -1}}, 0}));
        }
    }

    // ---- Block 2: one head per attribute detects whether any prefix
    //      position mismatched phi1(a).
    {
        Block& b = p.blocks[1];
        for (int a = 0; a < A; ++a) {
            Head h;
            h.name = "any_mismatch_" + cfg.attributes[a].name;
            h.q1 = unit(kOne);
            h.k1 = unit(mm_reg(a));
            h.writes = {{anymm_reg(A, a), constant(1)}};
            b.heads.push_back(std::move(h));
        }
    }

    // ---- Block 3: attribute flags — raised only above the last token of
    //      phi1(a) when the whole prefix matched.
    {
        Block& b = p.blocks[2];
        for (int a = 0; a < A; ++a) {
            const double last = static_cast<double>(p.phi1_tokens[a].size()) -
                                1.0;
            b.ops.push_back(cmp(kScratch0, {{{kPos, 1}}, -last + 0.5}));
            b.ops.push_back(cmp(kScratch1, {{{kPos, -1}}, last + 0.5}));
            b.ops.push_back(cmp(
                flag_reg(A, a),
                {{{kScratch0, 1}, {kScratch1, 1}, {anymm_reg(A, a), -1}}, -1}));
        }
    }

    // ---- Block 4: fetch the attribute identity and phi1 end position from
    //      the flag; derive name length and emit chi1(a)."FOR " by
    //      distance-from-'?' lookup.
    {
        Block& b = p.blocks[3];
        Head h;
        h.name = "fetch_attribute";
        h.q1 = {{{kAfterQ, 1}, {kIsQ, 1}}, 0};
        Affine flags;
        Affine id;
        for (int a = 0; a < A; ++a) {
            flags.terms.push_back({flag_reg(A, a), 1.0});
            id.terms.push_back({flag_reg(A, a), static_cast<double>(a)});
        }
        h.k1 = flags;
        h.writes = {{kAttrMatched, constant(1)}, {kPhi1End, unit(kPos)},
                    {kAttrId, id}};
        for (int a = 0; a < A; ++a)
            h.writes.push_back({onehot_reg(A, a), unit(flag_reg(A, a))});
        b.heads.push_back(std::move(h));

        std::map<std::vector<long long>, double> phi3_len;
        std::map<std::vector<long long>, double> emit;
        for (int a = 0; a < A; ++a) {
            phi3_len[{a}] = static_cast<double>(p.phi3_tokens[a].size());
            const auto& pre = p.prefix_tokens[a];
            for (std::size_t l = 0; l < pre.size(); ++l)
                emit[{a, static_cast<long long>(l)}] =
                    static_cast<double>(pre[l]);
        }
        b.ops.push_back(
            table(kScratch0, {kAttrId}, std::move(phi3_len), kAttrMatched));
        b.ops.push_back(assign(
            kNameLen, {{{kQmarkPos, 1}, {kPhi1End, -1}, {kScratch0, -1}}, 0},
            kAttrMatched));
        b.ops.push_back(
            assign(kRel, {{{kPos, 1}, {kQmarkPos, -1}}, 0}, kAttrMatched));
        b.ops.push_back(
            table(kEmit, {kAttrId, kRel}, std::move(emit), kAttrMatched));
    }

    // ---- Block 5: query-end flag at the last token of chi1(a)."FOR ", and
    //      the copy distance d = qend - (first token of n).
    {
        Block& b = p.blocks[4];
        std::map<std::vector<long long>, double> qend;
        std::map<std::vector<long long>, double> pre_len;
        for (int a = 0; a < A; ++a) {
            const long long lp = static_cast<long long>(
                p.prefix_tokens[a].size());
            qend[{a, lp}] = 1.0;
            pre_len[{a}] = static_cast<double>(lp);
        }
        b.ops.push_back(
            table(kQueryEnd, {kAttrId, kRel}, std::move(qend), kAttrMatched));
        b.ops.push_back(
            table(kScratch0, {kAttrId}, std::move(pre_len), kAttrMatched));
        b.ops.push_back(assign(
            kCopyDist,
            {{{kQmarkPos, 1}, {kScratch0, 1}, {kPhi1End, -1}}, -1},
            kAttrMatched));
    }

    // ---- Block 6: fetch the query-end position; distances d' and the copy
    //      source position for induction-style copying.
    {
        Block& b = p.blocks[5];
        Head h;
        h.name = "fetch_query_end";
        h.q1 = unit(kAfterQ);
        h.k1 = unit(kQueryEnd);
        h.writes = {{kQendMatched, constant(1)}, {kQendPos, unit(kPos)}};
        b.heads.push_back(std::move(h));
        b.ops.push_back(assign(
            kDistQend, {{{kPos, 1}, {kQendPos, -1}}, 0}, kQendMatched));
        b.ops.push_back(assign(
            kCopySrc, {{{kPos, 1}, {kCopyDist, -1}}, 0}, kQendMatched));
        b.ops.push_back(cmp(kScratch0, {{{kDistQend, 1}}, 0.5}, kQendMatched));
        b.ops.push_back(cmp(
            kScratch1, {{{kNameLen, 1}, {kDistQend, -1}}, -0.5}, kQendMatched));
        b.ops.push_back(cmp(
            kInCopy, {{{kScratch0, 1}, {kScratch1, 1}}, -1}, kQendMatched));
    }

    // ---- Block 7: position-addressed copy head (score 2*src*pos - pos^2 is
    //      uniquely maximized at pos == src); name-copied flag at d' == |n|.
    {
        Block& b = p.blocks[6];
        Head h;
        h.name = "copy_name_token";
        h.q1 = {{{kCopySrc, 2}}, 0};
        h.k1 = unit(kPos);
        h.q2 = constant(-1);
        h.k2 = unit(kPosSq);
        h.writes = {{kCopiedTok, unit(kTok)}};
        b.heads.push_back(std::move(h));
        b.ops.push_back(assign(kEmit, unit(kCopiedTok), kInCopy));
        b.ops.push_back(cmp(
            kScratch0, {{{kDistQend, 1}, {kNameLen, -1}}, 0.5}, kQendMatched));
        b.ops.push_back(cmp(
            kScratch1, {{{kNameLen, 1}, {kDistQend, -1}}, 0.5}, kQendMatched));
        b.ops.push_back(cmp(kNameCopied,
                            {{{kScratch0, 1}, {kScratch1, 1}}, -1},
                            kQendMatched));
    }

    // ---- Block 8: fetch the last-name-token position and emit the
    //      terminator " </DB>" by distance lookup.
    {
        Block& b = p.blocks[7];
        Head h;
        h.name = "fetch_name_end";
        h.q1 = unit(kAfterQ);
        h.k1 = unit(kNameCopied);
        h.writes = {{kLastNMatched, constant(1)}, {kLastNPos, unit(kPos)}};
        b.heads.push_back(std::move(h));
        b.ops.push_back(assign(
            kTermDist, {{{kPos, 1}, {kLastNPos, -1}}, 0}, kLastNMatched));
        b.ops.push_back(table(kEmit, {kTermDist},
                              {{{0}, static_cast<double>(' ')},
                               {{1}, static_cast<double>(kDbClose)}},
                              kLastNMatched));
    }

    return p;
}

std::string render_question(const CircuitProgram& prog, int attr,
                            std::string_view name) {
    const auto& a = prog.config.attributes.at(attr);
    return a.phi1 + std::string(name) + a.phi3;
}

std::string render_target(const CircuitProgram& prog, int attr,
                          std::string_view name) {
    const auto& a = prog.config.attributes.at(attr);
    return chi1_text(a) + " FOR " + std::string(name) + " </DB>";
}

namespace {

// Incremental causal evaluator: appending a token never changes earlier
// positions, so each new position is computed once against cached slabs.
class Runner {
public:
    explicit Runner(const CircuitProgram& prog)
        : prog_(prog), D_(prog.layout.dim), slabs_(kNumBlocks + 1) {}

    int positions() const { return n_; }
    double at(int slab, int pos, int reg) const {
        return slabs_[slab][static_cast<std::size_t>(pos) * D_ + reg];
    }

    void append(int token) {
        const int p = n_++;
        for (auto& s : slabs_) s.resize(static_cast<std::size_t>(n_) * D_, 0.0);
        double* x = row(0, p);
        x[kOne] = 1.0;
        x[kPos] = p;
        x[kPosSq] = static_cast<double>(p) * p;
        x[kTok] = token;
        x[kIsQ] = token == '?' ? 1.0 : 0.0;

        for (int k = 1; k <= kNumBlocks; ++k) {
            const Block& b = prog_.blocks[k - 1];
            const double* xin = row(k - 1, p);
            double* y = row(k, p);
            std::copy(xin, xin + D_, y);
            for (const Head& h : b.heads) {
                const double q1 = eval(h.q1, xin), q2 = eval(h.q2, xin);
                double best = -1e300;
                int arg = -1;
                for (int j = 0; j <= p; ++j) {
                    const double* xk = row(k - 1, j);
                    double s = q1 * eval(h.k1, xk) + q2 * eval(h.k2, xk);
                    if (s > best) {
                        best = s;
                        arg = j;
                    }
                }
                if (best >= h.threshold) {
                    const double* xv = row(k - 1, arg);
                    for (const auto& [dst, e] : h.writes) y[dst] = eval(e, xv);
                }
            }
            for (const FfnOp& op : b.ops) {
                if (op.gate >= 0 && y[op.gate] < 0.5) continue;
                switch (op.kind) {
                    case FfnOp::Kind::assign:
                        y[op.dst] = eval(op.expr, y);
                        break;
                    case FfnOp::Kind::cmp_ge:
                        y[op.dst] = eval(op.expr, y) >= 0.5 ? 1.0 : 0.0;
                        break;
                    case FfnOp::Kind::table: {
                        std::vector<long long> key;
                        key.reserve(op.key_regs.size());
                        for (int r : op.key_regs)
                            key.push_back(std::llround(y[r]));
                        auto it = op.table.find(key);
                        if (it != op.table.end()) y[op.dst] = it->second;
                        break;
                    }
                }
            }
        }
    }

    CircuitTrace trace() const {
        CircuitTrace tr;
        tr.positions = n_;
        tr.dim = D_;
        tr.data.reserve(static_cast<std::size_t>(kNumBlocks + 1) * n_ * D_);
        for (const auto& s : slabs_)
            tr.data.insert(tr.data.end(), s.begin(), s.end());
        return tr;
    }

private:
    double* row(int slab, int pos) {
        return slabs_[slab].data() + static_cast<std::size_t>(pos) * D_;
    }
    const double* row(int slab, int pos) const {
        return slabs_[slab].data() + static_cast<std::size_t>(pos) * D_;
    }

    const CircuitProgram& prog_;
    int D_;
    int n_ = 0;
    std::vector<std::vector<double>> slabs_;
};

}  // namespace

CircuitTrace run_forward(const CircuitProgram& prog,
                         const std::vector<int>& tokens) {
    Runner r(prog);
    for (int t : tokens) r.append(t);
    return r.trace();
}

RunResult run_querying(const CircuitProgram& prog, std::string_view question) {
    RunResult out;
    std::vector<int> seq = tokenize(question);
    if (seq.empty() ||
        static_cast<int>(seq.size()) >= prog.config.max_seq_len) {
        out.malformed = true;
        return out;
    }
    Runner r(prog);
    for (int t : seq) r.append(t);
    while (r.positions() < prog.config.max_seq_len) {
        long long e =
            std::llround(r.at(kNumBlocks, r.positions() - 1, kEmit));
        if (e <= 0 || e >= kAtomCount) {
            out.malformed = true;
            break;
        }
        out.tokens.push_back(static_cast<int>(e));
        if (e == kDbClose) break;
        r.append(static_cast<int>(e));
    }
    if (out.tokens.empty() || out.tokens.back() != kDbClose)
        out.malformed = true;
    out.text = detokenize(out.tokens);
    return out;
}

std::vector<std::vector<double>> inspect(const CircuitProgram& prog,
                                         std::string_view text,
                                         const std::string& register_name) {
    const RegisterSpan& sp = prog.layout.span(register_name);
    CircuitTrace tr = run_forward(prog, tokenize(text));
    std::vector<std::vector<double>> out(tr.positions);
    for (int p = 0; p < tr.positions; ++p) {
        out[p].resize(sp.length);
        for (int i = 0; i < sp.length; ++i)
            out[p][i] = tr.at(kNumBlocks, p, sp.offset + i);
    }
    return out;
}

std::size_t CircuitProgram::param_count() const {
    auto affine_params = [](const Affine& e) {
        return e.terms.size() + (e.bias != 0.0 ? 1 : 0);
    };
    // The embedding contributes one is-question-mark bit per vocabulary
    // entry; position/token scalars are identity reads.
    std::size_t n = kAtomCount;
    for (const Block& b : blocks) {
        for (const Head& h : b.heads) {
            n += affine_params(h.q1) + affine_params(h.k1) +
                 affine_params(h.q2) + affine_params(h.k2) + 1;  // threshold
            for (const auto& [dst, e] : h.writes) n += 1 + affine_params(e);
        }
        for (const FfnOp& op : b.ops) {
            if (op.kind == FfnOp::Kind::table)
                n += op.table.size() * (op.key_regs.size() + 1);
            else
                n += 1 + affine_params(op.expr);
        }
    }
    return n;
}

std::uint64_t CircuitProgram::weights_digest() const {
    std::ostringstream os;
    auto put_affine = [&](const Affine& e) {
        os << "[";
        for (auto& [r, c] : e.terms) {
            char buf[48];
            std::snprintf(buf, sizeof buf, "%d:%.17g,", r, c);
            os << buf;
        }
        char buf[40];
        std::snprintf(buf, sizeof buf, "|%.17g]", e.bias);
        os << buf;
    };
    for (const Block& b : blocks) {
        os << "B{";
        for (const Head& h : b.heads) {
            os << "H(" << h.name << ")";
            put_affine(h.q1);
            put_affine(h.k1);
            put_affine(h.q2);
            put_affine(h.k2);
            os << h.threshold << ";";
            for (const auto& [dst, e] : h.writes) {
                os << dst << "<-";
                put_affine(e);
            }
        }
        for (const FfnOp& op : b.ops) {
            os << "O(" << static_cast<int>(op.kind) << "," << op.dst << ","
               << op.gate << ")";
            put_affine(op.expr);
            for (int r : op.key_regs) os << r << ",";
            for (const auto& [k, v] : op.table) {
                for (long long x : k) os << x << ":";
                char buf[40];
                std::snprintf(buf, sizeof buf, "=%.17g;", v);
                os << buf;
            }
        }
        os << "}";
    }
    return itl::fnv1a64(os.str());
}

std::vector<FactResult> verify_facts(const CircuitProgram& prog, int attr,
                                     std::string_view name) {
    std::vector<FactResult> out;
    const int A = static_cast<int>(prog.config.attributes.size());
    const std::string Q = render_question(prog, attr, name);
    const std::string T = render_target(prog, attr, name);
    const std::vector<int> full = tokenize(Q + T);
    const CircuitTrace tr = run_forward(prog, full);
    const int P = tr.positions;

    const int len1 = static_cast<int>(prog.phi1_tokens[attr].size());
    const int nlen = static_cast<int>(tokenize(name).size());
    const int qm = len1 + nlen +
                   static_cast<int>(prog.phi3_tokens[attr].size()) - 1;
    const int lenP = static_cast<int>(prog.prefix_tokens[attr].size());
    const int qend = qm + lenP;
    const int d = qend - (len1 - 1) - 1;

    auto add = [&](const std::string& fact, bool pass,
                   const std::string& detail = "") {
        out.push_back({fact, pass, detail});
    };
    auto fail_at = [](int slab, int p) {
        return "block " + std::to_string(slab) + " position " +
               std::to_string(p);
    };

    // Fact 1: every y_k above every token encodes its absolute position.
    {
        bool ok = true;
        std::string where;
        for (int k = 1; k <= kNumBlocks && ok; ++k)
            for (int p = 0; p < P; ++p)
                if (tr.at(k, p, kPos) != p) {
                    ok = false;
                    where = fail_at(k, p);
                    break;
                }
        add("absolute position encoded in every block", ok, where);
    }
    // Fact 2: y3 attribute flags — a raised exactly at the last token of
    // phi1(a), all other attributes never raised.
    {
        bool ok = true;
        std::string where;
        for (int a = 0; a < A && ok; ++a)
            for (int p = 0; p < P; ++p) {
                double want = (a == attr && p == len1 - 1) ? 1.0 : 0.0;
                if (tr.at(3, p, flag_reg(A, a)) != want) {
                    ok = false;
                    where = "attribute " + std::to_string(a) + " " +
                            fail_at(3, p);
                    break;
                }
            }
        add("attribute flag raised only above the last token of phi1(a)", ok,
            where);
    }
    // Fact 3: y1 question-mark flag at exactly one position; after-question
    // flag at exactly the positions following it.
    {
        bool ok = true;
        std::string where;
        for (int p = 0; p < P; ++p) {
            if (tr.at(1, p, kIsQ) != (p == qm ? 1.0 : 0.0) ||
                tr.at(1, p, kAfterQ) != (p > qm ? 1.0 : 0.0)) {
                ok = false;
                where = fail_at(1, p);
                break;
            }
        }
        add("question-mark and after-question flags", ok, where);
    }
    // Fact 4: y4 name length above every token after the question mark.
    {
        bool ok = true;
        std::string where;
        for (int p = qm + 1; p < P; ++p)
            if (tr.at(4, p, kNameLen) != nlen) {
                ok = false;
                where = fail_at(4, p);
                break;
            }
        add("name length encoded after the question mark", ok, where);
    }
    // Fact 5: the model outputs chi1(a) . "FOR" after Q.
    {
        RunResult r = run_querying(prog, Q);
        bool ok = !r.malformed &&
                  static_cast<int>(r.tokens.size()) >= lenP &&
                  std::equal(prog.prefix_tokens[attr].begin(),
                             prog.prefix_tokens[attr].end(), r.tokens.begin());
        add("emits chi1(a) followed by FOR", ok);
    }
    // Fact 6: y5 flag raised only above the last token of chi1(a)."FOR".
    {
        bool ok = true;
        std::string where;
        for (int p = 0; p < P; ++p)
            if (tr.at(5, p, kQueryEnd) != (p == qend ? 1.0 : 0.0)) {
                ok = false;
                where = fail_at(5, p);
                break;
            }
        add("query-end flag raised only above the last token of the prefix",
            ok, where);
    }
    // Fact 7: y6 distance to the query end above every later token.
    {
        bool ok = true;
        std::string where;
        for (int p = qend + 1; p < P; ++p)
            if (tr.at(6, p, kDistQend) != p - qend) {
                ok = false;
                where = fail_at(6, p);
                break;
            }
        add("distance from the query end encoded after it", ok, where);
    }
    // Fact 8: y5 copy distance d between the first token of n and the query
    // end, above every token after the query end.
    {
        bool ok = true;
        std::string where;
        for (int p = qend + 1; p < P; ++p)
            if (tr.at(5, p, kCopyDist) != d) {
                ok = false;
                where = fail_at(5, p);
                break;
            }
        add("copy distance d encoded after the query end", ok, where);
    }
    // Fact 9: the model outputs n after the prefix; y7 name-copied flag
    // raised only above the last token of the copy of n.
    {
        RunResult r = run_querying(prog, Q);
        const std::vector<int> ntok = tokenize(name);
        bool ok = !r.malformed &&
                  static_cast<int>(r.tokens.size()) >= lenP + nlen &&
                  std::equal(ntok.begin(), ntok.end(),
                             r.tokens.begin() + lenP);
        std::string where;
        for (int p = 0; p < P && ok; ++p)
            if (tr.at(7, p, kNameCopied) != (p == qend + nlen ? 1.0 : 0.0)) {
                ok = false;
                where = fail_at(7, p);
            }
        add("emits n; name-copied flag only above its last token", ok, where);
    }
    // Fact 10: the model outputs </DB> after n, hence the full T.
    {
        RunResult r = run_querying(prog, Q);
        add("emits </DB> after n, producing T exactly",
            !r.malformed && r.text == T);
    }
    return out;
}

}  // namespace itl::circuit
