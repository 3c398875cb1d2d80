#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "itl/circuit.hpp"
#include "itl/rng.hpp"

using namespace itl::circuit;
using itl::SplitMix64;

namespace {

std::string random_name(SplitMix64& rng, const std::string& charset,
                        int min_len, int max_len) {
    int len = min_len + static_cast<int>(rng.next() %
                                         (max_len - min_len + 1));
    std::string s;
    for (int i = 0; i < len; ++i)
        s.push_back(charset[rng.next() % charset.size()]);
    return s;
}

}  // namespace

TEST_SUITE("circuit") {

TEST_CASE("tokenizer handles the two template atoms") {
    std::vector<int> t = tokenize("a<DB>b</DB>c");
    CHECK(t == std::vector<int>{'a', kDbOpen, 'b', kDbClose, 'c'});
    CHECK(detokenize(t) == "a<DB>b</DB>c");
    CHECK(tokenize("</DB>").size() == 1);
    CHECK(tokenize("</DB>")[0] == kDbClose);
    CHECK(kAtomCount == 258);
}

TEST_CASE("target rendering uses the tool-call template") {
    CircuitProgram prog = build_circuit(default_config());
    CHECK(render_question(prog, 0, "Nora") == "Where was Nora born?");
    CHECK(render_target(prog, 0, "Nora") ==
          std::string(kChi1Preamble) +
              "<DB> FIND birthplace FOR Nora </DB>");
    CHECK(render_question(prog, 3, "Nora") ==
          "What does Nora do for a living?");
}

TEST_CASE("structure: exactly eight blocks, dim linear in attributes") {
    CircuitProgram p4 = build_circuit(default_config(4));
    CHECK(p4.block_count() == kNumBlocks);
    CircuitProgram p8 = build_circuit(default_config(8));
    CHECK(p8.block_count() == kNumBlocks);
    // dim = fixed registers + 4 per attribute.
    CHECK(p8.layout.dim - p4.layout.dim == 4 * 4);
}

TEST_CASE("all proof Facts hold for every attribute") {
    CircuitProgram prog = build_circuit(default_config());
    for (int a = 0; a < 4; ++a) {
        auto facts = verify_facts(prog, a, "Nora Corworth");
        REQUIRE(facts.size() == 10);
        for (const auto& f : facts) {
            INFO("attr " << a << " / " << f.fact << ": " << f.detail);
            CHECK(f.pass);
        }
    }
}

TEST_CASE("exhaustive exact-match over random names") {
    CircuitProgram prog = build_circuit(default_config());
    SplitMix64 rng(37);
    int total = 0, exact = 0;
    for (int a = 0; a < 4; ++a)
        for (int rep = 0; rep < 200; ++rep) {
            std::string name =
                random_name(rng, prog.config.name_charset, 2, 24);
            RunResult r =
                run_querying(prog, render_question(prog, a, name));
            ++total;
            exact += !r.malformed && r.text == render_target(prog, a, name);
        }
    CHECK(total == 800);
    CHECK(exact == 800);
}

TEST_CASE("single-character names work at the boundary") {
    CircuitProgram prog = build_circuit(default_config());
    for (int a = 0; a < 4; ++a) {
        RunResult r = run_querying(prog, render_question(prog, a, "X"));
        CHECK(!r.malformed);
        CHECK(r.text == render_target(prog, a, "X"));
    }
}

TEST_CASE("questions matching no template are reported malformed") {
    CircuitProgram prog = build_circuit(default_config());
    RunResult r = run_querying(prog, "How tall is Nora Corworth?");
    CHECK(r.malformed);
}

TEST_CASE("parameter count grows linearly with the attribute set") {
    std::vector<int> counts = {2, 4, 8, 16};
    std::vector<double> params;
    for (int c : counts) {
        CircuitProgram prog = build_circuit(default_config(c));
        params.push_back(static_cast<double>(prog.param_count()));
        // Every size still answers its questions exactly.
        RunResult r = run_querying(
            prog, render_question(prog, c - 1, "Abco Demmel"));
        CHECK(r.text == render_target(prog, c - 1, "Abco Demmel"));
    }
    // Doubling the attributes must not double the parameters more than
    // once over: an O(A) construction stays well under ratio 4.5 per 4x.
    CHECK(params[3] / params[1] < 4.5);
    CHECK(params[3] > params[1]);
}

TEST_CASE("weights are frozen: rebuilds are digest-identical") {
    CircuitProgram a = build_circuit(default_config());
    CircuitProgram b = build_circuit(default_config());
    CHECK(a.weights_digest() == b.weights_digest());
    CHECK(a.param_count() == b.param_count());
    // The digest covers the weights, so a different attribute set differs.
    CircuitProgram c = build_circuit(default_config(8));
    CHECK(c.weights_digest() != a.weights_digest());

    // Running queries does not mutate the program.
    std::uint64_t before = a.weights_digest();
    for (int i = 0; i < 10; ++i) run_querying(a, render_question(a, 0, "Nora"));
    CHECK(a.weights_digest() == before);
}

TEST_CASE("assumption violations are refused with the right index") {
    auto expect_assumption = [](CircuitConfig cfg, int which) {
        try {
            build_circuit(cfg);
            return -1;
        } catch (const AssumptionError& e) {
            return e.assumption;
        }
    };

    // 1: empty phi1.
    CircuitConfig c1 = default_config();
    c1.attributes[1].phi1 = "";
    CHECK(expect_assumption(c1, 1) == 1);

    // 1: duplicate phi1 (not injective).
    CircuitConfig c1b = default_config();
    c1b.attributes[1].phi1 = c1b.attributes[0].phi1;
    CHECK(expect_assumption(c1b, 1) == 1);

    // 2: '?' inside a suffix rather than terminal.
    CircuitConfig c2 = default_config();
    c2.attributes[2].phi3 = " bo?rn";
    CHECK(expect_assumption(c2, 2) == 2);

    // 2: '?' in the name charset.
    CircuitConfig c2b = default_config();
    c2b.name_charset += '?';
    CHECK(expect_assumption(c2b, 2) == 2);

    // 4: one prefix is a suffix-substring of another.
    CircuitConfig c4 = default_config();
    c4.attributes[0].phi1 = "Where was ";
    c4.attributes[1].phi1 = "was ";
    CHECK(expect_assumption(c4, 4) == 4);

    // 5: sequence budget too small for the templates.
    CircuitConfig c5 = default_config();
    c5.max_seq_len = 16;
    CHECK(expect_assumption(c5, 5) == 5);
}

TEST_CASE("inspect exposes the documented registers") {
    CircuitProgram prog = build_circuit(default_config());
    std::string name = "Nora";
    std::string q = render_question(prog, 1, name);  // "When was Nora born?"

    // attr_id: after the query is read, the final position carries 1.0.
    auto attr_id = inspect(prog, q, "attr_id");
    REQUIRE(attr_id.size() == q.size());
    CHECK(attr_id.back()[0] == doctest::Approx(1.0));

    // qmark_pos at the last position points at the terminal '?'.
    auto qmark = inspect(prog, q, "qmark_pos");
    CHECK(qmark.back()[0] == doctest::Approx(static_cast<double>(q.size() - 1)));

    // name_length recovers |n|.
    auto nlen = inspect(prog, q, "name_length");
    CHECK(nlen.back()[0] == doctest::Approx(4.0));

    // Unknown register names are an error.
    CHECK_THROWS(inspect(prog, q, "no_such_register"));
}

TEST_CASE("run_forward trace shape matches blocks and layout") {
    CircuitProgram prog = build_circuit(default_config());
    std::vector<int> toks = tokenize("Where was Al born?");
    CircuitTrace tr = run_forward(prog, toks);
    CHECK(tr.positions == static_cast<int>(toks.size()));
    CHECK(tr.dim == prog.layout.dim);
    CHECK(tr.data.size() ==
          static_cast<std::size_t>(kNumBlocks + 1) * tr.positions * tr.dim);
    // Slab 0 embeds position and token id.
    int pos_reg = prog.layout.reg("absolute_position");
    int tok_reg = prog.layout.reg("current_token");
    for (int p = 0; p < tr.positions; ++p) {
        CHECK(tr.at(0, p, pos_reg) == doctest::Approx(p));
        CHECK(tr.at(0, p, tok_reg) == doctest::Approx(toks[p]));
    }
}

}  // TEST_SUITE
