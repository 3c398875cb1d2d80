#include <string>
#include <vector>

#include "doctest.h"
#include "itl/factstore.hpp"
#include "itl/rng.hpp"
#include "itl/textcodec.hpp"

using namespace itl::textcodec;
using itl::SplitMix64;
namespace factstore = itl::factstore;
using factstore::Dialog;
using factstore::Turn;
using factstore::TurnSource;

TEST_SUITE("textcodec") {

TEST_CASE("byte-level encoding basics") {
    CHECK(encode_text("A") == std::vector<Token>{65});
    CHECK(encode_text("") == std::vector<Token>{});
    CHECK(decode_text(encode_text("Hello, world?")) == "Hello, world?");

    CHECK(kVocabSize == 260);
    CHECK(kContext == 257);
    CHECK(kUser == 256);
    CHECK(kAssistant == 257);
    CHECK(kDatabase == 258);
    CHECK(kEod == 259);

    std::vector<Token> with_special = {65, kEod};
    CHECK_THROWS_AS(decode_text(with_special), StructureError);
}

TEST_CASE("text round-trip over random byte strings") {
    SplitMix64 rng(17);
    for (int rep = 0; rep < 200; ++rep) {
        std::string s;
        int len = static_cast<int>(rng.next() % 50);
        for (int i = 0; i < len; ++i)
            s.push_back(static_cast<char>(rng.next() % 256));
        auto toks = encode_text(s);
        REQUIRE(toks.size() == s.size());
        for (Token t : toks) {
            REQUIRE(t >= 0);
            REQUIRE(t <= 255);
        }
        CHECK(decode_text(toks) == s);
    }
}

TEST_CASE("in-weight dialog layout and loss mask") {
    Dialog d;
    d.turns.push_back({TurnSource::user, "Where was X born?"});
    d.turns.push_back({TurnSource::assistant, "X was born in Kenya."});
    EncodedDialog e = encode_dialog(d);

    // <user> q... <assistant> a... <eod>
    std::size_t qlen = d.turns[0].content.size();
    std::size_t alen = d.turns[1].content.size();
    REQUIRE(e.tokens.size() == 1 + qlen + 1 + alen + 1);
    REQUIRE(e.loss_mask.size() == e.tokens.size());
    CHECK(e.tokens[0] == kUser);
    CHECK(e.tokens[1 + qlen] == kAssistant);
    CHECK(e.tokens.back() == kEod);

    // The user turn (marker + content) and the <assistant> marker itself are
    // never loss targets; assistant content and <eod> always are.
    for (std::size_t i = 0; i <= 1 + qlen; ++i) CHECK(e.loss_mask[i] == 0);
    for (std::size_t i = 2 + qlen; i < e.tokens.size(); ++i)
        CHECK(e.loss_mask[i] == 1);
}

TEST_CASE("in-tool dialog: the hand-over <database> token is a target") {
    Dialog d;
    d.turns.push_back({TurnSource::user, "Q?"});
    d.turns.push_back({TurnSource::assistant, "call"});
    d.turns.push_back({TurnSource::database, "val"});
    d.turns.push_back({TurnSource::assistant, "answer."});
    EncodedDialog e = encode_dialog(d);

    // <user> "Q?" <assistant> "call" <database> "val" <assistant> "answer." <eod>
    std::vector<Token> expect = {kUser, 'Q', '?', kAssistant, 'c', 'a', 'l',
                                 'l', kDatabase, 'v', 'a', 'l', kAssistant,
                                 'a', 'n', 's', 'w', 'e', 'r', '.', kEod};
    CHECK(e.tokens == expect);
    std::vector<std::uint8_t> mask = {0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0,
                                      0, 0, 1, 1, 1, 1, 1, 1, 1, 1};
    // Markers: <user>=0, <assistant>=0; assistant bytes=1; <database> after an
    // assistant turn = 1 (the model must emit the hand-over); database bytes=0;
    // <eod>=1.
    CHECK(e.loss_mask == mask);

    int n_assistant = 0, n_database = 0, n_user = 0;
    for (Token t : e.tokens) {
        n_assistant += t == kAssistant;
        n_database += t == kDatabase;
        n_user += t == kUser;
    }
    CHECK(n_user == 1);
    CHECK(n_assistant == 2);
    CHECK(n_database == 1);
}

TEST_CASE("dialogs longer than the context are refused") {
    Dialog d;
    d.turns.push_back({TurnSource::user, std::string(300, 'x')});
    d.turns.push_back({TurnSource::assistant, "y"});
    CHECK_THROWS_AS(encode_dialog(d), LengthError);
}

TEST_CASE("decode_stream inverts encode_dialog") {
    auto pools = factstore::build_value_pools(19);
    factstore::GenConfig cfg;
    cfg.n_names = 8;
    cfg.seed = 19;
    auto db = factstore::build_database(cfg, pools);
    for (auto regime : {factstore::Regime::in_weight,
                        factstore::Regime::in_tool})
        for (const Dialog& d : factstore::build_dialogs(db, regime)) {
            EncodedDialog e = encode_dialog(d);
            DecodedDialog back = decode_stream(e.tokens);
            CHECK(back.complete);
            CHECK(back.dialog.turns == d.turns);
        }
}

TEST_CASE("decode_stream on truncated and malformed streams") {
    std::vector<Token> partial = {kUser, 'Q', kAssistant, 'a', 'b'};
    DecodedDialog out = decode_stream(partial);
    CHECK(!out.complete);
    REQUIRE(out.dialog.turns.size() == 2);
    CHECK(out.dialog.turns[1] == Turn{TurnSource::assistant, "ab"});

    CHECK_THROWS_AS(decode_stream(std::vector<Token>{}), StructureError);
    CHECK_THROWS_AS(decode_stream(std::vector<Token>{kAssistant, 'x'}),
                    StructureError);
    CHECK_THROWS_AS(decode_stream(std::vector<Token>{'x', kUser}),
                    StructureError);
    CHECK_THROWS_AS(decode_stream(std::vector<Token>{kUser, 'q', kEod, 'x'}),
                    StructureError);
}

}  // TEST_SUITE
