#include <algorithm>
#include <cstdio>
#include <set>
#include <string>

#include "doctest.h"
#include "itl/factstore.hpp"

using namespace itl::factstore;

namespace {

const PersonName kKenny{"Kenny", "McRoy"};

// Recover (attribute, name) from a rendered question using only the four
// templates; returns the number of templates that matched.
int reparse_question(const std::string& q, Attribute* attr_out,
                     std::string* name_out) {
    int matches = 0;
    for (const AttributeSpec& t : attribute_templates()) {
        if (q.size() <= t.q_prefix.size() + t.q_suffix.size()) continue;
        if (q.compare(0, t.q_prefix.size(), t.q_prefix) != 0) continue;
        if (q.compare(q.size() - t.q_suffix.size(), t.q_suffix.size(),
                      t.q_suffix) != 0)
            continue;
        ++matches;
        *attr_out = t.id;
        *name_out = q.substr(t.q_prefix.size(),
                             q.size() - t.q_prefix.size() - t.q_suffix.size());
    }
    return matches;
}

}  // namespace

TEST_SUITE("factstore") {

TEST_CASE("rendering matches the published dialog format exactly") {
    CHECK(render_question(kKenny, Attribute::birth_date) ==
          "When was Kenny McRoy born?");
    CHECK(render_answer(kKenny, Attribute::birth_date, "19/05/1998") ==
          "Kenny McRoy was born on 19/05/1998.");
    CHECK(render_tool_call(kKenny, Attribute::birth_date) ==
          "To answer this question I will make a request to the database:\n"
          "```sql\nFIND birth_date FOR Kenny McRoy\n```");

    CHECK(render_question(kKenny, Attribute::birth_place) ==
          "Where was Kenny McRoy born?");
    CHECK(render_question(kKenny, Attribute::current_address) ==
          "Where does Kenny McRoy currently live?");
    CHECK(render_question(kKenny, Attribute::occupation) ==
          "What does Kenny McRoy do for a living?");
    CHECK(render_answer(kKenny, Attribute::occupation, "chef") ==
          "Kenny McRoy works as chef.");
}

TEST_CASE("value pools have the published sizes") {
    ValuePools pools = build_value_pools(1);
    CHECK(pools.at(Attribute::birth_place).size() == 7);
    CHECK(pools.at(Attribute::birth_date).size() == 16800);
    CHECK(pools.at(Attribute::current_address).size() == 213);
    CHECK(pools.at(Attribute::occupation).size() == 100);

    // The dates are exactly the DD/MM/YYYY grid with day <= 28.
    const auto& dates = pools.at(Attribute::birth_date);
    CHECK(std::find(dates.begin(), dates.end(), "19/05/1998") != dates.end());
    CHECK(std::find(dates.begin(), dates.end(), "29/05/1998") == dates.end());
    for (const std::string& d : dates) REQUIRE(d.size() == 10);

    // Each pool holds distinct values.
    for (Attribute a : kAllAttributes) {
        std::set<std::string> uniq(pools.at(a).begin(), pools.at(a).end());
        CHECK(uniq.size() == pools.at(a).size());
    }

    // Same seed reproduces the pools; the seeded pool (addresses) changes
    // with the seed.
    ValuePools again = build_value_pools(1);
    CHECK(again.at(Attribute::current_address) ==
          pools.at(Attribute::current_address));
    ValuePools other = build_value_pools(2);
    CHECK(other.at(Attribute::current_address) !=
          pools.at(Attribute::current_address));
}

TEST_CASE("name generation is deterministic, unique, and family-structured") {
    auto a = generate_names(1000, 7);
    auto b = generate_names(1000, 7);
    CHECK(a == b);
    CHECK(a.size() == 1000);

    std::set<std::string> fulls;
    std::set<std::string> lasts;
    for (const PersonName& n : a) {
        fulls.insert(n.full());
        lasts.insert(n.last);
    }
    CHECK(fulls.size() == 1000);
    // Last names come from a pool of ceil(count/4) families.
    CHECK(lasts.size() <= 250);
    CHECK(lasts.size() > 50);

    auto c = generate_names(1000, 8);
    CHECK(c != a);
    CHECK_THROWS(generate_names(0, 1));
}

TEST_CASE("databases cover names x attributes and are reproducible") {
    ValuePools pools = build_value_pools(3);
    GenConfig cfg;
    cfg.n_names = 32;
    cfg.seed = 3;
    FactDatabase db = build_database(cfg, pools);
    CHECK(db.n_facts() == 32 * 4);
    for (int i = 0; i < db.n_facts(); ++i) {
        Fact f = db.fact(i);
        CHECK(f.value == db.value_of(i / 4, f.attr));
        const auto& pool = pools.at(f.attr);
        CHECK(std::find(pool.begin(), pool.end(), f.value) != pool.end());
    }
    FactDatabase again = build_database(cfg, pools);
    CHECK(again.values == db.values);
    CHECK(again.names == db.names);

    GenConfig other = cfg;
    other.seed = 4;
    CHECK(build_database(other, pools).values != db.values);
}

TEST_CASE("alpha correlates family attributes but never birth dates") {
    ValuePools pools = build_value_pools(5);
    auto names = generate_names(64, 5);

    FactDatabase flat = build_database_with_names(names, pools, 5, 0.0);
    FactDatabase fam = build_database_with_names(names, pools, 5, 1.0);

    // Stream alignment: dates are identical across alpha values.
    for (std::size_t i = 0; i < names.size(); ++i)
        CHECK(fam.value_of(static_cast<int>(i), Attribute::birth_date) ==
              flat.value_of(static_cast<int>(i), Attribute::birth_date));

    // At alpha=1 every pair sharing a last name shares place, address, and
    // occupation.
    int pairs = 0;
    for (std::size_t i = 0; i < names.size(); ++i)
        for (std::size_t j = i + 1; j < names.size(); ++j) {
            if (names[i].last != names[j].last) continue;
            ++pairs;
            for (Attribute a : {Attribute::birth_place,
                                Attribute::current_address,
                                Attribute::occupation})
                CHECK(fam.value_of(static_cast<int>(i), a) ==
                      fam.value_of(static_cast<int>(j), a));
        }
    CHECK(pairs > 0);

    // At alpha=0 the same-family addresses are not all shared (213 choices,
    // many family pairs: a full coincidence is effectively impossible).
    int shared = 0;
    for (std::size_t i = 0; i < names.size(); ++i)
        for (std::size_t j = i + 1; j < names.size(); ++j)
            if (names[i].last == names[j].last &&
                flat.value_of(static_cast<int>(i), Attribute::current_address) ==
                    flat.value_of(static_cast<int>(j),
                                  Attribute::current_address))
                ++shared;
    CHECK(shared < pairs);
}

TEST_CASE("dialog construction per regime") {
    ValuePools pools = build_value_pools(9);
    GenConfig cfg;
    cfg.n_names = 4;
    cfg.seed = 9;
    FactDatabase db = build_database(cfg, pools);

    auto iw = build_dialogs(db, Regime::in_weight);
    REQUIRE(iw.size() == 16);
    for (const Dialog& d : iw) {
        REQUIRE(d.turns.size() == 2);
        CHECK(d.turns[0].source == TurnSource::user);
        CHECK(d.turns[1].source == TurnSource::assistant);
        CHECK(d.turns[1].content.find(d.answer) != std::string::npos);
    }

    auto it = build_dialogs(db, Regime::in_tool);
    REQUIRE(it.size() == 16);
    Fact f0 = db.fact(0);
    const Dialog& d0 = it[0];
    REQUIRE(d0.turns.size() == 4);
    CHECK(d0.turns[0] == Turn{TurnSource::user,
                              render_question(f0.name, f0.attr)});
    CHECK(d0.turns[1] == Turn{TurnSource::assistant,
                              render_tool_call(f0.name, f0.attr)});
    CHECK(d0.turns[2] == Turn{TurnSource::database, f0.value});
    CHECK(d0.turns[3] == Turn{TurnSource::assistant,
                              render_answer(f0.name, f0.attr, f0.value)});
    CHECK(d0.people_id == 0);
    CHECK(d0.answer == f0.value);
}

TEST_CASE("jsonl round-trip and error reporting") {
    ValuePools pools = build_value_pools(11);
    GenConfig cfg;
    cfg.n_names = 8;
    cfg.seed = 11;
    FactDatabase db = build_database(cfg, pools);
    auto dialogs = build_dialogs(db, Regime::in_tool);

    std::string path = "/tmp/itl_test_dialogs.jsonl";
    write_jsonl(dialogs, path);
    auto back = read_jsonl(path);
    CHECK(back == dialogs);
    std::remove(path.c_str());

    auto write_and_read = [&](const char* body) {
        std::string p = "/tmp/itl_test_bad.jsonl";
        std::FILE* f = std::fopen(p.c_str(), "w");
        std::fputs(body, f);
        std::fclose(f);
        try {
            read_jsonl(p);
            std::remove(p.c_str());
            return std::string("(no error)");
        } catch (const JsonlError& e) {
            std::remove(p.c_str());
            return std::string(e.what());
        }
    };

    // Unknown source, broken JSON, and missing keys all fail with the
    // offending line number.
    std::string good =
        R"({"dialog":[{"source":"user","content":"q"}],"people_id":0,"answer":"a"})";
    std::string bad_source =
        R"({"dialog":[{"source":"tool","content":"x"}],"people_id":0,"answer":"a"})";
    CHECK(write_and_read((good + "\n" + bad_source + "\n").c_str()).find(
              "line 2") != std::string::npos);
    CHECK(write_and_read("{not json\n").find("line 1") != std::string::npos);
    CHECK(write_and_read(R"({"people_id":0,"answer":"a"})").find("line 1") !=
          std::string::npos);
    CHECK_THROWS_AS(read_jsonl("/tmp/itl_no_such_file.jsonl"), JsonlError);
}

TEST_CASE("every rendered question re-parses to a unique attribute and name") {
    auto names = generate_names(300, 13);
    int total = 0;
    for (const PersonName& n : names)
        for (Attribute a : kAllAttributes) {
            std::string q = render_question(n, a);
            Attribute got_attr{};
            std::string got_name;
            REQUIRE(reparse_question(q, &got_attr, &got_name) == 1);
            CHECK(got_attr == a);
            CHECK(got_name == n.full());
            ++total;
        }
    CHECK(total == 1200);
}

}  // TEST_SUITE
