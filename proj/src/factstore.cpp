#include "itl/factstore.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "itl/rng.hpp"
#include "json.hpp"

namespace itl::factstore {
namespace {

const char* kBirthPlaces[7] = {"France", "Germany", "Italy",  "Spain",
                               "Japan",  "Kenya",   "Brazil"};

const char* kOccupations[100] = {
    "teacher",      "nurse",        "carpenter",    "electrician",
    "plumber",      "architect",    "baker",        "butcher",
    "florist",      "gardener",     "librarian",    "pharmacist",
    "dentist",      "surgeon",      "pediatrician", "optician",
    "veterinarian", "physicist",    "chemist",      "biologist",
    "geologist",    "astronomer",   "economist",    "accountant",
    "auditor",      "banker",       "cashier",      "salesperson",
    "marketer",     "journalist",   "editor",       "translator",
    "interpreter",  "novelist",     "poet",         "playwright",
    "actor",        "director",     "producer",     "composer",
    "pianist",      "violinist",    "drummer",      "singer",
    "painter",      "sculptor",     "photographer", "illustrator",
    "animator",     "designer",     "tailor",       "cobbler",
    "jeweler",      "watchmaker",   "blacksmith",   "welder",
    "machinist",    "mechanic",     "pilot",        "navigator",
    "sailor",       "fisherman",    "farmer",       "shepherd",
    "beekeeper",    "winemaker",    "brewer",       "chef",
    "waiter",       "bartender",    "barista",      "sommelier",
    "firefighter",  "paramedic",    "detective",    "lawyer",
    "judge",        "notary",       "surveyor",     "cartographer",
    "archivist",    "curator",      "historian",    "archaeologist",
    "linguist",     "psychologist", "sociologist",  "anthropologist",
    "statistician", "actuary",      "programmer",   "engineer",
    "astronaut",    "meteorologist","zookeeper",    "forester",
    "locksmith",    "glazier",      "roofer",       "mason"};

const char* kStreetNames[24] = {
    "Maple",  "Oak",    "Cedar",  "Birch",  "Willow",  "Aspen",
    "Elm",    "Juniper","Linden", "Walnut", "Chestnut","Poplar",
    "Laurel", "Hazel",  "Rowan",  "Alder",  "Magnolia","Sycamore",
    "Cypress","Spruce", "Holly",  "Myrtle", "Olive",   "Acacia"};

const char* kStreetKinds[4] = {"Street", "Avenue", "Road", "Lane"};

const char* kCities[16] = {
    "Lyon",    "Bremen",  "Turin",   "Seville", "Osaka",  "Nakuru",
    "Recife",  "Nantes",  "Leipzig", "Verona",  "Bilbao", "Sendai",
    "Kisumu",  "Salvador","Toulouse","Dresden"};

const char* kFirstSyllables[20] = {"Ka", "Mi", "To", "Ra", "Se", "Lu", "No",
                                   "Vi", "Da", "Fe", "Go", "Hi", "Ju", "Be",
                                   "Ma", "Ni", "Pa", "Ro", "Ta", "We"};
const char* kMidSyllables[16] = {"ri", "la", "no", "mi", "sa", "te", "vi", "do",
                                 "ra", "ne", "ki", "lo", "ma", "su", "be", "ta"};
const char* kLastPrefixes[20] = {"Mc",   "Van ", "De",  "O",   "Mac", "Del",
                                 "Bar",  "Cor",  "Fal", "Gal", "Har", "Kol",
                                 "Lan",  "Mor",  "Nor", "Pel", "Ros", "Sal",
                                 "Tor",  "Wal"};
const char* kLastStems[24] = {"ton", "berg", "field", "wood", "stone", "brook",
                              "roy", "ham",  "ford",  "gate", "well",  "march",
                              "dale","holm", "strand","vik",  "mont",  "court",
                              "land","mere", "shaw",  "worth","ridge", "fell"};

std::string make_first_name(SplitMix64& g) {
    std::string s = kFirstSyllables[g.below(20)];
    int extra = 1 + static_cast<int>(g.below(2));
    for (int i = 0; i < extra; ++i) s += kMidSyllables[g.below(16)];
    return s;
}

std::string make_last_name(SplitMix64& g) {
    std::string s = kLastPrefixes[g.below(20)];
    s += kLastStems[g.below(24)];
    int extra = static_cast<int>(g.below(2));
    for (int i = 0; i < extra; ++i) s += kMidSyllables[g.below(16)];
    return s;
}

const std::array<AttributeSpec, 4>& templates_storage() {
    static const std::array<AttributeSpec, 4> t = {{
        {Attribute::birth_place, {}, "Where was ", " born?", " was born in ",
         "birth_place"},
        {Attribute::birth_date, {}, "When was ", " born?", " was born on ",
         "birth_date"},
        {Attribute::current_address, {}, "Where does ", " currently live?",
         " currently lives at ", "current_address"},
        {Attribute::occupation, {}, "What does ", " do for a living?",
         " works as ", "occupation"},
    }};
    return t;
}

TurnSource parse_source(const std::string& s, int line_no) {
    if (s == "user") return TurnSource::user;
    if (s == "assistant") return TurnSource::assistant;
    if (s == "database") return TurnSource::database;
    throw JsonlError("line " + std::to_string(line_no) +
                     ": unknown turn source \"" + s + "\"");
}

const char* source_name(TurnSource s) {
    switch (s) {
        case TurnSource::user: return "user";
        case TurnSource::assistant: return "assistant";
        case TurnSource::database: return "database";
    }
    return "?";
}

}  // namespace

const std::array<AttributeSpec, 4>& attribute_templates() {
    return templates_storage();
}

const AttributeSpec& attribute_template(Attribute a) {
    return templates_storage()[static_cast<int>(a)];
}

std::vector<PersonName> generate_names(int count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("generate_names: count < 1");
    SplitMix64 g(derive_seed(seed, 0x4e414d45));  // "NAME"

    // Family pool of ceil(count/4) last names, so alpha-correlation has
    // shared-family structure to exploit.
    int n_families = (count + 3) / 4;
    std::vector<std::string> families;
    std::set<std::string> seen_last;
    while (static_cast<int>(families.size()) < n_families) {
        std::string l = make_last_name(g);
        if (l.size() > 9) continue;  // leave room for a first name (cap below)
        if (seen_last.insert(l).second) families.push_back(l);
    }

    // Full names are capped so that the longest in-tool dialog (question,
    // tool call, database value, and answer for current_address) still fits
    // the 257-token context.
    constexpr std::size_t kMaxFullName = 14;
    std::vector<PersonName> out;
    std::set<std::string> seen_full;
    out.reserve(count);
    while (static_cast<int>(out.size()) < count) {
        PersonName n{make_first_name(g), families[g.below(families.size())]};
        if (n.full().size() > kMaxFullName) continue;
        if (seen_full.insert(n.full()).second) out.push_back(std::move(n));
    }
    return out;
}

ValuePools build_value_pools(std::uint64_t seed) {
    ValuePools pools;

    pools[Attribute::birth_place].assign(std::begin(kBirthPlaces),
                                         std::end(kBirthPlaces));

    // All 28 * 12 * 50 = 16800 dates DD/MM/YYYY.
    auto& dates = pools[Attribute::birth_date];
    dates.reserve(16800);
    char buf[16];
    for (int y = 1950; y <= 1999; ++y)
        for (int m = 1; m <= 12; ++m)
            for (int d = 1; d <= 28; ++d) {
                std::snprintf(buf, sizeof(buf), "%02d/%02d/%04d", d, m, y);
                dates.emplace_back(buf);
            }

    // 213 seeded addresses "NNN <Street> , <City>".
    SplitMix64 g(derive_seed(seed, 0x41444452));  // "ADDR"
    auto& addrs = pools[Attribute::current_address];
    std::set<std::string> seen;
    while (addrs.size() < 213) {
        std::string a = std::to_string(g.range(1, 999));
        a += " ";
        a += kStreetNames[g.below(24)];
        a += " ";
        a += kStreetKinds[g.below(4)];
        a += " , ";
        a += kCities[g.below(16)];
        if (seen.insert(a).second) addrs.push_back(std::move(a));
    }

    pools[Attribute::occupation].assign(std::begin(kOccupations),
                                        std::end(kOccupations));
    return pools;
}

FactDatabase build_database_with_names(std::vector<PersonName> names,
                                       const ValuePools& pools,
                                       std::uint64_t value_seed, double alpha) {
    FactDatabase db;
    db.names = std::move(names);
    db.gen_seed = value_seed;
    db.alpha = alpha;
    db.values.reserve(db.names.size() * kNumAttributes);

    SplitMix64 g(derive_seed(value_seed, 0x56414c55));  // "VALU"
    for (const PersonName& n : db.names) {
        for (Attribute a : kAllAttributes) {
            const auto& pool = pools.at(a);
            // Both draws are always consumed so that the stream stays
            // aligned across alpha values.
            double x = g.uniform01();
            std::uint64_t v2 = g.below(pool.size());
            std::uint64_t idx = v2;
            // Dates are never family-correlated: only birth place, current
            // address, and occupation are shared by family members.
            if (x < alpha && a != Attribute::birth_date) {
                std::string key = n.last + "\x1f" +
                                  attribute_template(a).tool_field;
                idx = fnv1a64(key.data(), key.size(),
                              derive_seed(value_seed, 0x46414d49)) %  // "FAMI"
                      pool.size();
            }
            db.values.push_back(pool[idx]);
        }
    }
    return db;
}

FactDatabase build_database(const GenConfig& cfg, const ValuePools& pools) {
    auto names = generate_names(cfg.n_names, cfg.seed);
    return build_database_with_names(std::move(names), pools, cfg.seed,
                                     cfg.alpha);
}

std::string render_question(const PersonName& name, Attribute attr) {
    const AttributeSpec& t = attribute_template(attr);
    return t.q_prefix + name.full() + t.q_suffix;
}

std::string render_answer(const PersonName& name, Attribute attr,
                          std::string_view value) {
    const AttributeSpec& t = attribute_template(attr);
    return name.full() + t.a_connector + std::string(value) + ".";
}

std::string render_tool_call(const PersonName& name, Attribute attr) {
    const AttributeSpec& t = attribute_template(attr);
    return "To answer this question I will make a request to the "
           "database:\n```sql\nFIND " +
           t.tool_field + " FOR " + name.full() + "\n```";
}

Dialog build_dialog(const FactDatabase& db, int fact_idx, Regime regime) {
    Fact f = db.fact(fact_idx);
    Dialog d;
    d.people_id = fact_idx / kNumAttributes;
    d.answer = f.value;
    d.turns.push_back({TurnSource::user, render_question(f.name, f.attr)});
    if (regime == Regime::in_tool) {
        d.turns.push_back(
            {TurnSource::assistant, render_tool_call(f.name, f.attr)});
        d.turns.push_back({TurnSource::database, f.value});
    }
    d.turns.push_back(
        {TurnSource::assistant, render_answer(f.name, f.attr, f.value)});
    return d;
}

std::vector<Dialog> build_dialogs(const FactDatabase& db, Regime regime) {
    std::vector<Dialog> out;
    out.reserve(db.n_facts());
    for (int i = 0; i < db.n_facts(); ++i)
        out.push_back(build_dialog(db, i, regime));
    return out;
}

void write_jsonl(const std::vector<Dialog>& dialogs, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw JsonlError("cannot open for writing: " + path);
    for (const Dialog& d : dialogs) {
        nlohmann::json j;
        j["dialog"] = nlohmann::json::array();
        for (const Turn& t : d.turns)
            j["dialog"].push_back(
                {{"source", source_name(t.source)}, {"content", t.content}});
        j["people_id"] = d.people_id;
        j["answer"] = d.answer;
        f << j.dump() << "\n";
    }
}

std::vector<Dialog> read_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw JsonlError("cannot open for reading: " + path);
    std::vector<Dialog> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw JsonlError("line " + std::to_string(line_no) + ": " +
                             e.what());
        }
        if (!j.is_object() || !j.contains("dialog") || !j.contains("people_id") ||
            !j.contains("answer"))
            throw JsonlError("line " + std::to_string(line_no) +
                             ": missing dialog/people_id/answer");
        Dialog d;
        d.people_id = j["people_id"].get<int>();
        d.answer = j["answer"].get<std::string>();
        for (const auto& t : j["dialog"])
            d.turns.push_back({parse_source(t.at("source"), line_no),
                               t.at("content").get<std::string>()});
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace itl::factstore
