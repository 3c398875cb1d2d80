// Synthetic biographical fact databases and their rendering into
// question/answer/tool-call strings and multi-turn dialogs.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace itl::factstore {

enum class Attribute : int {
    birth_place = 0,
    birth_date = 1,
    current_address = 2,
    occupation = 3,
};
inline constexpr int kNumAttributes = 4;
inline constexpr std::array<Attribute, 4> kAllAttributes = {
    Attribute::birth_place, Attribute::birth_date,
    Attribute::current_address, Attribute::occupation};

enum class Regime { in_weight, in_tool };

struct PersonName {
    std::string first;
    std::string last;

    std::string full() const { return first + " " + last; }
    bool operator==(const PersonName&) const = default;
};

// Question/answer/tool templates for one attribute. The value pool is
// attached after generation so that a spec can be shared across databases.
struct AttributeSpec {
    Attribute id;
    std::vector<std::string> value_pool;
    std::string q_prefix;     // phi1
    std::string q_suffix;     // phi3 (ends with '?')
    std::string a_connector;  // psi2
    std::string tool_field;   // attribute token in tool queries
};

struct Fact {
    PersonName name;
    Attribute attr;
    std::string value;
};

struct GenConfig {
    int n_names = 0;
    std::uint64_t seed = 0;
    double alpha = 0.0;  // in [0, 1]
    Regime regime = Regime::in_weight;
};

// Complete mapping (name, attribute) -> value over names x all attributes.
struct FactDatabase {
    std::vector<PersonName> names;
    std::vector<std::string> values;  // [name_idx * 4 + attr]
    std::uint64_t gen_seed = 0;
    double alpha = 0.0;

    int n_facts() const { return static_cast<int>(values.size()); }
    const std::string& value_of(int name_idx, Attribute a) const {
        return values[static_cast<std::size_t>(name_idx) * kNumAttributes +
                      static_cast<int>(a)];
    }
    Fact fact(int idx) const {
        return {names[idx / kNumAttributes],
                static_cast<Attribute>(idx % kNumAttributes), values[idx]};
    }
};

enum class TurnSource { user, assistant, database };

struct Turn {
    TurnSource source;
    std::string content;
    bool operator==(const Turn&) const = default;
};

struct Dialog {
    std::vector<Turn> turns;
    int people_id = 0;
    std::string answer;
    bool operator==(const Dialog&) const = default;
};

struct JsonlError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using ValuePools = std::map<Attribute, std::vector<std::string>>;

// Fixed templates (no pools attached).
const std::array<AttributeSpec, 4>& attribute_templates();
const AttributeSpec& attribute_template(Attribute a);

std::vector<PersonName> generate_names(int count, std::uint64_t seed);
ValuePools build_value_pools(std::uint64_t seed);

FactDatabase build_database(const GenConfig& cfg, const ValuePools& pools);
// Same pipeline with an explicit name list; used for OOD databases and for
// mixing several value assignments over one name pool.
FactDatabase build_database_with_names(std::vector<PersonName> names,
                                       const ValuePools& pools,
                                       std::uint64_t value_seed, double alpha);

std::string render_question(const PersonName& name, Attribute attr);
std::string render_answer(const PersonName& name, Attribute attr,
                          std::string_view value);
std::string render_tool_call(const PersonName& name, Attribute attr);

std::vector<Dialog> build_dialogs(const FactDatabase& db, Regime regime);
Dialog build_dialog(const FactDatabase& db, int fact_idx, Regime regime);

void write_jsonl(const std::vector<Dialog>& dialogs, const std::string& path);
std::vector<Dialog> read_jsonl(const std::string& path);

}  // namespace itl::factstore
