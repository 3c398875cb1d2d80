// The retrieval system: parses `FIND <attr> FOR <name>` queries out of
// assistant text, executes them against a keyed store, and orchestrates the
// generate -> query -> inject -> resume dialog loop.
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "itl/factstore.hpp"
#include "itl/generate.hpp"
#include "itl/textcodec.hpp"

namespace itl::toolagent {

inline constexpr std::string_view kNotFound = "ERROR: not found";

struct ToolQuery {
    factstore::Attribute attribute;
    std::string full_name;
};

enum class ParseFailure {
    none,
    no_fenced_block,
    missing_find,
    unknown_field,
    missing_for,
    empty_name,
};
const char* parse_failure_name(ParseFailure f);

struct ParseResult {
    std::optional<ToolQuery> query;
    ParseFailure failure = ParseFailure::none;
    bool ok() const { return query.has_value(); }
};

ParseResult parse_query(std::string_view assistant_text);

class RetrievalSystem {
public:
    static RetrievalSystem from_database(const factstore::FactDatabase& db);
    // Rebuilds the keyed store from a JSONL dataset file.
    static RetrievalSystem from_jsonl(const std::string& path);

    void insert(const std::string& full_name, factstore::Attribute attr,
                const std::string& value);
    // Exact-match lookup; misses and parse failures come back as the
    // in-band error string, never as an exception.
    std::string execute(const ToolQuery& q) const;
    std::string execute(const ParseResult& p) const;
    std::size_t size() const { return store_.size(); }

private:
    std::unordered_map<std::string, std::string> store_;
};

struct Transcript {
    factstore::Dialog dialog;
    bool tool_called = false;
    std::string tool_query_raw;
    std::string final_answer;
    enum class Halt { eod, budget, overflow } halted_reason = Halt::budget;
};

// Runs the multi-turn loop with an arbitrary next-token policy.
Transcript run_dialog(const neuralcore::NextTokenFn& next_token,
                      const std::string& question, const RetrievalSystem& rs,
                      int budget, int context = textcodec::kContext);

Transcript run_dialog(const neuralcore::ModelState& model,
                      const std::string& question, const RetrievalSystem& rs,
                      int budget);

// Extracts the value from a final answer turn by locating an attribute's
// answer connector; empty when no connector matches.
std::string extract_answer_value(std::string_view assistant_text);

}  // namespace itl::toolagent
