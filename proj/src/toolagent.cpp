#include "itl/toolagent.hpp"

#include <algorithm>
#include <memory>

namespace itl::toolagent {

using factstore::Attribute;
using factstore::Dialog;
using factstore::TurnSource;
using neuralcore::InferenceSession;
using neuralcore::NextTokenFn;
namespace tc = textcodec;

const char* parse_failure_name(ParseFailure f) {
    switch (f) {
        case ParseFailure::none: return "none";
        case ParseFailure::no_fenced_block: return "no_fenced_block";
        case ParseFailure::missing_find: return "missing_find";
        case ParseFailure::unknown_field: return "unknown_field";
        case ParseFailure::missing_for: return "missing_for";
        case ParseFailure::empty_name: return "empty_name";
    }
    return "?";
}

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t'; }

std::string store_key(std::string_view full_name, Attribute a) {
    std::string k(full_name);
    k += '\x1f';
    k += factstore::attribute_template(a).tool_field;
    return k;
}

}  // namespace

ParseResult parse_query(std::string_view text) {
    // Locate the ```sql fenced block.
    std::size_t open = text.find("```sql");
    if (open == std::string_view::npos)
        return {std::nullopt, ParseFailure::no_fenced_block};
    std::size_t body_start = text.find('\n', open);
    if (body_start == std::string_view::npos)
        return {std::nullopt, ParseFailure::no_fenced_block};
    ++body_start;
    std::size_t close = text.find("```", body_start);
    std::string_view body = close == std::string_view::npos
                                ? text.substr(body_start)
                                : text.substr(body_start, close - body_start);
    // First line of the body carries the query.
    std::size_t eol = body.find('\n');
    std::string_view line = eol == std::string_view::npos ? body
                                                          : body.substr(0, eol);

    std::size_t i = 0;
    auto skip_ws = [&] { while (i < line.size() && is_ws(line[i])) ++i; };
    auto take_word = [&] {
        std::size_t start = i;
        while (i < line.size() && !is_ws(line[i])) ++i;
        return line.substr(start, i - start);
    };

    skip_ws();
    if (take_word() != "FIND") return {std::nullopt, ParseFailure::missing_find};
    skip_ws();
    std::string_view field = take_word();
    if (field.empty()) return {std::nullopt, ParseFailure::missing_for};
    skip_ws();
    if (take_word() != "FOR") return {std::nullopt, ParseFailure::missing_for};
    if (i < line.size() && is_ws(line[i])) ++i;  // single separating space
    std::string_view name = line.substr(i);      // verbatim to end of line
    if (name.empty()) return {std::nullopt, ParseFailure::empty_name};

    for (Attribute a : factstore::kAllAttributes)
        if (factstore::attribute_template(a).tool_field == field)
            return {ToolQuery{a, std::string(name)}, ParseFailure::none};
    return {std::nullopt, ParseFailure::unknown_field};
}

RetrievalSystem RetrievalSystem::from_database(
    const factstore::FactDatabase& db) {
    RetrievalSystem rs;
    for (int i = 0; i < db.n_facts(); ++i) {
        auto f = db.fact(i);
        rs.insert(f.name.full(), f.attr, f.value);
    }
    return rs;
}

RetrievalSystem RetrievalSystem::from_jsonl(const std::string& path) {
    RetrievalSystem rs;
    for (const Dialog& d : factstore::read_jsonl(path)) {
        if (d.turns.empty()) continue;
        // Recover (attribute, name) from the question turn.
        const std::string& q = d.turns.front().content;
        for (Attribute a : factstore::kAllAttributes) {
            const auto& t = factstore::attribute_template(a);
            if (q.starts_with(t.q_prefix) && q.ends_with(t.q_suffix) &&
                q.size() >= t.q_prefix.size() + t.q_suffix.size()) {
                std::string name = q.substr(
                    t.q_prefix.size(),
                    q.size() - t.q_prefix.size() - t.q_suffix.size());
                rs.store_[store_key(name, a)] = d.answer;
                break;
            }
        }
    }
    return rs;
}

void RetrievalSystem::insert(const std::string& full_name, Attribute attr,
                             const std::string& value) {
    store_[store_key(full_name, attr)] = value;
}

std::string RetrievalSystem::execute(const ToolQuery& q) const {
    auto it = store_.find(store_key(q.full_name, q.attribute));
    if (it == store_.end()) return std::string(kNotFound);
    return it->second;
}

std::string RetrievalSystem::execute(const ParseResult& p) const {
    if (!p.ok()) return std::string(kNotFound);
    return execute(*p.query);
}

std::string extract_answer_value(std::string_view text) {
    for (Attribute a : factstore::kAllAttributes) {
        const auto& connector = factstore::attribute_template(a).a_connector;
        std::size_t pos = text.find(connector);
        if (pos == std::string_view::npos) continue;
        std::string_view v = text.substr(pos + connector.size());
        if (v.ends_with('.')) v.remove_suffix(1);
        return std::string(v);
    }
    return {};
}

namespace {

std::string bytes_only(std::span<const int> tokens) {
    std::string s;
    for (int t : tokens)
        if (t >= 0 && t <= 255) s.push_back(static_cast<char>(t));
    return s;
}

}  // namespace

Transcript run_dialog(const NextTokenFn& next_token,
                      const std::string& question, const RetrievalSystem& rs,
                      int budget, int context) {
    Transcript out;
    std::vector<int> tokens;
    tokens.push_back(tc::kUser);
    for (int t : tc::encode_text(question)) tokens.push_back(t);
    tokens.push_back(tc::kAssistant);
    if (static_cast<int>(tokens.size()) >= context) {
        out.halted_reason = Transcript::Halt::overflow;
        return out;
    }

    int spent = 0;
    std::size_t assistant_start = tokens.size();
    bool database_injected = false;
    out.halted_reason = Transcript::Halt::budget;
    while (spent < budget) {
        if (static_cast<int>(tokens.size()) >= context) {
            out.halted_reason = Transcript::Halt::overflow;
            break;
        }
        int next = next_token(tokens);
        tokens.push_back(next);
        ++spent;
        if (next == tc::kEod) {
            out.halted_reason = Transcript::Halt::eod;
            break;
        }
        if (next == tc::kDatabase && !database_injected) {
            // Hand-over: parse the assistant turn, run the query, inject the
            // database turn content and a fresh assistant token.
            out.tool_called = true;
            out.tool_query_raw = bytes_only(
                std::span<const int>(tokens).subspan(assistant_start,
                                                     tokens.size() - 1 -
                                                         assistant_start));
            std::string result = rs.execute(parse_query(out.tool_query_raw));
            auto result_tokens = tc::encode_text(result);
            if (static_cast<int>(tokens.size() + result_tokens.size() + 1) >=
                context) {
                out.halted_reason = Transcript::Halt::overflow;
                break;
            }
            for (int t : result_tokens) tokens.push_back(t);
            tokens.push_back(tc::kAssistant);
            assistant_start = tokens.size();
            database_injected = true;
        }
    }

    auto decoded = tc::decode_stream(tokens);
    out.dialog = std::move(decoded.dialog);
    for (auto it = out.dialog.turns.rbegin(); it != out.dialog.turns.rend();
         ++it) {
        if (it->source == TurnSource::assistant) {
            out.final_answer = extract_answer_value(it->content);
            break;
        }
    }
    return out;
}

Transcript run_dialog(const neuralcore::ModelState& model,
                      const std::string& question, const RetrievalSystem& rs,
                      int budget) {
    auto session = std::make_shared<InferenceSession>(model);
    auto consumed = std::make_shared<std::size_t>(0);
    NextTokenFn fn = [session, consumed](std::span<const int> toks) -> int {
        std::span<const double> logits;
        for (std::size_t i = *consumed; i < toks.size(); ++i)
            logits = session->step(toks[i]);
        *consumed = toks.size();
        return static_cast<int>(
            std::max_element(logits.begin(), logits.end()) - logits.begin());
    };
    return run_dialog(fn, question, rs, budget, model.config.context);
}

}  // namespace itl::toolagent
