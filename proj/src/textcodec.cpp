#include "itl/textcodec.hpp"

namespace itl::textcodec {

using factstore::Dialog;
using factstore::Turn;
using factstore::TurnSource;

std::vector<Token> encode_text(std::string_view s) {
    std::vector<Token> out;
    out.reserve(s.size());
    for (unsigned char c : s) out.push_back(static_cast<Token>(c));
    return out;
}

std::string decode_text(std::span<const Token> tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (Token t : tokens) {
        if (t < 0 || t > 255)
            throw StructureError("decode_text: special token " +
                                 std::to_string(t) + " in byte stream");
        out.push_back(static_cast<char>(t));
    }
    return out;
}

EncodedDialog encode_dialog(const Dialog& d) {
    EncodedDialog e;
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
        const Turn& t = d.turns[i];
        bool prev_was_assistant =
            i > 0 && d.turns[i - 1].source == TurnSource::assistant;
        // The model hands over to the tool by emitting <database> itself.
        bool boundary_is_target =
            t.source == TurnSource::database && prev_was_assistant;
        e.tokens.push_back(source_token(t.source));
        e.loss_mask.push_back(boundary_is_target ? 1 : 0);
        bool content_is_target = t.source == TurnSource::assistant;
        for (Token tok : encode_text(t.content)) {
            e.tokens.push_back(tok);
            e.loss_mask.push_back(content_is_target ? 1 : 0);
        }
    }
    e.tokens.push_back(kEod);
    e.loss_mask.push_back(1);
    if (static_cast<int>(e.tokens.size()) > kContext)
        throw LengthError("encoded dialog needs " +
                          std::to_string(e.tokens.size()) +
                          " tokens, context is " + std::to_string(kContext));
    return e;
}

DecodedDialog decode_stream(std::span<const Token> tokens) {
    DecodedDialog out;
    if (tokens.empty()) throw StructureError("empty token stream");
    if (tokens[0] != kUser)
        throw StructureError("stream must begin with <user>, got token " +
                             std::to_string(tokens[0]));

    Dialog& d = out.dialog;
    std::string content;
    TurnSource current = TurnSource::user;
    bool in_turn = false;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        Token t = tokens[i];
        if (t >= 0 && t <= 255) {
            if (!in_turn)
                throw StructureError("byte token before any turn marker");
            content.push_back(static_cast<char>(t));
            continue;
        }
        if (out.complete)
            throw StructureError("token after <eod>");
        if (in_turn) {
            d.turns.push_back({current, std::move(content)});
            content.clear();
        }
        switch (t) {
            case kUser: current = TurnSource::user; in_turn = true; break;
            case kAssistant: current = TurnSource::assistant; in_turn = true; break;
            case kDatabase: current = TurnSource::database; in_turn = true; break;
            case kEod: out.complete = true; in_turn = false; break;
            default:
                throw StructureError("unknown token id " + std::to_string(t));
        }
    }
    if (in_turn) d.turns.push_back({current, std::move(content)});
    return out;
}

}  // namespace itl::textcodec
