// Byte-level tokenizer with four dialog special tokens and the chat
// template that maps dialogs to token sequences with a per-token loss mask.
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "itl/factstore.hpp"

namespace itl::textcodec {

using Token = int;

inline constexpr Token kUser = 256;
inline constexpr Token kAssistant = 257;
inline constexpr Token kDatabase = 258;
inline constexpr Token kEod = 259;
inline constexpr int kVocabSize = 260;
inline constexpr int kContext = 257;

struct LengthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StructureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EncodedDialog {
    std::vector<Token> tokens;
    // loss_mask[i] is true iff token i is one the assistant must produce:
    // assistant-turn content bytes, the <database> hand-over token after a
    // tool call, and the final <eod>.
    std::vector<std::uint8_t> loss_mask;
};

struct DecodedDialog {
    factstore::Dialog dialog;
    bool complete = false;  // false when the stream lacks <eod>
};

std::vector<Token> encode_text(std::string_view s);
// Raw-byte tokens only; special tokens are a StructureError here.
std::string decode_text(std::span<const Token> tokens);

EncodedDialog encode_dialog(const factstore::Dialog& d);
DecodedDialog decode_stream(std::span<const Token> tokens);

inline Token source_token(factstore::TurnSource s) {
    switch (s) {
        case factstore::TurnSource::user: return kUser;
        case factstore::TurnSource::assistant: return kAssistant;
        case factstore::TurnSource::database: return kDatabase;
    }
    return kUser;
}

}  // namespace itl::textcodec
