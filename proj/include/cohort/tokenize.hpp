#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cohort {

/// One lowercase alphanumeric run. Offsets are byte offsets into the source,
/// end exclusive. `sentence` counts the '.' and ';' seen before the token.
struct Token {
    std::string text;
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t sentence = 0;

    bool operator==(const Token&) const = default;
};

namespace detail {

inline bool is_token_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

inline char fold(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

} // namespace detail

inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t sentence = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        auto c = static_cast<unsigned char>(text[i]);
        if (!detail::is_token_byte(c)) {
            if (c == '.' || c == ';')
                ++sentence;
            ++i;
            continue;
        }
        Token t;
        t.start = i;
        while (i < text.size() && detail::is_token_byte(static_cast<unsigned char>(text[i])))
            t.text.push_back(detail::fold(text[i++]));
        t.end = i;
        t.sentence = sentence;
        out.push_back(std::move(t));
    }
    return out;
}

inline std::vector<std::string> token_strings(std::string_view text) {
    std::vector<std::string> out;
    for (auto& t : tokenize(text))
        out.push_back(std::move(t.text));
    return out;
}

/// Tokens joined by single spaces; the normal form used for phrase lookups.
inline std::string normalize_phrase(std::string_view text) {
    std::string out;
    for (const auto& t : tokenize(text)) {
        if (!out.empty())
            out.push_back(' ');
        out += t.text;
    }
    return out;
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out)
        c = detail::fold(c);
    return out;
}

} // namespace cohort
