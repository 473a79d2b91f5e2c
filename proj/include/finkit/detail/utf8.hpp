#ifndef FINKIT_DETAIL_UTF8_HPP
#define FINKIT_DETAIL_UTF8_HPP

#include <cstddef>
#include <string_view>

namespace finkit::detail {

struct Codepoint {
    char32_t value;
    std::size_t length; // bytes consumed, >= 1
};

/// Decodes one codepoint at `pos`. Malformed sequences decode as U+FFFD
/// consuming a single byte, so scanning always makes progress.
inline Codepoint decode_utf8(std::string_view s, std::size_t pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        return {b0, 1};
    }
    std::size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return {0xFFFD, 1};
    }
    if (pos + len > s.size()) {
        return {0xFFFD, 1};
    }
    for (std::size_t i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) {
            return {0xFFFD, 1};
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, len};
}

inline bool is_space(char32_t cp) {
    switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
    case 0x00A0: case 0x3000: case 0x2028: case 0x2029:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200A;
    }
}

/// CJK unified ideographs, extensions and compatibility blocks (same ranges as
/// the BERT basic tokenizer).
inline bool is_cjk(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF)
        || (cp >= 0x20000 && cp <= 0x2A6DF) || (cp >= 0x2A700 && cp <= 0x2B73F)
        || (cp >= 0x2B740 && cp <= 0x2B81F) || (cp >= 0x2B820 && cp <= 0x2CEAF)
        || (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x2F800 && cp <= 0x2FA1F);
}

/// Number of codepoints in `s`.
inline std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (std::size_t pos = 0; pos < s.size(); pos += decode_utf8(s, pos).length) {
        ++n;
    }
    return n;
}

} // namespace finkit::detail

#endif
