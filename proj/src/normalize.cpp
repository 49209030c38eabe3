#include "batchflip/normalize.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace batchflip {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

// Decode one UTF-8 codepoint starting at `i`; advances `i`. Returns
// kReplacement on malformed input (and advances past one byte).
char32_t decode_utf8(std::string_view s, std::size_t& i, bool* bad) {
    const auto byte = [&](std::size_t k) {
        return static_cast<unsigned char>(s[k]);
    };
    const unsigned char b0 = byte(i);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
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
        ++i;
        if (bad) *bad = true;
        return kReplacement;
    }
    if (i + static_cast<std::size_t>(len) > s.size()) {
        ++i;
        if (bad) *bad = true;
        return kReplacement;
    }
    for (int k = 1; k < len; ++k) {
        const unsigned char bk = byte(i + static_cast<std::size_t>(k));
        if ((bk & 0xC0) != 0x80) {
            ++i;
            if (bad) *bad = true;
            return kReplacement;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    // Reject overlong encodings and surrogates.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
        (len == 4 && cp < 0x10000) || (cp >= 0xD800 && cp <= 0xDFFF) ||
        cp > 0x10FFFF) {
        ++i;
        if (bad) *bad = true;
        return kReplacement;
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_space_cp(char32_t cp) {
    switch (cp) {
        case U' ':
        case U'\t':
        case U'\n':
        case U'\r':
        case 0x0B:
        case 0x0C:
            return true;
        default:
            return false;
    }
}

// Compatibility fold covering the classes that show up in chat output:
// Unicode spaces, fullwidth ASCII forms, Latin ligatures, and typographic
// punctuation folded to ASCII. Every output codepoint is a fixed point of
// the fold, which is what makes normalization idempotent.
void fold_codepoint(char32_t cp, std::u32string& out) {
    // Unicode space separators -> ASCII space.
    if (cp == 0x00A0 || cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) ||
        cp == 0x2028 || cp == 0x2029 || cp == 0x202F || cp == 0x205F ||
        cp == 0x3000) {
        out.push_back(U' ');
        return;
    }
    // Zero-width characters and BOM are dropped.
    if ((cp >= 0x200B && cp <= 0x200D) || cp == 0xFEFF) return;
    // Fullwidth ASCII block.
    if (cp >= 0xFF01 && cp <= 0xFF5E) {
        out.push_back(cp - 0xFEE0);
        return;
    }
    // Typographic punctuation.
    switch (cp) {
        case 0x2018:
        case 0x2019:
        case 0x201A:
        case 0x201B:
        case 0x2032:
            out.push_back(U'\'');
            return;
        case 0x201C:
        case 0x201D:
        case 0x201E:
        case 0x201F:
        case 0x2033:
            out.push_back(U'"');
            return;
        case 0x2010:
        case 0x2011:
        case 0x2012:
        case 0x2013:
        case 0x2014:
        case 0x2015:
        case 0x2212:
            out.push_back(U'-');
            return;
        case 0x2026:
            out.append(U"...");
            return;
        default:
            break;
    }
    // Latin ligatures.
    switch (cp) {
        case 0xFB00: out.append(U"ff"); return;
        case 0xFB01: out.append(U"fi"); return;
        case 0xFB02: out.append(U"fl"); return;
        case 0xFB03: out.append(U"ffi"); return;
        case 0xFB04: out.append(U"ffl"); return;
        case 0xFB05:
        case 0xFB06: out.append(U"st"); return;
        default:
            break;
    }
    out.push_back(cp);
}

char32_t casefold_cp(char32_t cp) {
    if (cp >= U'A' && cp <= U'Z') return cp + 32;
    // Latin-1 uppercase letters (multiplication sign excluded).
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    return cp;
}

bool starts_with_prefix(const std::u32string& s, std::size_t pos,
                        std::u32string_view prefix) {
    if (s.size() - pos < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (casefold_cp(s[pos + i]) != prefix[i]) return false;
    return true;
}

}  // namespace

std::string normalize(std::string_view text, const NormalizationPolicy& policy,
                      bool* replaced_invalid) {
    bool bad = false;
    std::u32string cps;
    cps.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = decode_utf8(text, i, &bad);
        fold_codepoint(policy.casefold ? casefold_cp(cp) : cp, cps);
    }
    // casefold again: fold can produce ASCII from fullwidth uppercase.
    if (policy.casefold)
        for (auto& cp : cps) cp = casefold_cp(cp);

    if (policy.collapse_whitespace) {
        std::u32string collapsed;
        collapsed.reserve(cps.size());
        bool in_space = false;
        for (char32_t cp : cps) {
            if (is_space_cp(cp)) {
                in_space = true;
                continue;
            }
            if (in_space && !collapsed.empty()) collapsed.push_back(U' ');
            in_space = false;
            collapsed.push_back(cp);
        }
        cps = std::move(collapsed);
    }

    if (policy.strip_role_prefixes) {
        static const std::u32string_view prefixes[] = {
            U"assistant:", U"user:", U"system:", U"ai:", U"response:"};
        std::size_t pos = 0;
        bool stripped = true;
        while (stripped) {
            stripped = false;
            while (pos < cps.size() && is_space_cp(cps[pos])) ++pos;
            for (auto p : prefixes) {
                if (starts_with_prefix(cps, pos, p)) {
                    pos += p.size();
                    stripped = true;
                    break;
                }
            }
        }
        if (pos > 0) cps.erase(0, pos);
        // Leading space left by the prefix strip.
        while (!cps.empty() && is_space_cp(cps.front())) cps.erase(0, 1);
    }

    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) encode_utf8(cp, out);
    if (replaced_invalid) *replaced_invalid = bad;
    return out;
}

}  // namespace batchflip
