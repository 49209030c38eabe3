#pragma once

#include <string>
#include <string_view>

namespace batchflip {

struct NormalizationPolicy {
    // Compatibility fold (Unicode spaces, fullwidth forms, ligatures,
    // typographic punctuation) is always applied.
    bool casefold = true;
    bool collapse_whitespace = true;
    bool strip_role_prefixes = true;
};

// Idempotent: normalize(normalize(x)) == normalize(x). Invalid UTF-8 byte
// sequences are replaced with U+FFFD; *replaced_invalid (when given) is set
// when that happened.
std::string normalize(std::string_view text, const NormalizationPolicy& policy,
                      bool* replaced_invalid = nullptr);

inline std::string normalize(std::string_view text) {
    return normalize(text, NormalizationPolicy{});
}

}  // namespace batchflip
