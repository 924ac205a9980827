#include "mmfuse/msl.hpp"

#include <algorithm>

namespace mmfuse {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

bool is_ascii_punct(char c) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
}

bool is_url(std::string_view t) {
    return t.starts_with("http://") || t.starts_with("https://") || t.starts_with("www.");
}

} // namespace

std::vector<std::string> msl_tokens(std::string_view text) {
    const std::string lower = ascii_lower(text);
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < lower.size()) {
        while (i < lower.size() && is_space(lower[i])) ++i;
        std::size_t j = i;
        while (j < lower.size() && !is_space(lower[j])) ++j;
        if (j > i) {
            const std::string_view raw(lower.data() + i, j - i);
            if (!is_url(raw) && raw.front() != '@') {
                std::string tok;
                std::copy_if(raw.begin(), raw.end(), std::back_inserter(tok),
                             [](char c) { return !is_ascii_punct(c); });
                if (!tok.empty()) out.push_back(std::move(tok));
            }
        }
        i = j;
    }
    return out;
}

int msl_score_raw(std::string_view text, const Lexicon& lexicon) {
    int count = 0;
    for (const auto& tok : msl_tokens(text)) {
        if (lexicon.contains(tok)) ++count;
    }
    return count;
}

double msl_normalize(double count, double lo, double hi) {
    if (hi <= lo) return 0.0;
    return std::clamp((count - lo) / (hi - lo), 0.0, 1.0);
}

} // namespace mmfuse
