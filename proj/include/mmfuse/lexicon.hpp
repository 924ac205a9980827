#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>

namespace mmfuse {

/// Set of lowercase single-token terms.
class Lexicon {
public:
    Lexicon() = default;

    /// Adds a term after lowercasing; throws LexiconError on empty or
    /// whitespace-containing input.
    void add(std::string_view term);
    bool contains(std::string_view token) const { return terms_.find(token) != terms_.end(); }
    std::size_t size() const { return terms_.size(); }
    bool empty() const { return terms_.empty(); }
    const std::set<std::string, std::less<>>& terms() const { return terms_; }

private:
    std::set<std::string, std::less<>> terms_;
};

/// One term per line. Blank lines and lines starting with '#' are skipped,
/// surrounding whitespace is trimmed, ASCII letters are lowercased, duplicates
/// collapse. Invalid UTF-8 or a term with inner whitespace throws LexiconError
/// carrying the 1-based line number.
Lexicon parse_lexicon(std::string_view text);
Lexicon load_lexicon(const std::filesystem::path& path);

/// True when `text` is well-formed UTF-8.
bool is_valid_utf8(std::string_view text);

/// ASCII lowercase; other bytes pass through unchanged.
std::string ascii_lower(std::string_view s);

} // namespace mmfuse
