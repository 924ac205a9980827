#include "mmfuse/lexicon.hpp"

#include <fstream>
#include <sstream>

#include "mmfuse/error.hpp"

namespace mmfuse {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

} // namespace

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

bool is_valid_utf8(std::string_view text) {
    const auto* p = reinterpret_cast<const unsigned char*>(text.data());
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        const unsigned char c = p[i];
        std::size_t len;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xe0) == 0xc0) {
            len = 2;
            cp = c & 0x1f;
        } else if ((c & 0xf0) == 0xe0) {
            len = 3;
            cp = c & 0x0f;
        } else if ((c & 0xf8) == 0xf0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > n) return false;
        for (std::size_t k = 1; k < len; ++k) {
            if ((p[i + k] & 0xc0) != 0x80) return false;
            cp = (cp << 6) | (p[i + k] & 0x3f);
        }
        // overlong forms, surrogates, out of range
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
            (cp >= 0xd800 && cp <= 0xdfff) || cp > 0x10ffff) {
            return false;
        }
        i += len;
    }
    return true;
}

void Lexicon::add(std::string_view term) {
    if (term.empty()) {
        throw LexiconError("lexicon term must not be empty");
    }
    for (char c : term) {
        if (is_space(c)) {
            throw LexiconError("lexicon term '" + std::string(term) + "' contains whitespace");
        }
    }
    terms_.insert(ascii_lower(term));
}

Lexicon parse_lexicon(std::string_view text) {
    Lexicon lex;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        ++line_no;
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view raw = text.substr(pos, end - pos);
        pos = end + 1;
        if (!is_valid_utf8(raw)) {
            throw LexiconError("lexicon line " + std::to_string(line_no) + ": invalid UTF-8");
        }
        const std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        try {
            lex.add(line);
        } catch (const LexiconError& e) {
            throw LexiconError("lexicon line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open lexicon " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_lexicon(ss.str());
}

} // namespace mmfuse
