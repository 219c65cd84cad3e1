#include "profiler/text.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>

#include "profiler/errors.hpp"

namespace profiler::text {

std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char b0 = static_cast<unsigned char>(s[i]);
        char32_t cp = 0xFFFD;
        std::size_t len = 1;
        if (b0 < 0x80) {
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0 && i + 1 < s.size() &&
                   (static_cast<unsigned char>(s[i + 1]) & 0xC0) == 0x80) {
            cp = (char32_t(b0 & 0x1F) << 6) | (s[i + 1] & 0x3F);
            len = 2;
            if (cp < 0x80) cp = 0xFFFD;  // overlong
        } else if ((b0 & 0xF0) == 0xE0 && i + 2 < s.size() &&
                   (static_cast<unsigned char>(s[i + 1]) & 0xC0) == 0x80 &&
                   (static_cast<unsigned char>(s[i + 2]) & 0xC0) == 0x80) {
            cp = (char32_t(b0 & 0x0F) << 12) | (char32_t(s[i + 1] & 0x3F) << 6) | (s[i + 2] & 0x3F);
            len = 3;
            if (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
        } else if ((b0 & 0xF8) == 0xF0 && i + 3 < s.size() &&
                   (static_cast<unsigned char>(s[i + 1]) & 0xC0) == 0x80 &&
                   (static_cast<unsigned char>(s[i + 2]) & 0xC0) == 0x80 &&
                   (static_cast<unsigned char>(s[i + 3]) & 0xC0) == 0x80) {
            cp = (char32_t(b0 & 0x07) << 18) | (char32_t(s[i + 1] & 0x3F) << 12) |
                 (char32_t(s[i + 2] & 0x3F) << 6) | (s[i + 3] & 0x3F);
            len = 4;
            if (cp < 0x10000 || cp > 0x10FFFF) cp = 0xFFFD;
        }
        if (cp == 0xFFFD) len = (b0 < 0x80) ? 1 : len;
        out.push_back(cp);
        i += len;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
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

std::string encode_utf8(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) append_utf8(out, cp);
    return out;
}

char32_t lower_codepoint(char32_t cp) {
    if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;  // Latin-1 uppercase
    return cp;
}

std::string lower_utf8(std::string_view s) {
    auto cps = decode_utf8(s);
    for (char32_t& cp : cps) cp = lower_codepoint(cp);
    return encode_utf8(cps);
}

bool is_space_codepoint(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D:
        case 0x20: case 0x85: case 0xA0: case 0x1680:
        case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_punct_codepoint(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
               (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
    }
    if (cp == 0xA1 || cp == 0xAB || cp == 0xBB || cp == 0xBF) return true;    // ¡ « » ¿
    if (cp >= 0x2010 && cp <= 0x2027) return true;                            // dashes, quotes, …
    if (cp >= 0x2030 && cp <= 0x205E) return true;                            // ‰ ′ ‹ › ⁇ …
    return false;
}

namespace {

bool keep_whole(const std::vector<char32_t>& cps) {
    if (cps.empty()) return false;
    // URLs (already lower-cased).
    const std::string joined = encode_utf8(cps);
    if (joined.rfind("http://", 0) == 0 || joined.rfind("https://", 0) == 0 ||
        joined.rfind("www.", 0) == 0)
        return true;
    // @mentions and #hashtags.
    if ((cps[0] == U'@' || cps[0] == U'#') && cps.size() > 1) return true;
    // Multi-character all-punctuation chunks: emoticons like :-) <-- ^^
    if (cps.size() >= 2 &&
        std::all_of(cps.begin(), cps.end(), [](char32_t c) { return is_punct_codepoint(c); }))
        return true;
    return false;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view raw) {
    std::vector<std::string> tokens;
    auto cps = decode_utf8(raw);
    for (char32_t& cp : cps) cp = lower_codepoint(cp);

    std::size_t i = 0;
    while (i < cps.size()) {
        while (i < cps.size() && is_space_codepoint(cps[i])) ++i;
        std::size_t j = i;
        while (j < cps.size() && !is_space_codepoint(cps[j])) ++j;
        if (j == i) break;
        std::vector<char32_t> chunk(cps.begin() + i, cps.begin() + j);
        i = j;

        if (keep_whole(chunk)) {
            tokens.push_back(encode_utf8(chunk));
            continue;
        }
        std::size_t lo = 0, hi = chunk.size();
        while (lo < hi && is_punct_codepoint(chunk[lo])) ++lo;
        while (hi > lo && is_punct_codepoint(chunk[hi - 1])) --hi;
        for (std::size_t k = 0; k < lo; ++k) tokens.push_back(encode_utf8({chunk[k]}));
        if (hi > lo)
            tokens.push_back(encode_utf8(std::vector<char32_t>(chunk.begin() + lo, chunk.begin() + hi)));
        for (std::size_t k = hi; k < chunk.size(); ++k) tokens.push_back(encode_utf8({chunk[k]}));
    }
    return tokens;
}

WordEmbeddings load_embeddings(const std::filesystem::path& path, std::size_t dim) {
    if (dim == 0) throw InputError("load_embeddings: dim must be positive");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("load_embeddings: cannot open " + path.string());

    WordEmbeddings out;
    out.vocab.embedding_dim = dim;

    std::vector<std::string> tokens;
    std::vector<double> values;  // row-major, tokens.size() x dim
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        const std::size_t sp = line.find(' ');
        if (sp == std::string::npos)
            throw InputError("load_embeddings: " + path.string() + " line " +
                             std::to_string(line_no) + ": expected token followed by " +
                             std::to_string(dim) + " values");
        std::string token = line.substr(0, sp);
        if (out.vocab.token_to_id.count(token))
            throw InputError("load_embeddings: " + path.string() + " line " +
                             std::to_string(line_no) + ": duplicate token '" + token + "'");

        std::size_t count = 0;
        const char* p = line.data() + sp;
        const char* end = line.data() + line.size();
        std::vector<double> row(dim, 0.0);
        while (p < end) {
            while (p < end && *p == ' ') ++p;
            if (p == end) break;
            double v = 0.0;
            auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc{})
                throw InputError("load_embeddings: " + path.string() + " line " +
                                 std::to_string(line_no) + ": bad number");
            if (count < dim) row[count] = v;
            ++count;
            p = res.ptr;
        }
        if (count != dim)
            throw InputError("load_embeddings: " + path.string() + " line " +
                             std::to_string(line_no) + ": expected " + std::to_string(dim) +
                             " values, got " + std::to_string(count));

        out.vocab.token_to_id.emplace(std::move(token),
                                      static_cast<std::int32_t>(tokens.size() + 2));
        tokens.push_back(line.substr(0, sp));
        values.insert(values.end(), row.begin(), row.end());
    }

    const std::size_t n = tokens.size();
    out.table.matrix = Tensor({n + 2, dim});
    out.table.trainable = false;
    // Row 0 stays zero (pad). Row 1 (unk) = mean of all loaded vectors.
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < dim; ++c) out.table.matrix.at(r + 2, c) = values[r * dim + c];
    if (n > 0) {
        for (std::size_t c = 0; c < dim; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += values[r * dim + c];
            out.table.matrix.at(1, c) = s / static_cast<double>(n);
        }
    }
    return out;
}

std::vector<char32_t> CharAlphabet::codepoints_in_id_order() const {
    std::vector<char32_t> cps(char_to_id.size());
    for (const auto& [cp, id] : char_to_id) cps[static_cast<std::size_t>(id) - 2] = cp;
    return cps;
}

CharAlphabet CharAlphabet::from_codepoints(const std::vector<char32_t>& cps) {
    CharAlphabet a;
    for (std::size_t i = 0; i < cps.size(); ++i)
        a.char_to_id.emplace(cps[i], static_cast<std::int32_t>(i + 2));
    return a;
}

CharAlphabet build_char_alphabet(const std::vector<std::string_view>& texts, int min_freq) {
    std::map<char32_t, long> counts;  // ordered: ids come out in code point order
    for (std::string_view t : texts) {
        for (char32_t cp : decode_utf8(t)) ++counts[lower_codepoint(cp)];
    }
    CharAlphabet a;
    std::int32_t next = 2;
    for (const auto& [cp, cnt] : counts) {
        if (cnt >= min_freq) a.char_to_id.emplace(cp, next++);
    }
    return a;
}

void encode_words(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                  std::size_t max_tokens, std::vector<std::int32_t>& ids,
                  std::vector<std::uint8_t>& mask) {
    ids.assign(max_tokens, Vocabulary::pad_id);
    mask.assign(max_tokens, 0);
    const std::size_t n = std::min(tokens.size(), max_tokens);
    for (std::size_t i = 0; i < n; ++i) {
        ids[i] = vocab.lookup(tokens[i]);
        mask[i] = 1;
    }
}

void encode_chars(std::string_view raw, const CharAlphabet& alphabet, std::size_t max_chars,
                  std::vector<std::int32_t>& ids, std::vector<std::uint8_t>& mask) {
    ids.assign(max_chars, CharAlphabet::pad_id);
    mask.assign(max_chars, 0);
    const auto cps = decode_utf8(raw);
    const std::size_t n = std::min(cps.size(), max_chars);
    for (std::size_t i = 0; i < n; ++i) {
        ids[i] = alphabet.lookup(lower_codepoint(cps[i]));
        mask[i] = 1;
    }
}

}  // namespace profiler::text
