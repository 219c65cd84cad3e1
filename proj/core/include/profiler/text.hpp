#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "profiler/tensor.hpp"

namespace profiler::text {

// ---- UTF-8 / character classes -------------------------------------------

/// Decodes UTF-8; invalid bytes become U+FFFD and consume one byte.
std::vector<char32_t> decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(const std::vector<char32_t>& cps);

/// ASCII A-Z plus the Latin-1 uppercase range (covers en/es; ar has no case).
char32_t lower_codepoint(char32_t cp);
std::string lower_utf8(std::string_view s);

bool is_space_codepoint(char32_t cp);
bool is_punct_codepoint(char32_t cp);

// ---- tokenizer ------------------------------------------------------------

/// Rule table, applied in order to each whitespace-separated chunk of the
/// lower-cased text:
///   1. chunks starting with "http://", "https://" or "www." are kept whole;
///   2. chunks starting with '@' or '#' (length > 1) are kept whole;
///   3. chunks of length >= 2 made entirely of punctuation are kept whole
///      (emoticons such as ":-)");
///   4. otherwise leading and trailing punctuation characters are split off
///      as single-character tokens, in their original order.
/// Deterministic; empty input yields an empty list.
std::vector<std::string> tokenize(std::string_view raw);

// ---- vocabulary / embeddings ----------------------------------------------

struct Vocabulary {
    static constexpr std::int32_t pad_id = 0;
    static constexpr std::int32_t unk_id = 1;

    std::unordered_map<std::string, std::int32_t> token_to_id;  // ids start at 2
    std::size_t embedding_dim = 0;

    std::size_t size() const { return token_to_id.size() + 2; }

    std::int32_t lookup(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? unk_id : it->second;
    }
};

struct EmbeddingTable {
    Tensor matrix;           // (|V|, dim); row 0 (pad) is all zeros
    bool trainable = false;  // frozen by default
};

struct WordEmbeddings {
    Vocabulary vocab;
    EmbeddingTable table;
};

/// Loads a GloVe-style text file: one line per token, `token v1 .. vdim`
/// separated by single spaces. Row 0 is the zero pad vector, row 1 (unk) the
/// arithmetic mean of all loaded vectors.
WordEmbeddings load_embeddings(const std::filesystem::path& path, std::size_t dim);

// ---- character alphabet ----------------------------------------------------

struct CharAlphabet {
    static constexpr std::int32_t pad_id = 0;
    static constexpr std::int32_t unk_id = 1;

    std::unordered_map<char32_t, std::int32_t> char_to_id;  // ids start at 2

    std::size_t size() const { return char_to_id.size() + 2; }

    std::int32_t lookup(char32_t cp) const {
        auto it = char_to_id.find(cp);
        return it == char_to_id.end() ? unk_id : it->second;
    }

    /// Code points in id order (id 2 first), for serialization.
    std::vector<char32_t> codepoints_in_id_order() const;
    static CharAlphabet from_codepoints(const std::vector<char32_t>& cps);
};

/// Alphabet over the lower-cased character stream of `texts` (punctuation
/// kept). Characters seen fewer than min_freq times map to unk. Ids are
/// assigned in ascending code point order. Build this from the training
/// split only.
CharAlphabet build_char_alphabet(const std::vector<std::string_view>& texts, int min_freq = 2);

// ---- fixed-length encoding --------------------------------------------------

struct EncodedTweet {
    std::vector<std::int32_t> word_ids;  // length max_tokens, pad = 0
    std::vector<std::uint8_t> word_mask;
    std::vector<std::int32_t> char_ids;  // length max_chars, pad = 0
    std::vector<std::uint8_t> char_mask;
    std::size_t n_words = 0;  // real (unmasked) counts
    std::size_t n_chars = 0;
};

void encode_words(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                  std::size_t max_tokens, std::vector<std::int32_t>& ids,
                  std::vector<std::uint8_t>& mask);

void encode_chars(std::string_view raw, const CharAlphabet& alphabet, std::size_t max_chars,
                  std::vector<std::int32_t>& ids, std::vector<std::uint8_t>& mask);

}  // namespace profiler::text
