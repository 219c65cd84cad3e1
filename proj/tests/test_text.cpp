#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "profiler/errors.hpp"
#include "profiler/text.hpp"

using namespace profiler;
using namespace profiler::text;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("tokenize: rule table") {
    CHECK(tokenize("") == std::vector<std::string>{});
    CHECK(tokenize("Hello, WORLD") == std::vector<std::string>{"hello", ",", "world"});
    CHECK(tokenize("check https://t.co/x #cool :-)") ==
          std::vector<std::string>{"check", "https://t.co/x", "#cool", ":-)"});

    struct Row {
        const char* input;
        std::vector<std::string> expected;
    };
    const Row table[] = {
        {"   ", {}},
        {"one  two\tthree", {"one", "two", "three"}},
        {"@User hi!", {"@user", "hi", "!"}},
        {"(wow)!", {"(", "wow", ")", "!"}},
        {"WWW.Example.COM", {"www.example.com"}},
        {"don't", {"don't"}},          // internal punctuation stays
        {"...", {"..."}},              // all-punct chunk kept whole
        {"#", {"#"}},                  // lone marker is just punctuation
        {"end.", {"end", "."}},
        {"\xC2\xBFQu\xC3\xA9?", {"\xC2\xBF", "qu\xC3\xA9", "?"}},  // ¿Qué? -> ¿ qué ?
    };
    for (const auto& row : table) {
        CAPTURE(row.input);
        CHECK(tokenize(row.input) == row.expected);
    }
}

TEST_CASE("tokenize: idempotent on alphabetic output") {
    const char* inputs[] = {"Hello, WORLD again", "a B c", "ONE two\nthree"};
    for (const char* s : inputs) {
        const auto once = tokenize(s);
        std::string joined;
        for (const auto& t : once) {
            if (!joined.empty()) joined.push_back(' ');
            joined += t;
        }
        CHECK(tokenize(joined) == once);
    }
}

TEST_CASE("load_embeddings: counting, unk mean, errors") {
    const auto path = write_temp("prof_emb_ok.txt", "alpha 1 2 3\nbeta -1 0 5\n");
    const auto emb = load_embeddings(path, 3);
    CHECK(emb.vocab.size() == 4);  // pad, unk + 2 tokens
    CHECK(emb.table.matrix.shape() == std::vector<std::size_t>{4, 3});
    CHECK_FALSE(emb.table.trainable);

    // pad row zero
    for (std::size_t c = 0; c < 3; ++c) CHECK(emb.table.matrix.at(0, c) == 0.0);
    // unk row is the arithmetic mean
    const double expect[3] = {0.0, 1.0, 4.0};
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(std::fabs(emb.table.matrix.at(1, c) - expect[c]) <= 1e-12);

    CHECK(emb.vocab.lookup("alpha") == 2);
    CHECK(emb.vocab.lookup("beta") == 3);
    CHECK(emb.vocab.lookup("missing") == Vocabulary::unk_id);

    const auto bad_arity = write_temp("prof_emb_bad1.txt", "alpha 1 2 3\nbeta 1 2\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_embeddings(bad_arity, 3)),
                         doctest::Contains("line 2"), InputError);

    const auto dup = write_temp("prof_emb_bad2.txt", "alpha 1 2 3\nalpha 4 5 6\n");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_embeddings(dup, 3)),
                         doctest::Contains("duplicate"), InputError);
}

TEST_CASE("encode_words: padding, truncation, unk") {
    Vocabulary vocab;
    vocab.embedding_dim = 3;
    vocab.token_to_id["a"] = 2;

    std::vector<std::int32_t> ids;
    std::vector<std::uint8_t> mask;

    encode_words({}, vocab, 5, ids, mask);
    CHECK(ids == std::vector<std::int32_t>{0, 0, 0, 0, 0});
    CHECK(mask == std::vector<std::uint8_t>{0, 0, 0, 0, 0});

    encode_words({"a", "zzz-oov"}, vocab, 3, ids, mask);
    CHECK(ids == std::vector<std::int32_t>{2, 1, 0});
    CHECK(mask == std::vector<std::uint8_t>{1, 1, 0});

    std::vector<std::string> sixty(60, "a");
    encode_words(sixty, vocab, 40, ids, mask);
    int real = 0;
    for (auto m : mask) real += m;
    CHECK(real == 40);
}

TEST_CASE("encode_chars: punctuation kept, unk for unseen") {
    CharAlphabet alphabet = CharAlphabet::from_codepoints({U'!', U'a', U'b'});
    std::vector<std::int32_t> ids;
    std::vector<std::uint8_t> mask;

    encode_chars("", alphabet, 4, ids, mask);
    CHECK(ids == std::vector<std::int32_t>{0, 0, 0, 0});

    encode_chars("Ab!", alphabet, 4, ids, mask);
    CHECK(ids[0] == alphabet.lookup(U'a'));  // lower-cased
    CHECK(ids[1] == alphabet.lookup(U'b'));
    CHECK(ids[2] == alphabet.lookup(U'!'));  // punctuation has its own id
    CHECK(ids[2] != CharAlphabet::unk_id);
    CHECK(mask == std::vector<std::uint8_t>{1, 1, 1, 0});

    encode_chars("a\xF0\x9F\x98\x80", alphabet, 4, ids, mask);  // astral emoji not in alphabet
    CHECK(ids[1] == CharAlphabet::unk_id);
}

TEST_CASE("encoded tweets: mask-id consistency property") {
    // pad positions carry id 0, so ids[i] == mask[i] * ids[i] everywhere
    Vocabulary vocab;
    vocab.embedding_dim = 1;
    vocab.token_to_id["tok"] = 2;
    std::vector<std::int32_t> ids;
    std::vector<std::uint8_t> mask;
    for (const char* s : {"", "tok", "tok tok tok tok tok tok"}) {
        encode_words(tokenize(s), vocab, 4, ids, mask);
        for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i] == mask[i] * ids[i]);
    }
}

TEST_CASE("build_char_alphabet: min frequency and determinism") {
    const std::vector<std::string_view> texts{"aab!", "Ab"};
    // counts (lower-cased): a=4, b=2, !=1
    const auto alphabet = build_char_alphabet(texts, 2);
    CHECK(alphabet.size() == 4);  // pad, unk, a, b
    CHECK(alphabet.lookup(U'a') == 2);
    CHECK(alphabet.lookup(U'b') == 3);
    CHECK(alphabet.lookup(U'!') == CharAlphabet::unk_id);

    const auto again = build_char_alphabet(texts, 2);
    CHECK(alphabet.codepoints_in_id_order() == again.codepoints_in_id_order());

    // round trip through the serialization form
    const auto restored = CharAlphabet::from_codepoints(alphabet.codepoints_in_id_order());
    CHECK(restored.char_to_id.at(U'a') == 2);
}
