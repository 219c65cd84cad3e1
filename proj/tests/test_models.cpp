#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "profiler/errors.hpp"
#include "profiler/models.hpp"
#include "profiler/train.hpp"
#include "synthetic.hpp"

using namespace profiler;
using namespace profiler::models;
using testsupport::SynthSpec;

namespace {

ModelConfig toy_config(Variant v, std::size_t embed_dim = 10) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.d_cells = 6;
    cfg.n_filters = 4;
    cfg.d_char = 5;
    cfg.embed_dim = static_cast<int>(embed_dim);
    cfg.max_tokens = 16;
    cfg.max_chars = 60;
    cfg.lsa_k = 7;
    cfg.seed = 3;
    return cfg;
}

struct Fixture {
    text::WordEmbeddings embeddings = testsupport::make_synth_embeddings(10);
    corpus::Dataset corpus = testsupport::make_marker_corpus(SynthSpec{});
    text::CharAlphabet alphabet;

    Fixture() {
        std::vector<std::string_view> texts;
        for (const auto& u : corpus.users)
            for (const auto& t : u.tweets) texts.push_back(t.text);
        alphabet = text::build_char_alphabet(texts, 2);
    }
};

double prob_sum(const Tensor& probs) { return probs[0] + probs[1]; }

}  // namespace

TEST_CASE("config json round trip and grid validation") {
    ModelConfig cfg = toy_config(Variant::rnnwa_ngram);
    cfg.lang = corpus::Lang::es;
    cfg.trainable_embeddings = true;
    const auto back = config_from_json(config_to_json(cfg));
    CHECK(back.variant == cfg.variant);
    CHECK(back.lang == cfg.lang);
    CHECK(back.d_cells == cfg.d_cells);
    CHECK(back.lsa_k == cfg.lsa_k);
    CHECK(back.seed == cfg.seed);
    CHECK(back.trainable_embeddings);

    ModelConfig strict;
    strict.variant = Variant::rnnwa;
    strict.d_cells = 150;
    CHECK_NOTHROW(validate_grid(strict, false));
    strict.d_cells = 60;
    CHECK_THROWS_AS(validate_grid(strict, false), InputError);
    CHECK_NOTHROW(validate_grid(strict, true));  // --allow-off-grid

    CHECK(variant_from_string("rnnwa-ngram") == Variant::rnnwa_ngram);
    CHECK_THROWS_AS(variant_from_string("gru"), InputError);
}

TEST_CASE("encode_user fills word and char sides") {
    Fixture fx;
    const auto cfg = toy_config(Variant::rnnwa);
    const auto encoded =
        encode_user(fx.corpus.users[0], cfg, &fx.embeddings.vocab, &fx.alphabet);
    CHECK(encoded.label == 0);  // user0 is female
    REQUIRE(encoded.tweets.size() == fx.corpus.users[0].tweets.size());
    for (const auto& t : encoded.tweets) {
        CHECK(t.word_ids.size() == 16);
        CHECK(t.char_ids.size() == 60);
        CHECK(t.n_words >= 1);
        CHECK(t.n_chars >= 3);
        for (std::size_t i = 0; i < t.word_ids.size(); ++i)
            CHECK(t.word_ids[i] == t.word_mask[i] * t.word_ids[i]);
    }
}

TEST_CASE("tweet vector dimensions follow the config") {
    Fixture fx;
    for (const Variant v : {Variant::rnnwa, Variant::cnnwa}) {
        const auto cfg = toy_config(v);
        Model model(cfg, &fx.embeddings, &fx.alphabet);
        const auto user = encode_user(fx.corpus.users[0], cfg, &fx.embeddings.vocab, &fx.alphabet);
        ad::Tape tape;
        const auto staged = model.stage(tape);
        const auto t0 = uses_words(v) ? model.encode_tweet_rnn(tape, staged, user.tweets[0])
                                      : model.encode_tweet_cnn(tape, staged, user.tweets[0]);
        const std::size_t expect = uses_words(v) ? 2 * 6 : 3 * 4;
        CHECK(tape.value(t0).shape() == std::vector<std::size_t>{expect});
    }
}

TEST_CASE("forward_user: probabilities sum to one for every variant") {
    Fixture fx;
    features::NgramSpec nspec;
    nspec.word_ns = {1};
    nspec.char_ns = {3};
    nspec.min_total_freq = 2;
    const auto projector = features::fit_projector(fx.corpus.users, nspec, 7, 5);

    for (const Variant v : {Variant::rnn, Variant::rnnwa, Variant::cnn, Variant::cnnwa,
                            Variant::rnnwa_ngram}) {
        CAPTURE(to_string(v));
        const auto cfg = toy_config(v);
        Model model(cfg, &fx.embeddings, &fx.alphabet);
        const auto user = encode_user(fx.corpus.users[1], cfg, &fx.embeddings.vocab, &fx.alphabet,
                                      v == Variant::rnnwa_ngram ? &projector : nullptr);
        const Tensor probs = model.predict_probs(user);
        CHECK(std::isfinite(probs[0]));
        CHECK(std::isfinite(probs[1]));
        CHECK(std::fabs(prob_sum(probs) - 1.0) <= 1e-12);
    }
}

TEST_CASE("averaging variant: user probabilities are the mean of tweet probabilities") {
    Fixture fx;
    const auto cfg = toy_config(Variant::rnn);
    Model model(cfg, &fx.embeddings, nullptr);
    const auto user = encode_user(fx.corpus.users[2], cfg, &fx.embeddings.vocab, nullptr);

    ad::Tape tape;
    const auto staged = model.stage(tape);
    const auto fw = model.forward_user(tape, staged, user);
    REQUIRE(fw.tweet_logits.size() == user.tweets.size());

    double mean_f = 0.0;
    for (const auto id : fw.tweet_logits) {
        const Tensor& lv = tape.value(id);
        const double mx = std::max(lv[0], lv[1]);
        const double e0 = std::exp(lv[0] - mx), e1 = std::exp(lv[1] - mx);
        mean_f += e0 / (e0 + e1);
    }
    mean_f /= static_cast<double>(fw.tweet_logits.size());
    CHECK(std::fabs(fw.user_probs[0] - mean_f) <= 1e-12);

    // the worked example: probabilities (0.9, 0.1) and (0.5, 0.5) average to (0.7, 0.3)
    CHECK((0.9 + 0.5) / 2 == doctest::Approx(0.7));
    CHECK((0.1 + 0.5) / 2 == doctest::Approx(0.3));
}

TEST_CASE("averaging variant: prediction exactly invariant under tweet permutation") {
    Fixture fx;
    const auto cfg = toy_config(Variant::rnn);
    Model model(cfg, &fx.embeddings, nullptr);
    auto user = encode_user(fx.corpus.users[3], cfg, &fx.embeddings.vocab, nullptr);
    const Tensor before = model.predict_probs(user);

    std::reverse(user.tweets.begin(), user.tweets.end());
    const Tensor after = model.predict_probs(user);
    CHECK(before == after);  // bit-exact by canonical-order summation

    std::rotate(user.tweets.begin(), user.tweets.begin() + 2, user.tweets.end());
    CHECK(model.predict_probs(user) == before);
}

TEST_CASE("attention variant: weights sum to one and permute with the tweets") {
    Fixture fx;
    const auto cfg = toy_config(Variant::rnnwa);
    Model model(cfg, &fx.embeddings, nullptr);
    auto user = encode_user(fx.corpus.users[4], cfg, &fx.embeddings.vocab, nullptr);

    ad::Tape tape;
    const auto staged = model.stage(tape);
    const auto fw = model.forward_user(tape, staged, user);
    REQUIRE(fw.tweet_weights >= 0);
    const Tensor w = tape.value(fw.tweet_weights);
    double sum = 0.0;
    for (std::size_t i = 0; i < w.numel(); ++i) sum += w[i];
    CHECK(std::fabs(sum - 1.0) <= 1e-12);

    std::reverse(user.tweets.begin(), user.tweets.end());
    ad::Tape tape2;
    const auto fw2 = model.forward_user(tape2, model.stage(tape2), user);
    const Tensor w2 = tape2.value(fw2.tweet_weights);
    REQUIRE(w2.numel() == w.numel());
    for (std::size_t i = 0; i < w.numel(); ++i)
        CHECK(w2[i] == w[w.numel() - 1 - i]);  // equivariant
}

TEST_CASE("single-tweet user: attention and averaging agree exactly") {
    Fixture fx;
    const auto cfg_attn = toy_config(Variant::rnnwa);
    const auto cfg_avg = toy_config(Variant::rnn);
    Model attn(cfg_attn, &fx.embeddings, nullptr);
    Model avg(cfg_avg, &fx.embeddings, nullptr);

    // Align the shared parameters (prefixes differ, suffixes match).
    auto tensors = attn.named_tensors();
    std::vector<std::pair<std::string, Tensor>> renamed;
    for (auto& [name, value] : tensors) {
        const auto dot = name.find('.');
        const std::string suffix = name.substr(dot);
        if (suffix.rfind(".tweet_attn", 0) == 0) continue;
        renamed.emplace_back("rnn" + suffix, value);
    }
    avg.load_tensors(renamed);

    corpus::UserRecord solo = fx.corpus.users[5];
    solo.tweets.resize(1);
    const auto user = encode_user(solo, cfg_attn, &fx.embeddings.vocab, nullptr);
    const Tensor pa = attn.predict_probs(user);
    const Tensor pb = avg.predict_probs(user);
    CHECK(std::fabs(pa[0] - pb[0]) <= 1e-12);
    CHECK(std::fabs(pa[1] - pb[1]) <= 1e-12);
}

TEST_CASE("empty tweets are masked; fully empty user errors") {
    Fixture fx;
    const auto cfg = toy_config(Variant::rnnwa);
    Model model(cfg, &fx.embeddings, nullptr);

    auto user = encode_user(fx.corpus.users[6], cfg, &fx.embeddings.vocab, nullptr);
    const Tensor with_all = model.predict_probs(user);

    // Blank out one tweet: it must drop from the pool, not contribute zeros.
    text::EncodedTweet empty;
    empty.word_ids.assign(16, 0);
    empty.word_mask.assign(16, 0);
    empty.n_words = 0;
    auto padded = user;
    padded.tweets.push_back(empty);
    ad::Tape tape;
    const auto fw = model.forward_user(tape, model.stage(tape), padded);
    CHECK(fw.used_tweets.size() == user.tweets.size());
    const Tensor masked_probs = tape.value(fw.logits);
    (void)masked_probs;
    CHECK(model.predict_probs(padded) == with_all);

    models::EncodedUser all_empty;
    all_empty.user_id = "empty";
    all_empty.label = 0;
    all_empty.tweets = {empty, empty};
    CHECK_THROWS_AS(static_cast<void>(model.predict_probs(all_empty)), InputError);
}

TEST_CASE("rnnwa_ngram: head widens by lsa_k and ignores a zero LSA block") {
    Fixture fx;
    const auto cfg = toy_config(Variant::rnnwa_ngram);
    Model model(cfg, &fx.embeddings, nullptr);

    const auto tensors = model.named_tensors();
    const auto head = std::find_if(tensors.begin(), tensors.end(), [](const auto& nt) {
        return nt.first == "rnnwa_ngram.head.weight";
    });
    REQUIRE(head != tensors.end());
    CHECK(head->second.shape() == std::vector<std::size_t>{2 * 6 + 7, 2});

    auto user = encode_user(fx.corpus.users[7], cfg, &fx.embeddings.vocab, nullptr);
    user.lsa = Tensor({7});  // all zeros
    const Tensor base = model.predict_probs(user);

    // Scrambling the LSA rows of the head must not change a zero-LSA forward.
    auto scrambled = tensors;
    for (auto& [name, value] : scrambled) {
        if (name != "rnnwa_ngram.head.weight") continue;
        for (std::size_t r = 12; r < 19; ++r)
            for (std::size_t c = 0; c < 2; ++c) value.at(r, c) = 17.0 + double(r + c);
    }
    model.load_tensors(scrambled);
    CHECK(model.predict_probs(user) == base);

    // wrong LSA length is an input error
    user.lsa = Tensor({3});
    CHECK_THROWS_AS(static_cast<void>(model.predict_probs(user)), InputError);
}

TEST_CASE("trained rnnwa puts its tweet attention on marker tweets") {
    // Corpus where only ~40% of tweets carry the gender marker; after a short
    // training run the tweet-level attention should concentrate there.
    SynthSpec spec;
    spec.n_users = 16;
    spec.tweets_per_user = 5;
    spec.marker_prob = 0.4;
    spec.seed = 21;
    const auto corpus_ds = testsupport::make_marker_corpus(spec);
    const auto embeddings = testsupport::make_synth_embeddings(10);

    auto cfg = toy_config(Variant::rnnwa);
    cfg.seed = 1;
    Model model(cfg, &embeddings, nullptr);
    const auto encoded = encode_dataset(corpus_ds, cfg, &embeddings.vocab, nullptr);

    train::TrainConfig tcfg;
    tcfg.epochs = 25;
    tcfg.batch_users = 4;
    tcfg.lr = 0.02;
    tcfg.l2_lambda = 0.0;
    tcfg.seed = 2;
    (void)train::train_model(model, encoded, encoded, tcfg);

    double marker_mass = 0.0, total_mass = 0.0;
    for (std::size_t ui = 0; ui < encoded.size(); ++ui) {
        ad::Tape tape;
        const auto fw = model.forward_user(tape, model.stage(tape), encoded[ui]);
        const Tensor w = tape.value(fw.tweet_weights);
        for (std::size_t j = 0; j < fw.used_tweets.size(); ++j) {
            const auto& text = corpus_ds.users[ui].tweets[fw.used_tweets[j]].text;
            const bool marked = text.find(testsupport::kFemaleMarker) != std::string::npos ||
                                text.find(testsupport::kMaleMarker) != std::string::npos;
            if (marked) marker_mass += w[j];
            total_mass += w[j];
        }
    }
    // brute-force comparison: mass on marker tweets exceeds mass on the rest
    CHECK(marker_mass > total_mass - marker_mass);
    CHECK(marker_mass / total_mass > 0.5);
}
