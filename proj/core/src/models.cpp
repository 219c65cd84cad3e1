#include "profiler/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "profiler/errors.hpp"
#include "profiler/parallel.hpp"

namespace profiler::models {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::rnn: return "rnn";
        case Variant::rnnwa: return "rnnwa";
        case Variant::cnn: return "cnn";
        case Variant::cnnwa: return "cnnwa";
        case Variant::rnnwa_ngram: return "rnnwa_ngram";
    }
    return "rnnwa";
}

Variant variant_from_string(const std::string& s) {
    if (s == "rnn") return Variant::rnn;
    if (s == "rnnwa") return Variant::rnnwa;
    if (s == "cnn") return Variant::cnn;
    if (s == "cnnwa") return Variant::cnnwa;
    if (s == "rnnwa_ngram" || s == "rnnwa-ngram") return Variant::rnnwa_ngram;
    throw InputError("unknown model variant '" + s + "'");
}

bool uses_words(Variant v) {
    return v == Variant::rnn || v == Variant::rnnwa || v == Variant::rnnwa_ngram;
}

bool uses_chars(Variant v) { return v == Variant::cnn || v == Variant::cnnwa; }

bool has_tweet_attention(Variant v) {
    return v == Variant::rnnwa || v == Variant::cnnwa || v == Variant::rnnwa_ngram;
}

void validate_grid(const ModelConfig& cfg, bool allow_off_grid) {
    if (cfg.d_cells <= 0 || cfg.n_filters <= 0 || cfg.d_char <= 0 || cfg.embed_dim <= 0 ||
        cfg.max_tokens <= 0 || cfg.max_chars <= 0 || cfg.lsa_k <= 0)
        throw InputError("model config: all sizes must be positive");
    if (allow_off_grid) return;
    auto on = [](int v, std::initializer_list<int> grid) {
        return std::find(grid.begin(), grid.end(), v) != grid.end();
    };
    if (uses_words(cfg.variant) && !on(cfg.d_cells, {50, 75, 100, 125, 150}))
        throw InputError("d_cells=" + std::to_string(cfg.d_cells) +
                         " is off the supported grid {50,75,100,125,150}; pass --allow-off-grid "
                         "to override");
    if (uses_chars(cfg.variant) && !on(cfg.n_filters, {50, 75, 100, 125}))
        throw InputError("n_filters=" + std::to_string(cfg.n_filters) +
                         " is off the supported grid {50,75,100,125}; pass --allow-off-grid to "
                         "override");
    if (cfg.d_char != 25)
        throw InputError("d_char must be 25 (got " + std::to_string(cfg.d_char) + ")");
    if (uses_words(cfg.variant) && cfg.embed_dim != 200)
        throw InputError("embed_dim must be 200 (got " + std::to_string(cfg.embed_dim) + ")");
}

EncodedUser encode_user(const corpus::UserRecord& user, const ModelConfig& cfg,
                        const text::Vocabulary* vocab, const text::CharAlphabet* alphabet,
                        const features::LsaProjector* projector) {
    EncodedUser out;
    out.user_id = user.user_id;
    out.label = user.label ? (user.label == corpus::Gender::female ? 0 : 1) : -1;
    out.tweets.reserve(user.tweets.size());
    for (const auto& tweet : user.tweets) {
        text::EncodedTweet et;
        if (vocab) {
            const auto tokens = text::tokenize(tweet.text);
            text::encode_words(tokens, *vocab, static_cast<std::size_t>(cfg.max_tokens),
                               et.word_ids, et.word_mask);
            et.n_words = std::min(tokens.size(), static_cast<std::size_t>(cfg.max_tokens));
        }
        if (alphabet) {
            text::encode_chars(tweet.text, *alphabet, static_cast<std::size_t>(cfg.max_chars),
                               et.char_ids, et.char_mask);
            std::size_t n = 0;
            for (auto m : et.char_mask) n += m;
            et.n_chars = n;
        }
        out.tweets.push_back(std::move(et));
    }
    if (projector) {
        const auto z = features::lsa_vector(*projector, features::UserDoc::from_user(user));
        out.lsa = Tensor({z.size()}, std::vector<double>(z.begin(), z.end()));
    }
    return out;
}

std::vector<EncodedUser> encode_dataset(const corpus::Dataset& dataset, const ModelConfig& cfg,
                                        const text::Vocabulary* vocab,
                                        const text::CharAlphabet* alphabet,
                                        const features::LsaProjector* projector, int threads) {
    std::vector<EncodedUser> out(dataset.users.size());
    parallel_for(dataset.users.size(), threads, [&](std::size_t i) {
        out[i] = encode_user(dataset.users[i], cfg, vocab, alphabet, projector);
    });
    return out;
}

Model::Model(const ModelConfig& cfg, const text::WordEmbeddings* embeddings,
             const text::CharAlphabet* alphabet)
    : cfg_(cfg), embeddings_(embeddings) {
    SplitMix64 rng(cfg.seed);
    const std::string prefix = to_string(cfg.variant);
    const auto d_cells = static_cast<std::size_t>(cfg.d_cells);
    const auto n_filters = static_cast<std::size_t>(cfg.n_filters);
    const auto d_char = static_cast<std::size_t>(cfg.d_char);

    if (uses_words(cfg.variant)) {
        if (!embeddings) throw InputError("model: " + prefix + " requires word embeddings");
        if (embeddings->vocab.embedding_dim != static_cast<std::size_t>(cfg.embed_dim))
            throw InputError("model: embedding dim " +
                             std::to_string(embeddings->vocab.embedding_dim) +
                             " does not match config embed_dim " + std::to_string(cfg.embed_dim));
        const std::size_t d_state = 2 * d_cells;
        gru_fwd_ = nn::GruParams(prefix + ".gru_fwd", static_cast<std::size_t>(cfg.embed_dim),
                                 d_cells, rng);
        gru_bwd_ = nn::GruParams(prefix + ".gru_bwd", static_cast<std::size_t>(cfg.embed_dim),
                                 d_cells, rng);
        word_attn_ = nn::AttentionParams(prefix + ".word_attn", d_state, d_state, rng);
        if (has_tweet_attention(cfg.variant))
            tweet_attn_ = nn::AttentionParams(prefix + ".tweet_attn", d_state, d_state, rng);
        const std::size_t head_in =
            cfg.variant == Variant::rnnwa_ngram ? d_state + static_cast<std::size_t>(cfg.lsa_k)
                                                : d_state;
        head_ = nn::DenseParams(prefix + ".head", head_in, 2, rng);

        gru_fwd_.collect(params_);
        gru_bwd_.collect(params_);
        word_attn_.collect(params_);
        if (has_tweet_attention(cfg.variant)) tweet_attn_.collect(params_);
        head_.collect(params_);

        if (cfg.trainable_embeddings) {
            word_emb_ = ad::Parameter(prefix + ".word_embedding", embeddings->table.matrix, false);
            params_.push_back(&word_emb_);
        }
    } else {
        if (!alphabet) throw InputError("model: " + prefix + " requires a character alphabet");
        alphabet_ = *alphabet;
        char_emb_ = ad::Parameter(
            prefix + ".char_embedding",
            nn::glorot_uniform({alphabet_.size(), d_char}, alphabet_.size(), d_char, rng), false);
        for (std::size_t c = 0; c < d_char; ++c) char_emb_.value.at(0, c) = 0.0;  // pad row
        conv_ = nn::ConvBank(prefix + ".conv", d_char, n_filters, rng);
        const std::size_t d_state = 3 * n_filters;
        if (has_tweet_attention(cfg.variant))
            tweet_attn_ = nn::AttentionParams(prefix + ".tweet_attn", d_state, d_state, rng);
        head_ = nn::DenseParams(prefix + ".head", d_state, 2, rng);

        params_.push_back(&char_emb_);
        conv_.collect(params_);
        if (has_tweet_attention(cfg.variant)) tweet_attn_.collect(params_);
        head_.collect(params_);
    }
    if (alphabet && uses_words(cfg.variant)) alphabet_ = *alphabet;  // kept for serialization
}

void Model::zero_grads() {
    for (ad::Parameter* p : params_) p->zero_grad();
}

Model::Staged Model::stage(ad::Tape& tape) const {
    Staged s;
    if (uses_words(cfg_.variant)) {
        s.gru_fwd = nn::stage(tape, gru_fwd_, &s.slots);
        s.gru_bwd = nn::stage(tape, gru_bwd_, &s.slots);
        s.word_attn = nn::stage(tape, word_attn_, &s.slots);
        if (has_tweet_attention(cfg_.variant)) s.tweet_attn = nn::stage(tape, tweet_attn_, &s.slots);
        s.head = nn::stage(tape, head_, &s.slots);
        if (cfg_.trainable_embeddings) s.word_emb = nn::stage_param(tape, word_emb_, &s.slots);
    } else {
        s.char_emb = nn::stage_param(tape, char_emb_, &s.slots);
        s.conv = nn::stage(tape, conv_, &s.slots);
        if (has_tweet_attention(cfg_.variant)) s.tweet_attn = nn::stage(tape, tweet_attn_, &s.slots);
        s.head = nn::stage(tape, head_, &s.slots);
    }
    return s;
}

ad::Tape::Id Model::encode_tweet_rnn(ad::Tape& tape, const Staged& staged,
                                     const text::EncodedTweet& tweet) const {
    if (tweet.n_words == 0) throw InputError("encode_tweet_rnn: empty tweet");
    const std::size_t n = tweet.n_words;
    const std::vector<std::int32_t> ids(tweet.word_ids.begin(),
                                        tweet.word_ids.begin() + static_cast<std::ptrdiff_t>(n));

    ad::Tape::Id xs;
    if (cfg_.trainable_embeddings) {
        xs = tape.embedding_rows(staged.word_emb, ids);
    } else {
        // Frozen table: gather rows outside the tape.
        const Tensor& table = embeddings_->table.matrix;
        const std::size_t dim = table.dim(1);
        Tensor rows({n, dim});
        for (std::size_t i = 0; i < n; ++i) {
            const double* src = table.data() + static_cast<std::size_t>(ids[i]) * dim;
            for (std::size_t j = 0; j < dim; ++j) rows.at(i, j) = src[j];
        }
        xs = tape.constant(std::move(rows));
    }

    const std::vector<std::uint8_t> ones(n, 1);
    const auto states = nn::bigru_encode(tape, staged.gru_fwd, staged.gru_bwd, xs, ones);
    return nn::attention_pool(tape, staged.word_attn, states, ones).pooled;
}

ad::Tape::Id Model::encode_tweet_cnn(ad::Tape& tape, const Staged& staged,
                                     const text::EncodedTweet& tweet) const {
    if (tweet.n_chars < nn::ConvBank::widths.front())
        throw InputError("encode_tweet_cnn: fewer than 3 real characters");
    const std::vector<std::int32_t> ids(
        tweet.char_ids.begin(), tweet.char_ids.begin() + static_cast<std::ptrdiff_t>(tweet.n_chars));
    const auto xs = tape.embedding_rows(staged.char_emb, ids);
    return nn::conv_encode(tape, staged.conv, xs, static_cast<std::size_t>(cfg_.n_filters));
}

ad::Tape::Id Model::tweet_vector(ad::Tape& tape, const Staged& staged,
                                 const text::EncodedTweet& tweet) const {
    return uses_words(cfg_.variant) ? encode_tweet_rnn(tape, staged, tweet)
                                    : encode_tweet_cnn(tape, staged, tweet);
}

Model::UserForward Model::forward_user(ad::Tape& tape, const Staged& staged,
                                       const EncodedUser& user) const {
    UserForward out;
    for (std::size_t i = 0; i < user.tweets.size(); ++i) {
        const auto& t = user.tweets[i];
        const bool usable = uses_words(cfg_.variant) ? t.n_words >= 1
                                                     : t.n_chars >= nn::ConvBank::widths.front();
        if (usable) out.used_tweets.push_back(i);
    }
    if (out.used_tweets.empty())
        throw InputError("forward_user: all tweets of user '" + user.user_id + "' are empty");

    std::vector<ad::Tape::Id> vectors;
    vectors.reserve(out.used_tweets.size());
    for (std::size_t i : out.used_tweets)
        vectors.push_back(tweet_vector(tape, staged, user.tweets[i]));

    if (has_tweet_attention(cfg_.variant)) {
        const auto items = tape.stack_rows(vectors);
        const std::vector<std::uint8_t> ones(vectors.size(), 1);
        const auto pooled = nn::attention_pool(tape, staged.tweet_attn, items, ones);
        out.tweet_weights = pooled.weights;

        ad::Tape::Id rep = pooled.pooled;
        if (cfg_.variant == Variant::rnnwa_ngram) {
            if (user.lsa.rank() != 1 ||
                user.lsa.dim(0) != static_cast<std::size_t>(cfg_.lsa_k))
                throw InputError("forward_user: user '" + user.user_id +
                                 "' has no LSA vector of length " + std::to_string(cfg_.lsa_k));
            const auto lsa = tape.constant(user.lsa);  // constant input: no gradient upstream
            rep = tape.concat({rep, lsa}, 0);
        }
        out.logits = nn::dense(tape, staged.head, rep);

        const Tensor& lv = tape.value(out.logits);
        const double mx = std::max(lv[0], lv[1]);
        const double e0 = std::exp(lv[0] - mx), e1 = std::exp(lv[1] - mx);
        out.user_probs = Tensor({2}, {e0 / (e0 + e1), e1 / (e0 + e1)});
        return out;
    }

    // Averaging variants: per-tweet probabilities, then their arithmetic mean.
    const Tensor ones_mask = Tensor::full({2}, 1.0);
    std::vector<ad::Tape::Id> probs;
    probs.reserve(vectors.size());
    for (const auto v : vectors) {
        const auto logits_i = nn::dense(tape, staged.head, v);
        out.tweet_logits.push_back(logits_i);
        probs.push_back(tape.masked_softmax(logits_i, ones_mask));
    }

    // Sum in canonically sorted order so the user prediction is exactly
    // invariant under tweet permutations.
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Tensor& pa = tape.value(probs[a]);
        const Tensor& pb = tape.value(probs[b]);
        if (pa[0] != pb[0]) return pa[0] < pb[0];
        return pa[1] < pb[1];
    });
    ad::Tape::Id sum = probs[order[0]];
    for (std::size_t i = 1; i < order.size(); ++i) sum = tape.add(sum, probs[order[i]]);
    const auto mean = tape.scale(sum, 1.0 / static_cast<double>(probs.size()));
    out.logits = tape.log(mean);
    out.user_probs = tape.value(mean);
    return out;
}

Tensor Model::predict_probs(const EncodedUser& user) const {
    ad::Tape tape;
    const auto staged = stage(tape);
    return forward_user(tape, staged, user).user_probs;
}

std::vector<std::pair<std::string, Tensor>> Model::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(params_.size());
    for (const ad::Parameter* p : params_) out.emplace_back(p->name, p->value);
    return out;
}

void Model::load_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors) {
    if (tensors.size() != params_.size())
        throw InputError("load_tensors: checkpoint has " + std::to_string(tensors.size()) +
                         " tensors, model expects " + std::to_string(params_.size()));
    for (ad::Parameter* p : params_) {
        const auto it = std::find_if(tensors.begin(), tensors.end(),
                                     [&](const auto& nt) { return nt.first == p->name; });
        if (it == tensors.end())
            throw InputError("load_tensors: missing tensor '" + p->name + "'");
        if (it->second.shape() != p->value.shape())
            throw InputError("load_tensors: shape mismatch for '" + p->name + "'");
        p->value = it->second;
        p->zero_grad();
    }
}

}  // namespace profiler::models
