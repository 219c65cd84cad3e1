#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "profiler/corpus.hpp"
#include "profiler/features.hpp"
#include "profiler/nn.hpp"
#include "profiler/tape.hpp"
#include "profiler/text.hpp"

namespace profiler::models {

enum class Variant { rnn, rnnwa, cnn, cnnwa, rnnwa_ngram };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);  // accepts "rnnwa-ngram" too

bool uses_words(Variant v);
bool uses_chars(Variant v);
bool has_tweet_attention(Variant v);  // rnnwa, cnnwa, rnnwa_ngram

struct ModelConfig {
    Variant variant = Variant::rnnwa;
    corpus::Lang lang = corpus::Lang::en;
    int d_cells = 100;       // GRU units per direction
    int n_filters = 100;     // per convolution width
    int d_char = 25;
    int embed_dim = 200;
    int max_tokens = 40;
    int max_chars = 150;
    int lsa_k = 300;
    std::uint64_t seed = 0;
    bool trainable_embeddings = false;
};

/// CLI-level validation against the supported hyperparameter grids
/// (cells {50..150 step 25}, filters {50..125 step 25}, d_char 25,
/// embed_dim 200). The library itself accepts any positive sizes.
void validate_grid(const ModelConfig& cfg, bool allow_off_grid);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& json_text);

/// One user, encoded and ready for a forward pass.
struct EncodedUser {
    std::string user_id;
    int label = -1;  // 0 = female, 1 = male, -1 = unlabeled
    std::vector<text::EncodedTweet> tweets;
    Tensor lsa;      // (lsa_k,) for the rnnwa_ngram variant, else empty
};

EncodedUser encode_user(const corpus::UserRecord& user, const ModelConfig& cfg,
                        const text::Vocabulary* vocab, const text::CharAlphabet* alphabet,
                        const features::LsaProjector* projector = nullptr);

std::vector<EncodedUser> encode_dataset(const corpus::Dataset& dataset, const ModelConfig& cfg,
                                        const text::Vocabulary* vocab,
                                        const text::CharAlphabet* alphabet,
                                        const features::LsaProjector* projector = nullptr,
                                        int threads = 1);

class Model {
public:
    /// Word variants need embeddings; char variants need an alphabet. The
    /// embeddings stay borrowed (they can be large); the alphabet is copied.
    Model(const ModelConfig& cfg, const text::WordEmbeddings* embeddings,
          const text::CharAlphabet* alphabet);

    const ModelConfig& config() const { return cfg_; }
    const text::CharAlphabet& alphabet() const { return alphabet_; }
    const text::WordEmbeddings* embeddings() const { return embeddings_; }

    /// Parameters in registration order (also the init and Adam order).
    std::vector<ad::Parameter*>& parameters() { return params_; }
    const std::vector<ad::Parameter*>& parameters() const { return params_; }

    void zero_grads();

    struct Staged {
        nn::StagedGru gru_fwd{}, gru_bwd{};
        nn::StagedAttention word_attn{}, tweet_attn{};
        nn::StagedConv conv{};
        nn::StagedDense head{};
        ad::Tape::Id char_emb = -1;
        ad::Tape::Id word_emb = -1;   // staged only when trainable
        nn::StageSlots slots;         // registry order
    };
    Staged stage(ad::Tape& tape) const;

    /// Embeddings -> BiGRU -> word-level attention. Throws InputError on an
    /// empty (all-pad) tweet; callers skip those at the tweet level.
    ad::Tape::Id encode_tweet_rnn(ad::Tape& tape, const Staged& staged,
                                  const text::EncodedTweet& tweet) const;
    /// Char embeddings -> conv bank. Requires >= 3 real characters.
    ad::Tape::Id encode_tweet_cnn(ad::Tape& tape, const Staged& staged,
                                  const text::EncodedTweet& tweet) const;

    struct UserForward {
        ad::Tape::Id logits = -1;              // (2,)
        ad::Tape::Id tweet_weights = -1;       // attention variants only
        std::vector<ad::Tape::Id> tweet_logits;  // averaging variants, per used tweet
        std::vector<std::size_t> used_tweets;  // indices into EncodedUser::tweets
        Tensor user_probs;                     // (2,) probabilities as plain values
    };

    /// Attention variants: tweet vectors -> tweet-level attention -> dense.
    /// Averaging variants: per-tweet dense -> per-tweet probabilities ->
    /// arithmetic mean (summed in canonically sorted order, so the user
    /// prediction is exactly permutation invariant) -> log as logits.
    /// rnnwa_ngram additionally concatenates the user's frozen LSA vector
    /// before the final dense layer.
    UserForward forward_user(ad::Tape& tape, const Staged& staged, const EncodedUser& user) const;

    /// Values-only convenience: stages a fresh tape and returns user_probs.
    Tensor predict_probs(const EncodedUser& user) const;

    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    void load_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors);

private:
    ad::Tape::Id tweet_vector(ad::Tape& tape, const Staged& staged,
                              const text::EncodedTweet& tweet) const;

    ModelConfig cfg_;
    const text::WordEmbeddings* embeddings_ = nullptr;
    text::CharAlphabet alphabet_;

    nn::GruParams gru_fwd_, gru_bwd_;
    nn::AttentionParams word_attn_, tweet_attn_;
    nn::ConvBank conv_;
    nn::DenseParams head_;
    ad::Parameter char_emb_;
    ad::Parameter word_emb_;  // copy of the table when trainable_embeddings

    std::vector<ad::Parameter*> params_;
};

/// Model checkpoints carry the config, the char alphabet (char variants) and
/// the embeddings-file digest in the manifest; parameters go into the f32
/// blob. Trainable word embeddings are stored as a parameter; the vocabulary
/// still comes from the embeddings file, whose digest must then match.
void save_model_checkpoint(const std::filesystem::path& path, const Model& model,
                           std::uint64_t embeddings_digest);

struct LoadedModel {
    ModelConfig cfg;
    text::CharAlphabet alphabet;
    std::uint64_t embeddings_digest = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;
};
LoadedModel load_model_checkpoint(const std::filesystem::path& path);

/// Rebuilds a Model from a loaded checkpoint. `embeddings` is required for
/// word variants and must match the recorded digest when one was recorded.
Model instantiate_model(const LoadedModel& loaded, const text::WordEmbeddings* embeddings,
                        std::uint64_t embeddings_digest = 0);

}  // namespace profiler::models
