#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "profiler/corpus.hpp"
#include "profiler/tensor.hpp"

namespace profiler::features {

/// One document per user: the user's tweets joined by single newlines.
struct UserDoc {
    std::string text;

    static UserDoc from_user(const corpus::UserRecord& user);
};

struct NgramSpec {
    std::vector<int> word_ns;   // e.g. {1,2,3}
    std::vector<int> char_ns;   // e.g. {3,4,5}
    long min_total_freq = 2;    // total corpus count below this is pruned

    /// char {3,4,5} for every language; word {1,2,3} for en, {1,2} for es/ar.
    static NgramSpec defaults_for(corpus::Lang lang);
};

/// Counts per namespaced key. Word n-grams run over tokenize() output of the
/// whole document (w-grams may span tweets); char n-grams run over the
/// lower-cased character stream of each line separately, spaces included, so
/// c-grams never cross a tweet boundary. Keys look like "w2:a\x1fb" (words
/// joined by the unit separator) and "c3:abc".
std::map<std::string, long> extract_ngrams(const UserDoc& doc, const NgramSpec& spec);

struct TfidfModel {
    std::map<std::string, std::size_t> feature_index;  // key -> column (lexicographic)
    std::vector<double> idf;                           // one per column, > 0

    std::size_t n_features() const { return idf.size(); }
};

/// Keeps keys whose total corpus count >= spec.min_total_freq;
/// idf(t) = ln((1 + N) / (1 + df(t))) + 1. Throws if nothing survives.
TfidfModel fit_tfidf(const std::vector<UserDoc>& train_docs, const NgramSpec& spec);

/// v[c] = count(t_c in doc) * idf[c], then L2-normalized (zero stays zero).
std::vector<double> transform_tfidf(const TfidfModel& model, const UserDoc& doc,
                                    const NgramSpec& spec);

struct LsaProjector {
    TfidfModel tfidf;
    NgramSpec spec;
    Tensor components;                   // (F, k), orthonormal columns
    std::vector<double> singular_values; // non-increasing, length k

    std::size_t k() const { return singular_values.size(); }
};

struct LsaFit {
    Tensor components;
    std::vector<double> singular_values;
    std::size_t requested_k = 0;  // before clamping to min(rows, cols)
};

/// Top-k right singular vectors of the matrix via randomized subspace
/// iteration: Gaussian sketch with oversampling 10, 7 power iterations,
/// all randomness from SplitMix64(seed). k is clamped to min(rows, cols).
LsaFit fit_lsa(const Tensor& train_matrix, std::size_t k, std::uint64_t seed);

/// z = v^T components. Throws on length mismatch.
std::vector<double> project_lsa(const LsaProjector& projector, const std::vector<double>& tfidf_vec);

/// Convenience: transform + project.
std::vector<double> lsa_vector(const LsaProjector& projector, const UserDoc& doc);

/// Fits tf-idf + LSA on training users in one pass. Returned projector is
/// frozen; validation/test users are projected without refit.
LsaProjector fit_projector(const std::vector<corpus::UserRecord>& train_users,
                           const NgramSpec& spec, std::size_t k, std::uint64_t seed);

/// Sidecar text format: one `key<TAB>column<TAB>idf` line per feature, UTF-8.
std::string tfidf_sidecar_text(const TfidfModel& model);
TfidfModel tfidf_from_sidecar_text(const std::string& text);

/// Persists the projector via the checkpoint container (tensors
/// "lsa.components" and "lsa.singular_values") plus a `<path>.tfidf` sidecar
/// holding the feature-to-column map and full-precision idf values.
void save_projector(const std::filesystem::path& path, const LsaProjector& projector);
LsaProjector load_projector(const std::filesystem::path& path);

}  // namespace profiler::features
