#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace profiler::corpus {

enum class Lang { en, es, ar };
enum class Gender { female, male };  // class 0 = female, class 1 = male

std::string to_string(Lang lang);
std::string to_string(Gender g);
Lang lang_from_string(const std::string& s);        // throws InputError on unknown
Gender gender_from_string(const std::string& s);    // case-insensitive, throws on unknown

struct Tweet {
    std::string text;  // raw UTF-8, <= 5000 bytes, non-empty after trimming, no NUL

    bool operator==(const Tweet&) const = default;
};

struct UserRecord {
    std::string user_id;
    Lang lang = Lang::en;
    std::vector<Tweet> tweets;          // ordered, non-empty
    std::optional<Gender> label;

    bool operator==(const UserRecord&) const = default;
};

struct Dataset {
    Lang lang = Lang::en;
    std::vector<UserRecord> users;
    bool labeled = false;  // true iff every user carries a label

    bool operator==(const Dataset&) const = default;
};

struct SplitSpec {
    double train_fraction = 0.8;  // in (0, 1)
    std::uint64_t seed = 0;
    bool stratified = false;      // optional per-gender split; off by default
};

/// Loads a PAN-style directory: one `<user_id>.xml` per user (an `<author>`
/// root with one `<document>` element per tweet) plus `truth.txt` with lines
/// `user_id:::gender`. Users are ordered by file name; tweet order follows
/// document order. A directory with neither XML files nor truth entries
/// yields an empty labeled dataset.
Dataset load_pan_dir(const std::filesystem::path& dir, Lang lang);

/// One JSON object per line: {"user_id": ..., "lang": ..., "tweets": [...],
/// "label": "female"|"male"?}. labeled is true iff every record has a label.
Dataset load_jsonl(const std::filesystem::path& path);

/// Canonical inverse of load_jsonl (key order user_id, lang, tweets, label;
/// LF line endings).
void write_jsonl(const Dataset& dataset, const std::filesystem::path& path);

/// Deterministic user-level split: user order is shuffled by SplitMix64
/// seeded with spec.seed (Fisher-Yates, see rng.hpp), the first
/// ceil(train_fraction * N) users form the train part. Partitions the input
/// exactly; both sides must end up non-empty.
std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec);

/// Validates the type invariants (tweet sizes, NUL bytes, duplicate ids,
/// label completeness). Loaders call this; throws InputError on violation.
void validate(const Dataset& dataset);

}  // namespace profiler::corpus
