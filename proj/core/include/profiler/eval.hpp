#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "profiler/models.hpp"
#include "profiler/train.hpp"

namespace profiler::eval {

struct EvalReport {
    std::string model_id;
    models::Variant variant = models::Variant::rnnwa;
    std::optional<double> tweet_accuracy;  // absent for tweet-attention variants
    double user_accuracy = 0.0;
    long n_users = 0;
    long n_correct_users = 0;
    long tie_users = 0;  // exact 0.5/0.5 predictions, scored incorrect
    long tweet_total = 0;
    long tweet_correct = 0;
    long tweet_ties = 0;
    std::array<std::array<long, 2>, 2> confusion{};  // [true][predicted]

    struct Prediction {
        std::string user_id;
        int label = -1;
        int predicted = -1;
        double p_female = 0.0;
        bool tie = false;
    };
    std::vector<Prediction> predictions;
};

/// Per-user argmax of forward_user probabilities against the label. An exact
/// 0.5/0.5 tie is scored incorrect (and counted to the wrong class in the
/// confusion table) and tallied in tie_users.
EvalReport user_level_accuracy(const models::Model& model,
                               const std::vector<models::EncodedUser>& users, int threads = 1);

/// Fraction of individual tweets whose argmax matches the user label; ties
/// count as incorrect and are tallied separately. Only defined for variants
/// without tweet attention; throws InputError otherwise.
double tweet_level_accuracy(const models::Model& model,
                            const std::vector<models::EncodedUser>& users, int threads = 1,
                            long* ties_out = nullptr, long* total_out = nullptr);

/// Serialized as JSONL: one summary object line, then one prediction object
/// per user.
std::string eval_report_to_jsonl(const EvalReport& report);

// ---- Figure-3 style comparison ------------------------------------------------

struct ScatterRow {
    std::string trial_id;
    std::string config_label;   // e.g. "cells=100"
    double tweet_acc = 0.0;     // on the evaluation set
    double user_acc = 0.0;
    std::string selection;      // best_tweet | best_user | both | other
};

struct ScatterReport {
    std::vector<ScatterRow> rows;
    double mean_user_acc_best_user = 0.0;
    double mean_user_acc_best_tweet = 0.0;
};

/// Takes >= 6 trials of a no-tweet-attention variant, re-evaluates the 3 best
/// checkpoints by validation tweet accuracy and the 3 best by validation user
/// accuracy on eval_users, and reports both metrics for each. A checkpoint
/// selected by both rankings appears once, tagged "both". Remaining trials
/// are evaluated from their best_user checkpoint and tagged "other".
ScatterReport scatter_experiment(const std::vector<train::TrialResult>& trials,
                                 const train::GridContext& ctx,
                                 const std::vector<models::EncodedUser>& eval_users,
                                 int threads = 1);

/// `tweet_acc<TAB>user_acc<TAB>selection<TAB>config` lines for plotting.
std::string scatter_report_tsv(const ScatterReport& report);

}  // namespace profiler::eval
