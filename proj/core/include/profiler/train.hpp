#pragma once

#include <functional>
#include <string>
#include <vector>

#include "profiler/models.hpp"
#include "profiler/tape.hpp"

namespace profiler::train {

/// Adam with bias correction. The L2 term enters as a gradient contribution
/// l2_lambda * theta on parameters flagged apply_l2 (weight matrices only).
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long step_count = 0;
    std::vector<Tensor> m, v;  // aligned with the parameter list

    explicit AdamState(const std::vector<ad::Parameter*>& params, double lr = 1e-3);
};

/// One update from the gradients currently held in the parameters. Gradients
/// are zeroed afterwards. Throws NumericError naming the parameter on a
/// non-finite gradient.
void adam_step(AdamState& state, std::vector<ad::Parameter*>& params, double l2_lambda);

struct TrainConfig {
    int epochs = 15;
    int batch_users = 16;
    double lr = 1e-3;
    double l2_lambda = 1e-4;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct EpochStats {
    int epoch = 0;          // 0 is the pre-training evaluation
    double train_loss = 0;  // NaN for epoch 0
    double tweet_acc = 0;   // NaN for tweet-attention variants
    double user_acc = 0;
};

/// In-memory parameter snapshot with the validation metrics that selected it.
struct Snapshot {
    models::ModelConfig config;
    std::vector<std::pair<std::string, Tensor>> tensors;
    int epoch = -1;
    double val_tweet_acc = 0;
    double val_user_acc = 0;

    bool empty() const { return tensors.empty(); }
};

struct TrialResult {
    std::string trial_id;
    models::ModelConfig config;
    std::vector<EpochStats> epochs;
    Snapshot best_by_user;
    Snapshot best_by_tweet;  // empty for tweet-attention variants
    bool failed = false;
    std::string failure;
};

using EpochCallback = std::function<void(const std::string& trial_id, const EpochStats&)>;

/// Adam + cross-entropy (+ L2) over user batches. Users are reshuffled every
/// epoch from SplitMix64(cfg.seed); per-user gradients are computed on
/// independent tapes and reduced in user order, so results are identical for
/// any thread count. Loss per user: cross-entropy of the user logits for
/// tweet-attention variants, mean per-tweet cross-entropy for the averaging
/// variants. Divergence (non-finite loss) marks the trial failed instead of
/// throwing. epochs = 0 leaves only the epoch-0 evaluation.
TrialResult train_model(models::Model& model, const std::vector<models::EncodedUser>& train_users,
                        const std::vector<models::EncodedUser>& val_users, const TrainConfig& cfg,
                        const std::string& trial_id = "t0",
                        const EpochCallback& on_epoch = nullptr);

/// One value per grid point: d_cells for word variants, n_filters for char
/// variants. Trials run independently (parallel across grid points when
/// cfg.threads > 1) and are returned sorted by best user-level validation
/// accuracy, ties broken by the smaller grid value, then input order.
struct GridContext {
    const text::WordEmbeddings* embeddings = nullptr;
    const text::CharAlphabet* alphabet = nullptr;
};

std::vector<TrialResult> grid_search(const models::ModelConfig& base, const std::vector<int>& grid,
                                     const GridContext& ctx,
                                     const std::vector<models::EncodedUser>& train_users,
                                     const std::vector<models::EncodedUser>& val_users,
                                     const TrainConfig& cfg, const EpochCallback& on_epoch = nullptr);

/// Per-user loss node for the variant's training objective (see train_model).
ad::Tape::Id user_loss(const models::Model& model, ad::Tape& tape,
                       const models::Model::Staged& staged, const models::EncodedUser& user);

}  // namespace profiler::train
