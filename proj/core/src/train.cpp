#include "profiler/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "profiler/errors.hpp"
#include "profiler/eval.hpp"
#include "profiler/parallel.hpp"
#include "profiler/rng.hpp"

namespace profiler::train {

AdamState::AdamState(const std::vector<ad::Parameter*>& params, double lr_) {
    lr = lr_;
    m.reserve(params.size());
    v.reserve(params.size());
    for (const ad::Parameter* p : params) {
        m.emplace_back(p->value.shape());
        v.emplace_back(p->value.shape());
    }
}

void adam_step(AdamState& state, std::vector<ad::Parameter*>& params, double l2_lambda) {
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state/parameter count mismatch");
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        ad::Parameter& p = *params[i];
        if (!p.grad.all_finite())
            throw NumericError("adam_step: non-finite gradient for parameter '" + p.name + "'");
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const double lambda = p.apply_l2 ? l2_lambda : 0.0;
        for (std::size_t j = 0; j < p.value.numel(); ++j) {
            const double g = p.grad[j] + lambda * p.value[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p.value[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
        p.zero_grad();
    }
}

ad::Tape::Id user_loss(const models::Model& model, ad::Tape& tape,
                       const models::Model::Staged& staged, const models::EncodedUser& user) {
    if (user.label < 0) throw InputError("user_loss: user '" + user.user_id + "' is unlabeled");
    const auto fw = model.forward_user(tape, staged, user);
    if (models::has_tweet_attention(model.config().variant))
        return tape.cross_entropy_from_logits(fw.logits, user.label);
    // Averaging variants train on the mean per-tweet cross-entropy: each tweet
    // carries its user's label, matching the per-tweet prediction setup.
    ad::Tape::Id sum = -1;
    for (const auto logits_i : fw.tweet_logits) {
        const auto ce = tape.cross_entropy_from_logits(logits_i, user.label);
        sum = sum < 0 ? ce : tape.add(sum, ce);
    }
    return tape.scale(sum, 1.0 / static_cast<double>(fw.tweet_logits.size()));
}

namespace {

Snapshot make_snapshot(const models::Model& model, int epoch, double tweet_acc, double user_acc) {
    Snapshot s;
    s.config = model.config();
    s.tensors = model.named_tensors();
    s.epoch = epoch;
    s.val_tweet_acc = tweet_acc;
    s.val_user_acc = user_acc;
    return s;
}

}  // namespace

TrialResult train_model(models::Model& model, const std::vector<models::EncodedUser>& train_users,
                        const std::vector<models::EncodedUser>& val_users, const TrainConfig& cfg,
                        const std::string& trial_id, const EpochCallback& on_epoch) {
    if (train_users.empty() || val_users.empty())
        throw InputError("train_model: train and validation sets must be non-empty");
    for (const auto& u : train_users)
        if (u.label < 0) throw InputError("train_model: unlabeled user '" + u.user_id + "'");
    if (cfg.batch_users < 1) throw InputError("train_model: batch_users must be >= 1");

    TrialResult result;
    result.trial_id = trial_id;
    result.config = model.config();

    const bool averaging = !models::has_tweet_attention(model.config().variant);
    auto evaluate = [&](int epoch, double train_loss) {
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = train_loss;
        stats.user_acc = eval::user_level_accuracy(model, val_users, cfg.threads).user_accuracy;
        stats.tweet_acc = averaging
                              ? eval::tweet_level_accuracy(model, val_users, cfg.threads)
                              : std::numeric_limits<double>::quiet_NaN();
        result.epochs.push_back(stats);
        if (on_epoch) on_epoch(trial_id, stats);
        if (result.best_by_user.empty() || stats.user_acc > result.best_by_user.val_user_acc)
            result.best_by_user = make_snapshot(model, epoch, stats.tweet_acc, stats.user_acc);
        if (averaging &&
            (result.best_by_tweet.empty() || stats.tweet_acc > result.best_by_tweet.val_tweet_acc))
            result.best_by_tweet = make_snapshot(model, epoch, stats.tweet_acc, stats.user_acc);
    };

    evaluate(0, std::numeric_limits<double>::quiet_NaN());

    AdamState state(model.parameters(), cfg.lr);
    SplitMix64 rng(cfg.seed);
    auto& params = model.parameters();
    const std::size_t n_params = params.size();

    std::vector<std::size_t> order(train_users.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_users)) {
            const std::size_t batch_n =
                std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_users));

            struct UserGrads {
                double loss = 0.0;
                std::vector<Tensor> grads;
            };
            std::vector<UserGrads> per_user(batch_n);
            parallel_for(batch_n, cfg.threads, [&](std::size_t b) {
                const auto& user = train_users[order[start + b]];
                ad::Tape tape;
                const auto staged = model.stage(tape);
                const auto loss = user_loss(model, tape, staged, user);
                tape.backward(loss);
                per_user[b].loss = tape.value(loss)[0];
                per_user[b].grads.reserve(n_params);
                for (const auto& [param, id] : staged.slots) per_user[b].grads.push_back(tape.grad(id));
            });

            // Deterministic ordered reduction keyed by position in the batch.
            model.zero_grads();
            bool diverged = false;
            const double inv_b = 1.0 / static_cast<double>(batch_n);
            for (std::size_t b = 0; b < batch_n; ++b) {
                if (!std::isfinite(per_user[b].loss)) diverged = true;
                loss_sum += per_user[b].loss;
                for (std::size_t p = 0; p < n_params; ++p)
                    params[p]->grad.add_scaled(per_user[b].grads[p], inv_b);
            }
            if (diverged) {
                result.failed = true;
                result.failure = "training loss diverged (non-finite) in epoch " +
                                 std::to_string(epoch);
                return result;
            }
            try {
                adam_step(state, params, cfg.l2_lambda);
            } catch (const NumericError& e) {
                result.failed = true;
                result.failure = e.what();
                return result;
            }
        }

        evaluate(epoch, loss_sum / static_cast<double>(train_users.size()));
    }
    return result;
}

std::vector<TrialResult> grid_search(const models::ModelConfig& base, const std::vector<int>& grid,
                                     const GridContext& ctx,
                                     const std::vector<models::EncodedUser>& train_users,
                                     const std::vector<models::EncodedUser>& val_users,
                                     const TrainConfig& cfg, const EpochCallback& on_epoch) {
    if (grid.empty()) throw InputError("grid_search: empty grid");
    const bool word_based = models::uses_words(base.variant);

    std::vector<TrialResult> results(grid.size());
    std::vector<int> grid_values = grid;
    // Trials are independent; fan out across grid points, one thread each.
    parallel_for(grid.size(), cfg.threads, [&](std::size_t i) {
        models::ModelConfig trial_cfg = base;
        if (word_based)
            trial_cfg.d_cells = grid_values[i];
        else
            trial_cfg.n_filters = grid_values[i];
        const std::string trial_id =
            "t" + std::to_string(i) + "-" + models::to_string(trial_cfg.variant) +
            (word_based ? "-c" : "-f") + std::to_string(grid_values[i]);
        models::Model model(trial_cfg, ctx.embeddings, ctx.alphabet);
        TrainConfig inner = cfg;
        inner.threads = 1;
        results[i] = train_model(model, train_users, val_users, inner, trial_id, on_epoch);
    });

    const std::size_t n_failed =
        static_cast<std::size_t>(std::count_if(results.begin(), results.end(),
                                               [](const TrialResult& r) { return r.failed; }));
    if (n_failed == results.size()) throw NumericError("grid_search: all trials failed");

    std::vector<std::size_t> idx(results.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (results[a].failed != results[b].failed) return !results[a].failed;
        const double ua = results[a].failed ? -1.0 : results[a].best_by_user.val_user_acc;
        const double ub = results[b].failed ? -1.0 : results[b].best_by_user.val_user_acc;
        if (ua != ub) return ua > ub;
        if (grid_values[a] != grid_values[b]) return grid_values[a] < grid_values[b];
        return a < b;
    });
    std::vector<TrialResult> sorted;
    sorted.reserve(results.size());
    for (std::size_t i : idx) sorted.push_back(std::move(results[i]));
    return sorted;
}

}  // namespace profiler::train
