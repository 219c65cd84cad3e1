#include "profiler/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "profiler/errors.hpp"
#include "profiler/parallel.hpp"

namespace profiler::eval {

using json = nlohmann::json;

EvalReport user_level_accuracy(const models::Model& model,
                               const std::vector<models::EncodedUser>& users, int threads) {
    EvalReport report;
    report.variant = model.config().variant;
    report.model_id = models::to_string(report.variant);
    report.n_users = static_cast<long>(users.size());
    report.predictions.resize(users.size());

    parallel_for(users.size(), threads, [&](std::size_t i) {
        const Tensor probs = model.predict_probs(users[i]);
        EvalReport::Prediction p;
        p.user_id = users[i].user_id;
        p.label = users[i].label;
        p.p_female = probs[0];
        p.tie = probs[0] == probs[1];
        p.predicted = probs[0] > probs[1] ? 0 : 1;
        if (p.tie && p.label >= 0) p.predicted = 1 - p.label;  // ties score incorrect
        report.predictions[i] = std::move(p);
    });

    for (const auto& p : report.predictions) {
        if (p.label < 0) continue;
        if (p.tie) ++report.tie_users;
        if (p.predicted == p.label) ++report.n_correct_users;
        ++report.confusion[static_cast<std::size_t>(p.label)][static_cast<std::size_t>(p.predicted)];
    }
    report.user_accuracy = users.empty() ? 0.0
                                         : static_cast<double>(report.n_correct_users) /
                                               static_cast<double>(users.size());
    return report;
}

double tweet_level_accuracy(const models::Model& model,
                            const std::vector<models::EncodedUser>& users, int threads,
                            long* ties_out, long* total_out) {
    if (models::has_tweet_attention(model.config().variant))
        throw InputError("tweet_level_accuracy: not defined for variant " +
                         models::to_string(model.config().variant) +
                         " (no per-tweet predictions)");

    struct Counts {
        long total = 0, correct = 0, ties = 0;
    };
    std::vector<Counts> per_user(users.size());
    parallel_for(users.size(), threads, [&](std::size_t i) {
        const auto& user = users[i];
        if (user.label < 0) throw InputError("tweet_level_accuracy: unlabeled user");
        ad::Tape tape;
        const auto staged = model.stage(tape);
        const auto fw = model.forward_user(tape, staged, user);
        Counts c;
        for (const auto logits_id : fw.tweet_logits) {
            const Tensor& lv = tape.value(logits_id);
            ++c.total;
            if (lv[0] == lv[1]) {
                ++c.ties;  // exact tie counts as incorrect
            } else {
                const int pred = lv[0] > lv[1] ? 0 : 1;
                if (pred == user.label) ++c.correct;
            }
        }
        per_user[i] = c;
    });

    long total = 0, correct = 0, ties = 0;
    for (const auto& c : per_user) {
        total += c.total;
        correct += c.correct;
        ties += c.ties;
    }
    if (ties_out) *ties_out = ties;
    if (total_out) *total_out = total;
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

std::string eval_report_to_jsonl(const EvalReport& report) {
    json summary;
    summary["type"] = "summary";
    summary["model_id"] = report.model_id;
    summary["variant"] = models::to_string(report.variant);
    summary["user_accuracy"] = report.user_accuracy;
    if (report.tweet_accuracy)
        summary["tweet_accuracy"] = *report.tweet_accuracy;
    else
        summary["tweet_accuracy"] = nullptr;
    summary["n_users"] = report.n_users;
    summary["n_correct_users"] = report.n_correct_users;
    summary["tie_users"] = report.tie_users;
    summary["tweet_total"] = report.tweet_total;
    summary["tweet_correct"] = report.tweet_correct;
    summary["tweet_ties"] = report.tweet_ties;
    summary["confusion"] = {{report.confusion[0][0], report.confusion[0][1]},
                            {report.confusion[1][0], report.confusion[1][1]}};
    std::string out = summary.dump() + "\n";
    for (const auto& p : report.predictions) {
        json row;
        row["type"] = "prediction";
        row["user_id"] = p.user_id;
        row["label"] = p.label < 0 ? json(nullptr)
                                   : json(corpus::to_string(p.label == 0 ? corpus::Gender::female
                                                                          : corpus::Gender::male));
        row["predicted"] = corpus::to_string(p.predicted == 0 ? corpus::Gender::female
                                                               : corpus::Gender::male);
        row["p_female"] = p.p_female;
        row["tie"] = p.tie;
        out += row.dump() + "\n";
    }
    return out;
}

ScatterReport scatter_experiment(const std::vector<train::TrialResult>& trials,
                                 const train::GridContext& ctx,
                                 const std::vector<models::EncodedUser>& eval_users,
                                 int threads) {
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        if (trials[i].failed) continue;
        if (models::has_tweet_attention(trials[i].config.variant))
            throw InputError("scatter_experiment: trial '" + trials[i].trial_id +
                             "' uses tweet attention; the experiment needs per-tweet predictions");
        ok.push_back(i);
    }
    if (ok.size() < 6)
        throw InputError("scatter_experiment: need at least 6 trials, got " +
                         std::to_string(ok.size()));

    auto top3 = [&](auto metric) {
        std::vector<std::size_t> order = ok;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return metric(trials[a]) > metric(trials[b]);
        });
        order.resize(3);
        return order;
    };
    const auto best_tweet = top3([](const train::TrialResult& t) {
        return t.best_by_tweet.val_tweet_acc;
    });
    const auto best_user = top3([](const train::TrialResult& t) {
        return t.best_by_user.val_user_acc;
    });

    struct Entry {
        std::size_t trial = 0;
        const train::Snapshot* snapshot = nullptr;
        bool is_tweet_pick = false, is_user_pick = false;
    };
    std::vector<Entry> entries;
    auto add = [&](std::size_t trial, const train::Snapshot* snap, bool tweet_pick, bool user_pick) {
        for (auto& e : entries) {
            if (e.trial == trial && e.snapshot->epoch == snap->epoch) {
                e.is_tweet_pick = e.is_tweet_pick || tweet_pick;  // overlap: flag as both
                e.is_user_pick = e.is_user_pick || user_pick;
                return;
            }
        }
        entries.push_back({trial, snap, tweet_pick, user_pick});
    };
    for (std::size_t t : best_tweet) add(t, &trials[t].best_by_tweet, true, false);
    for (std::size_t t : best_user) add(t, &trials[t].best_by_user, false, true);
    for (std::size_t t : ok) {
        const bool picked = std::any_of(entries.begin(), entries.end(),
                                        [&](const Entry& e) { return e.trial == t; });
        if (!picked) add(t, &trials[t].best_by_user, false, false);
    }

    ScatterReport report;
    report.rows.resize(entries.size());
    parallel_for(entries.size(), threads, [&](std::size_t i) {
        const Entry& e = entries[i];
        const auto& trial = trials[e.trial];
        models::Model model(trial.config, ctx.embeddings, ctx.alphabet);
        model.load_tensors(e.snapshot->tensors);

        ScatterRow row;
        row.trial_id = trial.trial_id;
        row.config_label = (models::uses_words(trial.config.variant) ? "cells=" : "filters=") +
                           std::to_string(models::uses_words(trial.config.variant)
                                              ? trial.config.d_cells
                                              : trial.config.n_filters);
        row.user_acc = user_level_accuracy(model, eval_users, 1).user_accuracy;
        row.tweet_acc = tweet_level_accuracy(model, eval_users, 1);
        row.selection = e.is_tweet_pick && e.is_user_pick ? "both"
                        : e.is_tweet_pick                 ? "best_tweet"
                        : e.is_user_pick                  ? "best_user"
                                                          : "other";
        report.rows[i] = std::move(row);
    });

    double sum_user = 0.0, sum_tweet = 0.0;
    long n_user = 0, n_tweet = 0;
    for (const auto& row : report.rows) {
        if (row.selection == "best_user" || row.selection == "both") {
            sum_user += row.user_acc;
            ++n_user;
        }
        if (row.selection == "best_tweet" || row.selection == "both") {
            sum_tweet += row.user_acc;
            ++n_tweet;
        }
    }
    report.mean_user_acc_best_user = n_user ? sum_user / static_cast<double>(n_user) : 0.0;
    report.mean_user_acc_best_tweet = n_tweet ? sum_tweet / static_cast<double>(n_tweet) : 0.0;
    return report;
}

std::string scatter_report_tsv(const ScatterReport& report) {
    std::string out;
    char buf[64];
    for (const auto& row : report.rows) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t", row.tweet_acc, row.user_acc);
        out += buf;
        out += row.selection;
        out.push_back('\t');
        out += row.config_label;
        out.push_back('\n');
    }
    return out;
}

}  // namespace profiler::eval
