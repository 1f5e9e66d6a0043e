#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ncart/data.hpp"
#include "ncart/kernels.hpp"
#include "ncart/model.hpp"

namespace ncart {

using Clock = std::chrono::steady_clock;
using Deadline = std::optional<Clock::time_point>;

// splitmix64 mix of a base seed and a stream id (fold or trial index), so
// parallel folds/trials own disjoint deterministic RNG streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<std::vector<double>> m, v;  // one slot per parameter tensor
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState make_adam(NcartModel& model, double lr) {
    AdamState st;
    st.lr = lr;
    for_each_param(model, [&st](std::vector<double>& p) {
        st.m.emplace_back(p.size(), 0.0);
        st.v.emplace_back(p.size(), 0.0);
    });
    return st;
}

// Standard bias-corrected update. Aborts on non-finite gradients, naming the
// offending tensor; there is no gradient clipping.
inline void adam_step(NcartModel& model, ModelGrads& grads, AdamState& st) {
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    std::size_t slot = 0;
    for_each_param_grad(model, grads, [&](std::vector<double>& p, std::vector<double>& g) {
        std::vector<double>& m = st.m[slot];
        std::vector<double>& v = st.v[slot];
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw std::runtime_error("adam_step: non-finite gradient in parameter tensor #" +
                                         std::to_string(slot) + " entry " + std::to_string(i));
            m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
            v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
        ++slot;
    });
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

struct FoldMetrics {
    double auc = std::numeric_limits<double>::quiet_NaN();
    double f1 = std::numeric_limits<double>::quiet_NaN();
    double mse = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<double> epoch_losses;
    std::vector<FoldMetrics> folds;
    double seconds = 0.0;
    NcartConfig config;
    std::uint64_t seed = 0;
    bool timed_out = false;
    int stopped_epoch = -1;  // epoch at which early stopping fired, -1 if never

    double mean(double FoldMetrics::*field) const {
        double s = 0.0;
        for (const FoldMetrics& f : folds) s += f.*field;
        return folds.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : s / static_cast<double>(folds.size());
    }
    // population (1/k) convention
    double stddev(double FoldMetrics::*field) const {
        if (folds.empty()) return std::numeric_limits<double>::quiet_NaN();
        const double mu = mean(field);
        double s = 0.0;
        for (const FoldMetrics& f : folds) s += (f.*field - mu) * (f.*field - mu);
        return std::sqrt(s / static_cast<double>(folds.size()));
    }
};

// ---------------------------------------------------------------------------
// Batch loss: softmax cross-entropy for classification, MSE for regression.
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), x.cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = x(idx[r], c);
    return out;
}

inline double batch_loss(const NcartModel& model, const Dataset& data,
                         const std::vector<std::size_t>& idx, const Matrix& out,
                         Matrix* d_out) {
    if (model.task == Task::regression) {
        std::vector<double> y(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) y[i] = data.y_reg[idx[i]];
        return mse_loss(out, y, d_out);
    }
    std::vector<int> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) y[i] = data.y_class[idx[i]];
    return cross_entropy_with_logits(out, y, d_out);
}

inline double eval_loss(NcartModel& model, const Dataset& data,
                        const std::vector<std::size_t>& idx) {
    Matrix x = gather_rows(data.X, idx);
    Matrix out = forward(model, x, Mode::eval);
    return batch_loss(model, data, idx, out, nullptr);
}

inline bool past(const Deadline& deadline) {
    return deadline && Clock::now() >= *deadline;
}

// Content hash of one sample, mixed with the seed. Fold assignment keyed on
// sample content (not row position) makes fold membership invariant to row
// permutations of the input file.
inline std::uint64_t row_key(const Dataset& data, std::size_t row, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    auto mix = [&h](std::uint64_t bits) {
        h ^= bits;
        h *= 0x100000001b3ULL;
        h ^= h >> 29;
    };
    for (std::size_t c = 0; c < data.X.cols; ++c) {
        std::uint64_t bits;
        const double v = data.X(row, c);
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        mix(bits);
    }
    if (data.task == Task::regression) {
        std::uint64_t bits;
        const double v = data.y_reg[row];
        std::memcpy(&bits, &v, sizeof(bits));
        mix(bits);
    } else {
        mix(static_cast<std::uint64_t>(data.y_class[row]));
    }
    return h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training loop: per-epoch seeded shuffle, fixed-size minibatches (the last
// partial batch is kept), optional early stopping on a held-out 10% split.
// ---------------------------------------------------------------------------

inline TrainReport train(NcartModel& model, const Dataset& data, const NcartConfig& cfg,
                         Deadline deadline = {}) {
    const auto t0 = Clock::now();
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (model.task != Task::regression && data.n_classes < 2)
        throw std::invalid_argument("train: single-class classification target");
    if (data.n_features() != model.n_features)
        throw std::invalid_argument("train: dataset has " + std::to_string(data.n_features()) +
                                    " features, model expects " +
                                    std::to_string(model.n_features));

    TrainReport report;
    report.config = cfg;
    report.seed = cfg.seed;

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> indices(data.size());
    std::iota(indices.begin(), indices.end(), 0);

    std::vector<std::size_t> val;
    if (cfg.early_stop && data.size() >= 10) {
        std::shuffle(indices.begin(), indices.end(), rng);
        const std::size_t n_val = std::max<std::size_t>(1, data.size() / 10);
        val.assign(indices.end() - static_cast<std::ptrdiff_t>(n_val), indices.end());
        indices.resize(indices.size() - n_val);
    }

    ModelGrads grads = make_grads(model);
    AdamState adam = make_adam(model, cfg.lr);
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<std::vector<double>> best_params;

    auto snapshot = [&] {
        best_params.clear();
        for_each_param(model, [&](std::vector<double>& p) { best_params.push_back(p); });
    };
    auto restore = [&] {
        std::size_t slot = 0;
        for_each_param(model, [&](std::vector<double>& p) { p = best_params[slot++]; });
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(indices.begin(), indices.end(), rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        std::size_t start = 0;
        while (start < indices.size()) {
            std::size_t stop = std::min(start + batch, indices.size());
            // a trailing single row cannot be batch-normalized; fold it in
            if (indices.size() - stop == 1) stop = indices.size();
            std::vector<std::size_t> idx(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                         indices.begin() + static_cast<std::ptrdiff_t>(stop));
            Matrix x = detail::gather_rows(data.X, idx);
            ForwardCache cache;
            Matrix out = forward(model, x, Mode::train, &cache);
            Matrix d_out;
            const double loss = detail::batch_loss(model, data, idx, out, &d_out);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch));
            zero_grads(grads);
            backward(model, cache, d_out, grads);
            adam_step(model, grads, adam);
            epoch_loss += loss * static_cast<double>(idx.size());
            seen += idx.size();
            start = stop;
            if (detail::past(deadline)) {
                report.timed_out = true;
                break;
            }
        }
        report.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
        if (report.timed_out) break;

        if (!val.empty()) {
            const double vloss = detail::eval_loss(model, data, val);
            if (vloss < best_val) {
                best_val = vloss;
                since_best = 0;
                snapshot();
            } else if (++since_best >= cfg.patience) {
                report.stopped_epoch = epoch;
                break;
            }
        }
    }
    // keep the best-validation parameters whenever a split was held out
    if (!best_params.empty()) restore();

    report.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return report;
}

// ---------------------------------------------------------------------------
// k-fold cross-validation. Classification folds are stratified per class;
// regression folds are contiguous chunks of the pseudo-shuffled order. Both
// use content-hash keys, so fold membership does not depend on row order.
// ---------------------------------------------------------------------------

inline std::vector<std::vector<std::size_t>> make_folds(const Dataset& data, int k,
                                                        std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold: k must be at least 2");
    if (data.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("kfold: fewer samples than folds");

    std::vector<std::pair<std::uint64_t, std::size_t>> keyed(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        keyed[i] = {detail::row_key(data, i, seed), i};

    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    if (data.task == Task::regression) {
        std::sort(keyed.begin(), keyed.end());
        // contiguous chunks, sizes differing by at most one
        const std::size_t m = keyed.size();
        std::size_t start = 0;
        for (int f = 0; f < k; ++f) {
            const std::size_t len = m / static_cast<std::size_t>(k) +
                                    (static_cast<std::size_t>(f) < m % static_cast<std::size_t>(k) ? 1 : 0);
            for (std::size_t i = start; i < start + len; ++i)
                folds[static_cast<std::size_t>(f)].push_back(keyed[i].second);
            start += len;
        }
    } else {
        for (std::size_t cls = 0; cls < data.n_classes; ++cls) {
            std::vector<std::pair<std::uint64_t, std::size_t>> group;
            for (const auto& [key, i] : keyed)
                if (data.y_class[i] == static_cast<int>(cls)) group.push_back({key, i});
            if (group.size() < static_cast<std::size_t>(k))
                throw std::invalid_argument("kfold: class '" +
                                            (cls < data.class_labels.size()
                                                 ? data.class_labels[cls]
                                                 : std::to_string(cls)) +
                                            "' has fewer samples than folds");
            std::sort(group.begin(), group.end());
            for (std::size_t i = 0; i < group.size(); ++i)
                folds[i % static_cast<std::size_t>(k)].push_back(group[i].second);
        }
        // canonical in-fold order, again content-keyed
        for (auto& fold : folds)
            std::sort(fold.begin(), fold.end(), [&](std::size_t a, std::size_t b) {
                return detail::row_key(data, a, seed) < detail::row_key(data, b, seed);
            });
    }
    return folds;
}

inline Dataset subset(const Dataset& data, const std::vector<std::size_t>& idx) {
    Dataset out = data;
    out.X = detail::gather_rows(data.X, idx);
    if (data.task == Task::regression) {
        out.y_reg.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) out.y_reg[i] = data.y_reg[idx[i]];
    } else {
        out.y_class.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) out.y_class[i] = data.y_class[idx[i]];
    }
    return out;
}

inline FoldMetrics evaluate(const NcartModel& model, const Dataset& test) {
    FoldMetrics m;
    Matrix probs = predict(model, test.X);
    if (model.task == Task::regression) {
        std::vector<double> pred(probs.rows);
        for (std::size_t i = 0; i < probs.rows; ++i) pred[i] = probs(i, 0);
        m.mse = mse_metric(pred, test.y_reg);
    } else {
        m.auc = roc_auc(probs, test.y_class, test.n_classes);
        std::vector<int> pred(probs.rows);
        for (std::size_t i = 0; i < probs.rows; ++i) {
            std::size_t arg = 0;
            for (std::size_t j = 1; j < probs.cols; ++j)
                if (probs(i, j) > probs(i, arg)) arg = j;
            pred[i] = static_cast<int>(arg);
        }
        m.f1 = f1_score(pred, test.y_class, test.n_classes);
    }
    return m;
}

// Folds run in parallel: each owns its model, data copies and derived RNG
// stream, so the per-fold numbers are independent of scheduling. Results
// aggregate in fold order.
inline TrainReport kfold_cv(const Dataset& data, const NcartConfig& cfg, int k = 5,
                            Deadline deadline = {}) {
    const auto t0 = Clock::now();
    const auto folds = make_folds(data, k, cfg.seed);
    const std::size_t n_outputs = data.task == Task::regression ? 1 : data.n_classes;

    TrainReport report;
    report.config = cfg;
    report.seed = cfg.seed;

    std::vector<std::optional<FoldMetrics>> slots(folds.size());
    std::vector<std::exception_ptr> errors(folds.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> timed_out{false};

    auto run_fold = [&](std::size_t f) {
        const auto tf = Clock::now();
        std::vector<std::size_t> train_idx;
        for (std::size_t g = 0; g < folds.size(); ++g)
            if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());

        Dataset train_set = subset(data, train_idx);
        Dataset test_set = subset(data, folds[f]);

        NcartConfig fold_cfg = cfg;
        fold_cfg.seed = derive_seed(cfg.seed, f);
        NcartModel model = init(fold_cfg, data.n_features(), n_outputs, fold_cfg.seed);
        model.task = data.task;
        TrainReport fold_train = train(model, train_set, fold_cfg, deadline);
        if (fold_train.timed_out) timed_out = true;

        FoldMetrics metrics = evaluate(model, test_set);
        metrics.seconds = std::chrono::duration<double>(Clock::now() - tf).count();
        slots[f] = metrics;
    };
    auto worker = [&] {
        while (true) {
            const std::size_t f = next.fetch_add(1);
            if (f >= folds.size()) break;
            if (detail::past(deadline)) {
                timed_out = true;
                break;
            }
            try {
                run_fold(f);
            } catch (...) {
                errors[f] = std::current_exception();
            }
        }
    };

    const std::size_t n_threads =
        std::min<std::size_t>(folds.size(),
                              std::max(1u, std::thread::hardware_concurrency()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    for (std::size_t f = 0; f < folds.size(); ++f)
        if (errors[f]) std::rethrow_exception(errors[f]);
    for (std::size_t f = 0; f < folds.size() && slots[f]; ++f) report.folds.push_back(*slots[f]);

    report.timed_out = timed_out.load() || report.folds.size() < folds.size();
    report.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return report;
}

// ---------------------------------------------------------------------------
// Seeded random search over the NCART hyperparameter space:
//   trees in {8,16,32,64}, sel_dim uniform in [2,10], blocks in {2,4},
//   sparse function in {sparsemax, entmax}.
// Scores are 5-fold mean AUC (classification) or negated mean MSE
// (regression); ties keep the earlier trial.
// ---------------------------------------------------------------------------

struct SearchTrial {
    NcartConfig config;
    double score = -std::numeric_limits<double>::infinity();
    TrainReport report;
};

struct SearchResult {
    NcartConfig best;
    TrainReport best_report;
    std::vector<SearchTrial> trials;
};

using TrialScorer = std::function<double(const NcartConfig&, TrainReport&)>;

inline NcartConfig sample_config(const NcartConfig& base, std::mt19937_64& rng) {
    static constexpr int tree_choices[] = {8, 16, 32, 64};
    static constexpr int block_choices[] = {2, 4};
    NcartConfig c = base;
    c.trees = tree_choices[std::uniform_int_distribution<int>(0, 3)(rng)];
    c.sel_dim = std::uniform_int_distribution<int>(2, 10)(rng);
    c.blocks = block_choices[std::uniform_int_distribution<int>(0, 1)(rng)];
    c.sparse_fn.kind = std::uniform_int_distribution<int>(0, 1)(rng) == 0
                           ? SparseKind::sparsemax
                           : SparseKind::entmax;
    return c;
}

inline SearchResult random_search(const Dataset& data, const NcartConfig& base, int trials,
                                  std::uint64_t seed, Deadline deadline = {},
                                  const TrialScorer& scorer = {}) {
    if (trials < 1) throw std::invalid_argument("random_search: trials must be at least 1");
    std::mt19937_64 rng(seed);

    SearchResult result;
    std::size_t best_idx = 0;
    for (int t = 0; t < trials; ++t) {
        SearchTrial trial;
        trial.config = sample_config(base, rng);
        trial.config.seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(t));

        if (scorer) {
            trial.score = scorer(trial.config, trial.report);
        } else {
            trial.report = kfold_cv(data, trial.config, 5, deadline);
            trial.score = data.task == Task::regression
                              ? -trial.report.mean(&FoldMetrics::mse)
                              : trial.report.mean(&FoldMetrics::auc);
        }
        result.trials.push_back(std::move(trial));
        if (result.trials.back().score > result.trials[best_idx].score)
            best_idx = result.trials.size() - 1;
        if (detail::past(deadline)) break;
    }
    result.best = result.trials[best_idx].config;
    result.best_report = result.trials[best_idx].report;
    return result;
}

}  // namespace ncart
