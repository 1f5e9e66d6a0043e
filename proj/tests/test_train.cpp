#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "ncart/train.hpp"

using namespace ncart;
using test_helpers::make_rng;
using test_helpers::separable_classification;
using test_helpers::synthetic_regression;

namespace {

NcartConfig fast_config() {
    NcartConfig cfg;
    cfg.blocks = 2;
    cfg.trees = 8;
    cfg.sel_dim = 2;
    cfg.hidden = 8;
    cfg.batch_size = 64;
    cfg.epochs = 10;
    cfg.seed = 7;
    return cfg;
}

std::vector<double> flat_params(const NcartModel& m) {
    std::vector<double> flat;
    for_each_param(m, [&flat](const std::vector<double>& p) {
        flat.insert(flat.end(), p.begin(), p.end());
    });
    return flat;
}

double train_accuracy(const NcartModel& model, const Dataset& data) {
    Matrix probs = predict(model, data.X);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < probs.cols; ++j)
            if (probs(i, j) > probs(i, arg)) arg = j;
        hits += static_cast<int>(arg) == data.y_class[i];
    }
    return static_cast<double>(hits) / static_cast<double>(probs.rows);
}

}  // namespace

TEST_CASE("adam leaves parameters untouched under zero gradients") {
    auto model = init(fast_config(), 4, 2, 1);
    auto before = flat_params(model);
    ModelGrads grads = make_grads(model);
    AdamState st = make_adam(model, 1e-3);
    adam_step(model, grads, st);
    adam_step(model, grads, st);
    CHECK(flat_params(model) == before);
}

TEST_CASE("first adam step matches a hand-stepped scalar oracle") {
    // single scalar parameter theta=1, gradient 1, default hyperparameters
    auto model = init(fast_config(), 4, 2, 2);
    ModelGrads grads = make_grads(model);
    AdamState st = make_adam(model, 1e-3);

    // pick the very first parameter slot (gamma[0] of block 0, value 1.0)
    grads.blocks[0].gamma[0] = 1.0;
    adam_step(model, grads, st);

    // independently hand-stepped scalar Adam
    const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double m = (1.0 - b1) * 1.0;
    const double v = (1.0 - b2) * 1.0;
    const double mhat = m / (1.0 - b1);
    const double vhat = v / (1.0 - b2);
    const double expect = 1.0 - lr * mhat / (std::sqrt(vhat) + eps);

    CHECK(model.blocks[0].bn.gamma[0] == Catch::Approx(expect).margin(1e-12));
    CHECK(expect == Catch::Approx(1.0 - 0.001).margin(1e-9));
}

TEST_CASE("adam aborts on a non-finite gradient with a diagnostic") {
    auto model = init(fast_config(), 4, 2, 3);
    ModelGrads grads = make_grads(model);
    AdamState st = make_adam(model, 1e-3);
    grads.blocks[0].trees[0].b1[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH(adam_step(model, grads, st),
                      Catch::Matchers::ContainsSubstring("non-finite gradient"));
}

TEST_CASE("zero epochs return the model unchanged") {
    auto rng = make_rng(61);
    Dataset data = separable_classification(rng, 50);
    NcartConfig cfg = fast_config();
    cfg.epochs = 0;
    auto model = init(cfg, data.n_features(), 2, cfg.seed);
    model.task = Task::binclass;
    auto before = flat_params(model);
    TrainReport report = train(model, data, cfg);
    CHECK(flat_params(model) == before);
    CHECK(report.epoch_losses.empty());
}

TEST_CASE("training separates linearly separable classes") {
    auto rng = make_rng(62);
    Dataset data = separable_classification(rng, 200);
    NcartConfig cfg = fast_config();
    cfg.epochs = 200;
    auto model = init(cfg, data.n_features(), 2, cfg.seed);
    model.task = Task::binclass;
    TrainReport report = train(model, data, cfg);
    CHECK(train_accuracy(model, data) >= 0.99);
    for (double loss : report.epoch_losses) REQUIRE(std::isfinite(loss));
    CHECK(report.epoch_losses.size() == 200);
}

TEST_CASE("full-batch loss decreases over the first ten steps") {
    auto rng = make_rng(63);
    Dataset data = separable_classification(rng, 64);
    NcartConfig cfg = fast_config();
    cfg.batch_size = 64;  // one step per epoch
    cfg.epochs = 10;
    auto model = init(cfg, data.n_features(), 2, cfg.seed);
    model.task = Task::binclass;
    TrainReport report = train(model, data, cfg);
    REQUIRE(report.epoch_losses.size() == 10);
    CHECK(report.epoch_losses.back() < report.epoch_losses.front());
}

TEST_CASE("training twice with one seed gives identical parameter trajectories") {
    auto rng = make_rng(64);
    Dataset data = separable_classification(rng, 80);
    NcartConfig cfg = fast_config();
    cfg.epochs = 5;

    auto run = [&] {
        auto model = init(cfg, data.n_features(), 2, cfg.seed);
        model.task = Task::binclass;
        train(model, data, cfg);
        return flat_params(model);
    };
    CHECK(run() == run());
}

TEST_CASE("training rejects empty and single-class datasets") {
    NcartConfig cfg = fast_config();
    Dataset empty;
    empty.task = Task::binclass;
    empty.X = Matrix(0, 4);
    auto model = init(cfg, 4, 2, 0);
    model.task = Task::binclass;
    CHECK_THROWS_AS(train(model, empty, cfg), std::invalid_argument);

    auto rng = make_rng(65);
    Dataset single = separable_classification(rng, 30);
    single.n_classes = 1;
    CHECK_THROWS_AS(train(model, single, cfg), std::invalid_argument);
}

TEST_CASE("early stopping fires on a stagnant validation split") {
    auto rng = make_rng(66);
    Dataset data = separable_classification(rng, 100);
    NcartConfig cfg = fast_config();
    cfg.epochs = 400;
    cfg.early_stop = true;
    cfg.patience = 5;
    auto model = init(cfg, data.n_features(), 2, cfg.seed);
    model.task = Task::binclass;
    TrainReport report = train(model, data, cfg);
    // on a task this easy validation loss plateaus long before 400 epochs
    CHECK(report.stopped_epoch >= 0);
    CHECK(report.epoch_losses.size() < 400);
}

TEST_CASE("folds partition the indices exactly once") {
    auto rng = make_rng(67);
    Dataset data = separable_classification(rng, 103);
    auto folds = make_folds(data, 5, 42);
    std::vector<std::size_t> all;
    for (const auto& f : folds) all.insert(all.end(), f.begin(), f.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(103);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
}

TEST_CASE("stratified folds keep class ratios within one sample") {
    auto rng = make_rng(68);
    Dataset data = separable_classification(rng, 100);
    const int k = 5;
    auto folds = make_folds(data, k, 9);
    std::size_t total_pos = 0;
    for (int y : data.y_class) total_pos += y;
    for (const auto& fold : folds) {
        std::size_t pos = 0;
        for (std::size_t i : fold) pos += data.y_class[i];
        const double expect = static_cast<double>(total_pos) / k;
        CHECK(std::fabs(static_cast<double>(pos) - expect) <= 1.0);
    }
}

TEST_CASE("fold assignment is deterministic in the seed") {
    auto rng = make_rng(69);
    Dataset data = separable_classification(rng, 60);
    CHECK(make_folds(data, 4, 5) == make_folds(data, 4, 5));
    CHECK(make_folds(data, 4, 5) != make_folds(data, 4, 6));
}

TEST_CASE("a class with fewer samples than folds is an error") {
    auto rng = make_rng(70);
    Dataset data = separable_classification(rng, 40);
    // collapse all but three samples to class 0
    for (std::size_t i = 0; i < data.y_class.size(); ++i) data.y_class[i] = 0;
    data.y_class[0] = data.y_class[1] = data.y_class[2] = 1;
    CHECK_THROWS_WITH(make_folds(data, 5, 0),
                      Catch::Matchers::ContainsSubstring("fewer samples than folds"));
}

TEST_CASE("fold contents are invariant to row permutation") {
    auto rng = make_rng(71);
    Dataset data = separable_classification(rng, 60);

    // permute rows
    std::vector<std::size_t> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Dataset shuffled = data;
    for (std::size_t i = 0; i < 60; ++i) {
        for (std::size_t c = 0; c < data.X.cols; ++c) shuffled.X(i, c) = data.X(perm[i], c);
        shuffled.y_class[i] = data.y_class[perm[i]];
    }

    auto folds_a = make_folds(data, 4, 11);
    auto folds_b = make_folds(shuffled, 4, 11);
    for (std::size_t f = 0; f < folds_a.size(); ++f) {
        // compare fold contents as multisets of original row ids
        std::multiset<std::size_t> a(folds_a[f].begin(), folds_a[f].end());
        std::multiset<std::size_t> b;
        for (std::size_t i : folds_b[f]) b.insert(perm[i]);
        REQUIRE(a == b);
    }
}

TEST_CASE("cross-validation metrics are invariant to row permutation") {
    auto rng = make_rng(72);
    Dataset data = separable_classification(rng, 60);
    NcartConfig cfg = fast_config();
    cfg.epochs = 5;

    std::vector<std::size_t> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Dataset shuffled = data;
    for (std::size_t i = 0; i < 60; ++i) {
        for (std::size_t c = 0; c < data.X.cols; ++c) shuffled.X(i, c) = data.X(perm[i], c);
        shuffled.y_class[i] = data.y_class[perm[i]];
    }

    TrainReport a = kfold_cv(data, cfg, 3);
    TrainReport b = kfold_cv(shuffled, cfg, 3);
    REQUIRE(a.folds.size() == b.folds.size());
    for (std::size_t f = 0; f < a.folds.size(); ++f) {
        REQUIRE(a.folds[f].auc == b.folds[f].auc);
        REQUIRE(a.folds[f].f1 == b.folds[f].f1);
    }
}

TEST_CASE("cross-validation reports per-fold metrics for both task kinds") {
    auto rng = make_rng(73);
    Dataset cls = separable_classification(rng, 80);
    NcartConfig cfg = fast_config();
    cfg.epochs = 20;
    TrainReport report = kfold_cv(cls, cfg, 5);
    REQUIRE(report.folds.size() == 5);
    for (const FoldMetrics& f : report.folds) {
        CHECK(f.auc >= 0.0);
        CHECK(f.auc <= 1.0);
        CHECK(std::isfinite(f.f1));
        CHECK(f.seconds >= 0.0);
    }
    CHECK(std::isfinite(report.mean(&FoldMetrics::auc)));
    CHECK(report.stddev(&FoldMetrics::auc) >= 0.0);

    Dataset reg = synthetic_regression(rng, 70);
    TrainReport reg_report = kfold_cv(reg, cfg, 5);
    for (const FoldMetrics& f : reg_report.folds) CHECK(std::isfinite(f.mse));
}

TEST_CASE("random search with one trial returns that trial") {
    auto rng = make_rng(74);
    Dataset data = separable_classification(rng, 60);
    NcartConfig base = fast_config();
    base.epochs = 3;
    SearchResult result = random_search(data, base, 1, 99);
    REQUIRE(result.trials.size() == 1);
    CHECK(result.best.trees == result.trials[0].config.trees);
    CHECK(result.best.sel_dim == result.trials[0].config.sel_dim);
}

TEST_CASE("sampled configurations stay inside the search space") {
    auto rng = make_rng(75);
    Dataset data = separable_classification(rng, 40);
    NcartConfig base = fast_config();
    TrialScorer fake = [](const NcartConfig&, TrainReport&) { return 0.0; };
    SearchResult result = random_search(data, base, 50, 123, {}, fake);
    std::set<int> trees_seen, blocks_seen;
    for (const SearchTrial& t : result.trials) {
        CHECK((t.config.trees == 8 || t.config.trees == 16 || t.config.trees == 32 ||
               t.config.trees == 64));
        CHECK(t.config.sel_dim >= 2);
        CHECK(t.config.sel_dim <= 10);
        CHECK((t.config.blocks == 2 || t.config.blocks == 4));
        trees_seen.insert(t.config.trees);
        blocks_seen.insert(t.config.blocks);
    }
    CHECK(trees_seen.size() > 1);  // the sampler actually varies
    CHECK(blocks_seen.size() > 1);
}

TEST_CASE("a rigged scorer steers the search to its favorite") {
    auto rng = make_rng(76);
    Dataset data = separable_classification(rng, 40);
    NcartConfig base = fast_config();
    TrialScorer rigged = [](const NcartConfig& c, TrainReport&) {
        return c.trees == 64 ? 1.0 : 0.0;
    };
    SearchResult result = random_search(data, base, 30, 7, {}, rigged);
    CHECK(result.best.trees == 64);
}

TEST_CASE("search ties resolve to the earlier trial") {
    auto rng = make_rng(77);
    Dataset data = separable_classification(rng, 40);
    NcartConfig base = fast_config();
    TrialScorer constant = [](const NcartConfig&, TrainReport&) { return 0.5; };
    SearchResult result = random_search(data, base, 10, 3, {}, constant);
    CHECK(result.best.trees == result.trials[0].config.trees);
    CHECK(result.best.sel_dim == result.trials[0].config.sel_dim);
    CHECK(result.best.blocks == result.trials[0].config.blocks);
}

TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(1, 0) == derive_seed(1, 0));
}
