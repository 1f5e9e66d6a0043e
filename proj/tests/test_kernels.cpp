#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "ncart/gradcheck.hpp"
#include "ncart/kernels.hpp"

using namespace ncart;
using test_helpers::make_rng;
using test_helpers::random_matrix;

namespace {

std::vector<double> flatten(const Matrix& m) { return m.data; }

Matrix unflatten(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    m.data = v;
    return m;
}

// weighted-sum head turns any layer into a scalar function for gradcheck
double weighted_sum(const Matrix& m, const Matrix& weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.data.size(); ++i) s += m.data[i] * weights.data[i];
    return s;
}

}  // namespace

TEST_CASE("sigmoid hits the textbook anchor points") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(100.0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(sigmoid(-100.0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(std::isfinite(sigmoid(-1e6)));
    CHECK(std::isfinite(sigmoid(1e6)));
}

TEST_CASE("relu clamps negatives") {
    Matrix x(1, 2);
    x(0, 0) = -2.0;
    x(0, 1) = 3.0;
    Matrix y = relu_fwd(x);
    CHECK(y(0, 0) == 0.0);
    CHECK(y(0, 1) == 3.0);
}

TEST_CASE("sigmoid derivative matches central differences at 1.2") {
    Matrix x(1, 1, 1.2);
    SigmoidCache cache;
    sigmoid_fwd(x, &cache);
    Matrix dy(1, 1, 1.0);
    const double analytic = sigmoid_bwd(dy, cache)(0, 0);
    const double h = 1e-5;
    const double numeric = (sigmoid(1.2 + h) - sigmoid(1.2 - h)) / (2 * h);
    CHECK(std::fabs(analytic - numeric) / std::fabs(numeric) < 1e-6);
}

TEST_CASE("sigmoid output stays strictly inside (0,1) and relu stays non-negative") {
    auto rng = make_rng(11);
    Matrix x = random_matrix(rng, 20, 20, -3.0, 3.0);
    Matrix s = sigmoid_fwd(x);
    Matrix r = relu_fwd(x);
    for (double v : s.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    for (double v : r.data) CHECK(v >= 0.0);
}

TEST_CASE("elementwise backward passes match finite differences") {
    auto rng = make_rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix x = random_matrix(rng, 3, 4);
        // keep relu away from its kink; the map is not differentiable there
        for (double& v : x.data)
            if (std::fabs(v) < 1e-3) v += 2e-3;
        Matrix weights = random_matrix(rng, 3, 4, -1.0, 1.0);

        {
            // relu
            ReluCache rc;
            relu_fwd(x, &rc);
            Matrix analytic = relu_bwd(weights, rc);
            auto fn = [&](const std::vector<double>& p) {
                return weighted_sum(relu_fwd(unflatten(p, 3, 4)), weights);
            };
            auto report = gradcheck(fn, flatten(x), flatten(analytic));
            REQUIRE(report.max_rel_err < 1e-4);

            // sigmoid
            SigmoidCache sc;
            sigmoid_fwd(x, &sc);
            Matrix s_analytic = sigmoid_bwd(weights, sc);
            auto sfn = [&](const std::vector<double>& p) {
                return weighted_sum(sigmoid_fwd(unflatten(p, 3, 4)), weights);
            };
            auto s_report = gradcheck(sfn, flatten(x), flatten(s_analytic));
            REQUIRE(s_report.max_rel_err < 1e-4);
        }
    }
}

TEST_CASE("bias_add forward adds per column and backward sums per column") {
    Matrix x(2, 3, 1.0);
    std::vector<double> b{10.0, 20.0, 30.0};
    Matrix y = bias_add_fwd(x, b);
    CHECK(y(0, 0) == 11.0);
    CHECK(y(1, 2) == 31.0);
    Matrix dy(2, 3, 1.0);
    CHECK(bias_add_bwd(dy) == std::vector<double>{2.0, 2.0, 2.0});
    CHECK_THROWS_AS(bias_add_fwd(x, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("batchnorm normalizes a two-point batch to +-1") {
    BatchNormState state(1);
    Matrix x(2, 1);
    x(0, 0) = 0.0;
    x(1, 0) = 2.0;
    Matrix y = batchnorm_fwd(x, state, Mode::train);
    // mean 1, biased variance 1; eps shifts the result below 1e-5
    CHECK(std::fabs(y(0, 0) - (-1.0)) < 1e-5);
    CHECK(std::fabs(y(1, 0) - 1.0) < 1e-5);
}

TEST_CASE("batchnorm maps a constant column to zeros") {
    BatchNormState state(2);
    Matrix x(4, 2, 7.5);
    Matrix y = batchnorm_fwd(x, state, Mode::train);
    for (std::size_t i = 0; i < x.rows; ++i) {
        CHECK(y(i, 0) == 0.0);
        CHECK(y(i, 1) == 0.0);
    }
}

TEST_CASE("batchnorm train mode requires two rows and some features") {
    BatchNormState state(2);
    Matrix one(1, 2, 1.0);
    CHECK_THROWS_AS(batchnorm_fwd(one, state, Mode::train), std::invalid_argument);
    BatchNormState empty(0);
    Matrix x(3, 0);
    CHECK_THROWS_AS(batchnorm_fwd(x, empty, Mode::train), std::invalid_argument);
}

TEST_CASE("batchnorm train output is standardized when gamma=1 beta=0") {
    auto rng = make_rng(13);
    BatchNormState state(5);
    Matrix x = random_matrix(rng, 64, 5);
    Matrix y = batchnorm_fwd(x, state, Mode::train);
    for (std::size_t j = 0; j < 5; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < y.rows; ++i) mean += y(i, j);
        mean /= static_cast<double>(y.rows);
        for (std::size_t i = 0; i < y.rows; ++i) var += (y(i, j) - mean) * (y(i, j) - mean);
        var /= static_cast<double>(y.rows);
        CHECK(std::fabs(mean) < 1e-10);
        CHECK(std::fabs(var - 1.0) < 1e-3);  // off by the eps correction only
    }
}

TEST_CASE("batchnorm updates running stats with momentum and eval uses them") {
    BatchNormState state(1);
    state.momentum = 0.1;
    Matrix x(2, 1);
    x(0, 0) = 0.0;
    x(1, 0) = 2.0;
    batchnorm_fwd(x, state, Mode::train);
    CHECK(state.running_mean[0] == Catch::Approx(0.1 * 1.0));
    CHECK(state.running_var[0] == Catch::Approx(0.9 * 1.0 + 0.1 * 1.0));

    Matrix single(1, 1, 0.1);
    Matrix y = batchnorm_fwd(single, state, Mode::eval);  // eval allows one row
    const double expect = (0.1 - state.running_mean[0]) / std::sqrt(state.running_var[0] + state.eps);
    CHECK(y(0, 0) == Catch::Approx(expect));
}

TEST_CASE("batchnorm backward matches finite differences for inputs gamma and beta") {
    auto rng = make_rng(14);
    const std::size_t rows = 6, cols = 3;
    Matrix x0 = random_matrix(rng, rows, cols);
    Matrix weights = random_matrix(rng, rows, cols, -1.0, 1.0);
    std::vector<double> gamma0 = test_helpers::random_vector(rng, cols, 0.5, 1.5);
    std::vector<double> beta0 = test_helpers::random_vector(rng, cols, -0.5, 0.5);

    auto run = [&](const Matrix& x, const std::vector<double>& gamma,
                   const std::vector<double>& beta) {
        BatchNormState st(cols);
        st.gamma = gamma;
        st.beta = beta;
        return batchnorm_fwd(x, st, Mode::train);
    };

    BatchNormState st(cols);
    st.gamma = gamma0;
    st.beta = beta0;
    BatchNormCache cache;
    batchnorm_fwd(x0, st, Mode::train, &cache);
    std::vector<double> dgamma, dbeta;
    Matrix dx = batchnorm_bwd(weights, st, cache, dgamma, dbeta);

    auto fn_x = [&](const std::vector<double>& p) {
        return weighted_sum(run(unflatten(p, rows, cols), gamma0, beta0), weights);
    };
    CHECK(gradcheck(fn_x, flatten(x0), flatten(dx)).max_rel_err < 1e-4);

    auto fn_gamma = [&](const std::vector<double>& p) { return weighted_sum(run(x0, p, beta0), weights); };
    CHECK(gradcheck(fn_gamma, gamma0, dgamma).max_rel_err < 1e-4);

    auto fn_beta = [&](const std::vector<double>& p) { return weighted_sum(run(x0, gamma0, p), weights); };
    CHECK(gradcheck(fn_beta, beta0, dbeta).max_rel_err < 1e-4);
}

TEST_CASE("softmax of uniform logits is uniform and rows sum to one") {
    Matrix logits(2, 4, 0.3);
    Matrix p = softmax_rows(logits);
    for (std::size_t j = 0; j < 4; ++j) CHECK(p(0, j) == Catch::Approx(0.25));

    auto rng = make_rng(15);
    Matrix z = random_matrix(rng, 50, 7, -10.0, 10.0);
    Matrix q = softmax_rows(z);
    for (std::size_t i = 0; i < q.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < q.cols; ++j) s += q(i, j);
        CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax backward matches finite differences") {
    auto rng = make_rng(16);
    Matrix z = random_matrix(rng, 4, 5);
    Matrix weights = random_matrix(rng, 4, 5, -1.0, 1.0);
    Matrix p = softmax_rows(z);
    Matrix dz = softmax_bwd(p, weights);
    auto fn = [&](const std::vector<double>& q) {
        return weighted_sum(softmax_rows(unflatten(q, 4, 5)), weights);
    };
    CHECK(gradcheck(fn, flatten(z), flatten(dz)).max_rel_err < 1e-4);
}

TEST_CASE("cross entropy is zero when the correct class has probability one") {
    Matrix logits(1, 2);
    logits(0, 0) = 60.0;
    logits(0, 1) = 0.0;
    const double loss = cross_entropy_with_logits(logits, {0});
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-12);
}

TEST_CASE("cross entropy rejects out-of-range class indices") {
    Matrix logits(2, 3, 0.0);
    CHECK_THROWS_AS(cross_entropy_with_logits(logits, {0, 3}), std::invalid_argument);
    CHECK_THROWS_AS(cross_entropy_with_logits(logits, {-1, 0}), std::invalid_argument);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    auto rng = make_rng(17);
    Matrix logits = random_matrix(rng, 6, 4);
    std::vector<int> labels{0, 3, 1, 2, 2, 0};
    Matrix dlogits;
    cross_entropy_with_logits(logits, labels, &dlogits);
    auto fn = [&](const std::vector<double>& p) {
        return cross_entropy_with_logits(unflatten(p, 6, 4), labels);
    };
    CHECK(gradcheck(fn, flatten(logits), flatten(dlogits)).max_rel_err < 1e-4);
}

TEST_CASE("mse loss is zero on equal inputs and its gradient checks out") {
    Matrix pred(2, 1);
    pred(0, 0) = 1.0;
    pred(1, 0) = 2.0;
    CHECK(mse_loss(pred, {1.0, 2.0}) == 0.0);

    auto rng = make_rng(18);
    Matrix p = random_matrix(rng, 5, 1);
    std::vector<double> y = test_helpers::random_vector(rng, 5);
    Matrix dp;
    mse_loss(p, y, &dp);
    auto fn = [&](const std::vector<double>& q) { return mse_loss(unflatten(q, 5, 1), y); };
    CHECK(gradcheck(fn, flatten(p), flatten(dp)).max_rel_err < 1e-4);
}

TEST_CASE("gradcheck harness is exact on linear functions") {
    std::vector<double> coef{2.0, -3.0, 0.5};
    auto fn = [&](const std::vector<double>& p) {
        return coef[0] * p[0] + coef[1] * p[1] + coef[2] * p[2];
    };
    auto report = gradcheck(fn, {1.0, 2.0, 3.0}, coef);
    CHECK(report.max_rel_err < 1e-10);
}

TEST_CASE("gradcheck harness flags a corrupted gradient") {
    std::vector<double> coef{2.0, -3.0, 0.5};
    auto fn = [&](const std::vector<double>& p) {
        return coef[0] * p[0] + coef[1] * p[1] + coef[2] * p[2];
    };
    std::vector<double> corrupted = coef;
    corrupted[1] += 0.1;
    auto report = gradcheck(fn, {1.0, 2.0, 3.0}, corrupted);
    CHECK(report.max_rel_err > 1e-2);
    CHECK(report.worst_index == 1);
}

TEST_CASE("gradcheck rejects non-finite function values") {
    auto fn = [](const std::vector<double>& p) { return std::log(p[0]); };
    CHECK_THROWS_AS(gradcheck(fn, {0.0}, {1.0}), std::runtime_error);
}
