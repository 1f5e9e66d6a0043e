#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ncart/matrix.hpp"

namespace ncart {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Elementwise activations. Each forward returns its cache for the matching
// backward call; one cache feeds exactly one backward.
// ---------------------------------------------------------------------------

struct ReluCache {
    Matrix input;
};

inline Matrix relu_fwd(const Matrix& x, ReluCache* cache = nullptr) {
    Matrix out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    if (cache) cache->input = x;
    return out;
}

inline Matrix relu_bwd(const Matrix& dy, const ReluCache& cache) {
    require_same_shape(dy, cache.input, "relu_bwd");
    Matrix dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (cache.input.data[i] <= 0.0) dx.data[i] = 0.0;
    return dx;
}

inline double sigmoid(double x) {
    // Split by sign so exp never overflows.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct SigmoidCache {
    Matrix output;
};

inline Matrix sigmoid_fwd(const Matrix& x, SigmoidCache* cache = nullptr) {
    Matrix out = x;
    for (double& v : out.data) v = sigmoid(v);
    if (cache) cache->output = out;
    return out;
}

inline Matrix sigmoid_bwd(const Matrix& dy, const SigmoidCache& cache) {
    require_same_shape(dy, cache.output, "sigmoid_bwd");
    Matrix dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
        const double s = cache.output.data[i];
        dx.data[i] *= s * (1.0 - s);
    }
    return dx;
}

inline Matrix bias_add_fwd(const Matrix& x, const std::vector<double>& b) {
    if (x.cols != b.size())
        throw std::invalid_argument("bias_add: " + shape_str(x) + " vs bias length " +
                                    std::to_string(b.size()));
    Matrix out = x;
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out(i, j) += b[j];
    return out;
}

// dL/dx passes through unchanged; dL/db is the column sum of dy.
inline std::vector<double> bias_add_bwd(const Matrix& dy) { return col_sums(dy); }

// ---------------------------------------------------------------------------
// Batch normalization over columns (features). Train mode normalizes with
// the batch statistics (biased 1/M variance) and folds them into the running
// estimates; eval mode normalizes with the running estimates only.
// ---------------------------------------------------------------------------

struct BatchNormState {
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNormState(std::size_t features = 0)
        : gamma(features, 1.0),
          beta(features, 0.0),
          running_mean(features, 0.0),
          running_var(features, 1.0) {}

    std::size_t features() const { return gamma.size(); }
};

struct BatchNormCache {
    Matrix xhat;
    std::vector<double> inv_std;  // 1/sqrt(var + eps) per feature
};

inline Matrix batchnorm_fwd(const Matrix& x, BatchNormState& state, Mode mode,
                            BatchNormCache* cache = nullptr) {
    const std::size_t n = state.features();
    if (n == 0) throw std::invalid_argument("batchnorm: zero features");
    if (x.cols != n)
        throw std::invalid_argument("batchnorm: input " + shape_str(x) + " vs " +
                                    std::to_string(n) + " features");
    if (mode == Mode::train && x.rows < 2)
        throw std::invalid_argument("batchnorm: train mode needs a batch of at least 2 rows");

    const double m = static_cast<double>(x.rows);
    std::vector<double> mean(n, 0.0), var(n, 0.0);
    if (mode == Mode::train) {
        for (std::size_t i = 0; i < x.rows; ++i)
            for (std::size_t j = 0; j < n; ++j) mean[j] += x(i, j);
        for (std::size_t j = 0; j < n; ++j) mean[j] /= m;
        for (std::size_t i = 0; i < x.rows; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double d = x(i, j) - mean[j];
                var[j] += d * d;
            }
        for (std::size_t j = 0; j < n; ++j) var[j] /= m;
        for (std::size_t j = 0; j < n; ++j) {
            state.running_mean[j] =
                (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean[j];
            state.running_var[j] =
                (1.0 - state.momentum) * state.running_var[j] + state.momentum * var[j];
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }

    std::vector<double> inv_std(n);
    for (std::size_t j = 0; j < n; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);

    Matrix xhat(x.rows, n);
    Matrix out(x.rows, n);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (x(i, j) - mean[j]) * inv_std[j];
            xhat(i, j) = h;
            out(i, j) = state.gamma[j] * h + state.beta[j];
        }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

// Train-mode backward through the batch statistics.
inline Matrix batchnorm_bwd(const Matrix& dy, const BatchNormState& state,
                            const BatchNormCache& cache, std::vector<double>& dgamma,
                            std::vector<double>& dbeta) {
    const std::size_t n = state.features();
    require_same_shape(dy, cache.xhat, "batchnorm_bwd");
    const double m = static_cast<double>(dy.rows);

    dgamma.assign(n, 0.0);
    dbeta.assign(n, 0.0);
    std::vector<double> sum_dxhat(n, 0.0), sum_dxhat_xhat(n, 0.0);
    for (std::size_t i = 0; i < dy.rows; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double g = dy(i, j);
            const double h = cache.xhat(i, j);
            dgamma[j] += g * h;
            dbeta[j] += g;
            const double dxhat = g * state.gamma[j];
            sum_dxhat[j] += dxhat;
            sum_dxhat_xhat[j] += dxhat * h;
        }

    Matrix dx(dy.rows, n);
    for (std::size_t i = 0; i < dy.rows; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double dxhat = dy(i, j) * state.gamma[j];
            dx(i, j) = cache.inv_std[j] / m *
                       (m * dxhat - sum_dxhat[j] - cache.xhat(i, j) * sum_dxhat_xhat[j]);
        }
    return dx;
}

// ---------------------------------------------------------------------------
// Softmax and losses (mean over the batch).
// ---------------------------------------------------------------------------

inline Matrix softmax_rows(const Matrix& logits) {
    Matrix out = logits;
    for (std::size_t i = 0; i < out.rows; ++i) {
        double mx = out(i, 0);
        for (std::size_t j = 1; j < out.cols; ++j) mx = std::max(mx, out(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < out.cols; ++j) {
            const double e = std::exp(out(i, j) - mx);
            out(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < out.cols; ++j) out(i, j) /= sum;
    }
    return out;
}

// Jacobian-vector product of row-wise softmax: dz = p .* (dp - <p, dp>).
inline Matrix softmax_bwd(const Matrix& p, const Matrix& dp) {
    require_same_shape(p, dp, "softmax_bwd");
    Matrix dz(p.rows, p.cols);
    for (std::size_t i = 0; i < p.rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < p.cols; ++j) dot += p(i, j) * dp(i, j);
        for (std::size_t j = 0; j < p.cols; ++j) dz(i, j) = p(i, j) * (dp(i, j) - dot);
    }
    return dz;
}

// Mean softmax cross-entropy straight from logits; also yields dL/dlogits.
inline double cross_entropy_with_logits(const Matrix& logits, const std::vector<int>& labels,
                                        Matrix* dlogits = nullptr) {
    if (logits.rows != labels.size())
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for " + shape_str(logits) + " logits");
    const double m = static_cast<double>(logits.rows);
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= logits.cols)
            throw std::invalid_argument("cross_entropy: class index " +
                                        std::to_string(labels[i]) + " out of range at row " +
                                        std::to_string(i));

    Matrix p = softmax_rows(logits);
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        // log p via the stable log-sum-exp route
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(i, j));
        double lse = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) lse += std::exp(logits(i, j) - mx);
        loss += (mx + std::log(lse)) - logits(i, static_cast<std::size_t>(labels[i]));
    }
    loss /= m;

    if (dlogits) {
        *dlogits = p;
        for (std::size_t i = 0; i < logits.rows; ++i)
            (*dlogits)(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        for (double& v : dlogits->data) v /= m;
    }
    return loss;
}

// Mean squared error over every entry of pred; also yields dL/dpred.
inline double mse_loss(const Matrix& pred, const std::vector<double>& targets,
                       Matrix* dpred = nullptr) {
    if (pred.rows != targets.size() || pred.cols != 1)
        throw std::invalid_argument("mse_loss: prediction " + shape_str(pred) + " vs " +
                                    std::to_string(targets.size()) + " targets");
    const double m = static_cast<double>(pred.rows);
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.rows; ++i) {
        const double r = pred(i, 0) - targets[i];
        loss += r * r;
    }
    loss /= m;
    if (dpred) {
        *dpred = Matrix(pred.rows, 1);
        for (std::size_t i = 0; i < pred.rows; ++i)
            (*dpred)(i, 0) = 2.0 * (pred(i, 0) - targets[i]) / m;
    }
    return loss;
}

}  // namespace ncart
