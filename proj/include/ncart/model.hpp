#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncart/kernels.hpp"
#include "ncart/matrix.hpp"
#include "ncart/sparse.hpp"

namespace ncart {

enum class Task { binclass, multiclass, regression };

inline const char* to_string(Task t) {
    switch (t) {
        case Task::binclass: return "binclass";
        case Task::multiclass: return "multiclass";
        default: return "regression";
    }
}

// Architecture and training hyperparameters. blocks/trees/sel_dim ranges
// follow the NCART search space; hidden = 0 means "pick at init time".
struct NcartConfig {
    int blocks = 2;     // L
    int trees = 32;     // N per block
    int sel_dim = 5;    // d, rows of each selection matrix
    int hidden = 0;     // leaf network width; 0 -> max(n_features, 16)
    SparseFn sparse_fn{};
    double lr = 1e-3;
    int batch_size = 1024;
    int epochs = 1000;
    std::uint64_t seed = 0;
    int trials = 10;
    bool early_stop = false;
    int patience = 20;
};

inline void validate_config(const NcartConfig& c) {
    if (c.blocks != 2 && c.blocks != 4)
        throw std::invalid_argument("config: blocks must be 2 or 4, got " +
                                    std::to_string(c.blocks));
    if (c.trees != 8 && c.trees != 16 && c.trees != 32 && c.trees != 64)
        throw std::invalid_argument("config: trees must be one of 8/16/32/64, got " +
                                    std::to_string(c.trees));
    if (c.sel_dim < 2 || c.sel_dim > 10)
        throw std::invalid_argument("config: sel-dim must lie in [2,10], got " +
                                    std::to_string(c.sel_dim));
    if (c.hidden < 0)
        throw std::invalid_argument("config: hidden must be positive (or 0 for auto)");
    if (!(c.lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (c.batch_size < 1) throw std::invalid_argument("config: batch-size must be at least 1");
    if (c.epochs < 0) throw std::invalid_argument("config: epochs must be non-negative");
    if (c.trials < 1) throw std::invalid_argument("config: trials must be at least 1");
    if (c.sparse_fn.kind == SparseKind::entmax && !(c.sparse_fn.alpha > 1.0))
        throw std::invalid_argument("config: entmax alpha must exceed 1");
}

// One differentiable tree: thresholds s plus the two-layer leaf network.
struct TreeParams {
    std::vector<double> s;       // length m
    Matrix W1;                   // h x m
    std::vector<double> b1;      // length h
    Matrix W2;                   // o x h
    std::vector<double> b2;      // length o

    std::size_t in_dim() const { return s.size(); }
    std::size_t out_dim() const { return b2.size(); }
};

struct SelectionParams {
    Matrix A;  // d x n, rows pushed through the sparse transform
};

struct NcartBlock {
    BatchNormState bn;
    std::vector<TreeParams> trees;
    std::vector<SelectionParams> selections;  // one per tree when has_selection
    std::vector<double> w;                    // ensemble weights, length N
    bool has_selection = false;
    std::size_t out_dim = 0;
    SparseFn sparse_fn{};

    std::size_t in_dim() const { return bn.features(); }
};

struct NcartModel {
    std::vector<NcartBlock> blocks;
    std::size_t n_features = 0;
    std::size_t n_outputs = 1;
    Task task = Task::binclass;
    NcartConfig config;
};

// ---------------------------------------------------------------------------
// Caches: everything a backward pass needs from the matching forward pass.
// ---------------------------------------------------------------------------

struct TreeCache {
    Matrix xP;          // tree input after projection (kept for route tallies)
    Matrix sig;         // sigmoid(xP - s)
    Matrix hidden_pre;  // sig * W1^T + b1
    Matrix hidden;      // relu(hidden_pre)
    Matrix out;         // hidden * W2^T + b2
};

struct BlockCache {
    BatchNormCache bn;
    Matrix xB;                 // batch-normalized block input
    std::vector<TreeCache> trees;
    std::vector<Matrix> proj;  // h(A_i), d x n per tree (selection blocks only)
};

struct ForwardCache {
    std::vector<BlockCache> blocks;
};

// Gradient holder mirroring every trainable parameter.
struct TreeGrads {
    std::vector<double> s, b1, b2;
    Matrix W1, W2;
};

struct BlockGrads {
    std::vector<double> gamma, beta;
    std::vector<TreeGrads> trees;
    std::vector<Matrix> A;
    std::vector<double> w;
};

struct ModelGrads {
    std::vector<BlockGrads> blocks;
};

inline ModelGrads make_grads(const NcartModel& m) {
    ModelGrads g;
    g.blocks.resize(m.blocks.size());
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        const NcartBlock& b = m.blocks[l];
        BlockGrads& bg = g.blocks[l];
        bg.gamma.assign(b.bn.features(), 0.0);
        bg.beta.assign(b.bn.features(), 0.0);
        bg.trees.resize(b.trees.size());
        for (std::size_t i = 0; i < b.trees.size(); ++i) {
            const TreeParams& t = b.trees[i];
            TreeGrads& tg = bg.trees[i];
            tg.s.assign(t.s.size(), 0.0);
            tg.b1.assign(t.b1.size(), 0.0);
            tg.b2.assign(t.b2.size(), 0.0);
            tg.W1 = Matrix(t.W1.rows, t.W1.cols);
            tg.W2 = Matrix(t.W2.rows, t.W2.cols);
        }
        for (const SelectionParams& s : b.selections) bg.A.emplace_back(s.A.rows, s.A.cols);
        bg.w.assign(b.w.size(), 0.0);
    }
    return g;
}

inline void zero_grads(ModelGrads& g) {
    for (BlockGrads& bg : g.blocks) {
        std::fill(bg.gamma.begin(), bg.gamma.end(), 0.0);
        std::fill(bg.beta.begin(), bg.beta.end(), 0.0);
        for (TreeGrads& tg : bg.trees) {
            std::fill(tg.s.begin(), tg.s.end(), 0.0);
            std::fill(tg.b1.begin(), tg.b1.end(), 0.0);
            std::fill(tg.b2.begin(), tg.b2.end(), 0.0);
            std::fill(tg.W1.data.begin(), tg.W1.data.end(), 0.0);
            std::fill(tg.W2.data.begin(), tg.W2.data.end(), 0.0);
        }
        for (Matrix& a : bg.A) std::fill(a.data.begin(), a.data.end(), 0.0);
        std::fill(bg.w.begin(), bg.w.end(), 0.0);
    }
}

// Fixed traversal order shared by the optimizer, serialization and the
// gradient-check flattening: per block gamma, beta, then per tree
// s/W1/b1/W2/b2, then the selection matrices, then the ensemble weights.
template <typename F>
inline void for_each_param(NcartModel& m, F&& f) {
    for (NcartBlock& b : m.blocks) {
        f(b.bn.gamma);
        f(b.bn.beta);
        for (TreeParams& t : b.trees) {
            f(t.s);
            f(t.W1.data);
            f(t.b1);
            f(t.W2.data);
            f(t.b2);
        }
        for (SelectionParams& s : b.selections) f(s.A.data);
        f(b.w);
    }
}

template <typename F>
inline void for_each_param(const NcartModel& m, F&& f) {
    for_each_param(const_cast<NcartModel&>(m),
                   [&f](std::vector<double>& p) { f(static_cast<const std::vector<double>&>(p)); });
}

template <typename F>
inline void for_each_param_grad(NcartModel& m, ModelGrads& g, F&& f) {
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        NcartBlock& b = m.blocks[l];
        BlockGrads& bg = g.blocks[l];
        f(b.bn.gamma, bg.gamma);
        f(b.bn.beta, bg.beta);
        for (std::size_t i = 0; i < b.trees.size(); ++i) {
            f(b.trees[i].s, bg.trees[i].s);
            f(b.trees[i].W1.data, bg.trees[i].W1.data);
            f(b.trees[i].b1, bg.trees[i].b1);
            f(b.trees[i].W2.data, bg.trees[i].W2.data);
            f(b.trees[i].b2, bg.trees[i].b2);
        }
        for (std::size_t i = 0; i < b.selections.size(); ++i)
            f(b.selections[i].A.data, bg.A[i].data);
        f(b.w, bg.w);
    }
}

// ---------------------------------------------------------------------------
// Initialization. Deterministic in the seed; weights uniform in
// +-sqrt(1/fan_in), thresholds zero (the median of a standardized feature),
// selection logits uniform in +-0.1, ensemble weights one.
// ---------------------------------------------------------------------------

inline NcartModel init(const NcartConfig& config, std::size_t n_features,
                       std::size_t n_outputs, std::uint64_t seed) {
    validate_config(config);
    if (n_features < 1) throw std::invalid_argument("init: need at least one feature");
    if (n_outputs < 1) throw std::invalid_argument("init: need at least one output");

    const std::size_t L = static_cast<std::size_t>(config.blocks);
    const std::size_t N = static_cast<std::size_t>(config.trees);
    const std::size_t d = static_cast<std::size_t>(config.sel_dim);
    const std::size_t h = config.hidden > 0 ? static_cast<std::size_t>(config.hidden)
                                            : std::max<std::size_t>(n_features, 16);

    std::mt19937_64 rng(seed);
    auto uniform = [&rng](double bound) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        return dist(rng);
    };
    auto fill_uniform = [&](Matrix& mat, double bound) {
        for (double& v : mat.data) v = uniform(bound);
    };

    NcartModel model;
    model.n_features = n_features;
    model.n_outputs = n_outputs;
    model.config = config;
    model.config.hidden = static_cast<int>(h);

    for (std::size_t l = 0; l < L; ++l) {
        const bool last = (l + 1 == L);
        NcartBlock block;
        block.bn = BatchNormState(n_features);
        block.has_selection = last;
        block.out_dim = last ? n_outputs : n_features;
        block.sparse_fn = config.sparse_fn;
        const std::size_t m = last ? d : n_features;

        for (std::size_t i = 0; i < N; ++i) {
            TreeParams t;
            t.s.assign(m, 0.0);
            t.W1 = Matrix(h, m);
            fill_uniform(t.W1, std::sqrt(1.0 / static_cast<double>(m)));
            t.b1.assign(h, 0.0);
            t.W2 = Matrix(block.out_dim, h);
            fill_uniform(t.W2, std::sqrt(1.0 / static_cast<double>(h)));
            t.b2.assign(block.out_dim, 0.0);
            block.trees.push_back(std::move(t));
        }
        if (last) {
            for (std::size_t i = 0; i < N; ++i) {
                SelectionParams sel;
                sel.A = Matrix(d, n_features);
                fill_uniform(sel.A, 0.1);
                block.selections.push_back(std::move(sel));
            }
        }
        block.w.assign(N, 1.0);
        model.blocks.push_back(std::move(block));
    }
    return model;
}

// ---------------------------------------------------------------------------
// Forward passes.
// ---------------------------------------------------------------------------

// t(xP) = W2 relu(W1 sigmoid(xP - s) + b1) + b2, rows independent.
inline Matrix tree_forward(const TreeParams& tree, const Matrix& xP, TreeCache* cache = nullptr) {
    if (xP.cols != tree.in_dim())
        throw std::invalid_argument("tree_forward: input " + shape_str(xP) + " vs tree dim " +
                                    std::to_string(tree.in_dim()));
    Matrix shifted = xP;
    for (std::size_t i = 0; i < shifted.rows; ++i)
        for (std::size_t j = 0; j < shifted.cols; ++j) shifted(i, j) -= tree.s[j];

    Matrix sig = sigmoid_fwd(shifted);
    Matrix hidden_pre = bias_add_fwd(matmul(sig, transpose(tree.W1)), tree.b1);
    Matrix hidden = relu_fwd(hidden_pre);
    Matrix out = bias_add_fwd(matmul(hidden, transpose(tree.W2)), tree.b2);
    if (cache) {
        cache->xP = xP;
        cache->sig = std::move(sig);
        cache->hidden_pre = std::move(hidden_pre);
        cache->hidden = std::move(hidden);
        cache->out = out;
    }
    return out;
}

// BN -> per-tree projection -> trees -> weighted mean (1/N) sum w_i t_i.
inline Matrix block_forward(NcartBlock& block, const Matrix& x, Mode mode,
                            BlockCache* cache = nullptr) {
    if (x.cols != block.in_dim())
        throw std::invalid_argument("block_forward: input " + shape_str(x) + " vs block dim " +
                                    std::to_string(block.in_dim()));
    const std::size_t N = block.trees.size();

    BatchNormCache bn_cache;
    Matrix xB = batchnorm_fwd(x, block.bn, mode, cache ? &bn_cache : nullptr);

    Matrix out(x.rows, block.out_dim);
    if (cache) {
        cache->bn = std::move(bn_cache);
        cache->trees.resize(N);
        cache->proj.clear();
    }

    for (std::size_t i = 0; i < N; ++i) {
        Matrix xP;
        if (block.has_selection) {
            const Matrix& A = block.selections[i].A;
            Matrix P(A.rows, A.cols);
            for (std::size_t r = 0; r < A.rows; ++r) {
                std::vector<double> row(A.cols);
                for (std::size_t c = 0; c < A.cols; ++c) row[c] = A(r, c);
                std::vector<double> p = sparse_apply(block.sparse_fn, row);
                for (std::size_t c = 0; c < A.cols; ++c) P(r, c) = p[c];
            }
            xP = matmul(xB, transpose(P));
            if (cache) cache->proj.push_back(std::move(P));
        } else {
            xP = xB;
        }
        Matrix t = tree_forward(block.trees[i], xP, cache ? &cache->trees[i] : nullptr);
        const double scale = block.w[i] / static_cast<double>(N);
        for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += scale * t.data[k];
    }
    if (cache) cache->xB = std::move(xB);
    return out;
}

// Residual stack: y_l = y_{l-1} + B_l(y_{l-1}) for every block except the
// last, which changes dimension and therefore has no skip.
inline Matrix forward(NcartModel& model, const Matrix& x, Mode mode,
                      ForwardCache* cache = nullptr) {
    if (x.cols != model.n_features)
        throw std::invalid_argument("forward: input " + shape_str(x) + " vs " +
                                    std::to_string(model.n_features) + " features");
    if (cache) cache->blocks.resize(model.blocks.size());

    Matrix y = x;
    const std::size_t L = model.blocks.size();
    for (std::size_t l = 0; l + 1 < L; ++l) {
        Matrix r = block_forward(model.blocks[l], y, mode, cache ? &cache->blocks[l] : nullptr);
        add_inplace(y, r);
    }
    return block_forward(model.blocks[L - 1], y, mode, cache ? &cache->blocks[L - 1] : nullptr);
}

// ---------------------------------------------------------------------------
// Backward passes (reverse-mode, exact).
// ---------------------------------------------------------------------------

inline Matrix tree_backward(const TreeParams& tree, const TreeCache& cache, const Matrix& dt,
                            TreeGrads& g) {
    // output layer
    Matrix dW2 = matmul_at(dt, cache.hidden);
    add_inplace(g.W2, dW2);
    std::vector<double> db2 = bias_add_bwd(dt);
    for (std::size_t j = 0; j < db2.size(); ++j) g.b2[j] += db2[j];

    Matrix dh = matmul(dt, tree.W2);
    // relu
    for (std::size_t k = 0; k < dh.data.size(); ++k)
        if (cache.hidden_pre.data[k] <= 0.0) dh.data[k] = 0.0;

    Matrix dW1 = matmul_at(dh, cache.sig);
    add_inplace(g.W1, dW1);
    std::vector<double> db1 = bias_add_bwd(dh);
    for (std::size_t j = 0; j < db1.size(); ++j) g.b1[j] += db1[j];

    Matrix dsig = matmul(dh, tree.W1);
    // sigmoid of (xP - s)
    Matrix dpre = dsig;
    for (std::size_t k = 0; k < dpre.data.size(); ++k) {
        const double sg = cache.sig.data[k];
        dpre.data[k] *= sg * (1.0 - sg);
    }
    std::vector<double> ds = col_sums(dpre);
    for (std::size_t j = 0; j < ds.size(); ++j) g.s[j] -= ds[j];
    return dpre;  // = d loss / d xP
}

inline Matrix block_backward(const NcartBlock& block, const BlockCache& cache, const Matrix& dO,
                             BlockGrads& g) {
    const std::size_t N = block.trees.size();
    const double invN = 1.0 / static_cast<double>(N);
    Matrix dXB(cache.xB.rows, cache.xB.cols);

    for (std::size_t i = 0; i < N; ++i) {
        const TreeCache& tc = cache.trees[i];
        double wg = 0.0;
        for (std::size_t k = 0; k < dO.data.size(); ++k) wg += dO.data[k] * tc.out.data[k];
        g.w[i] += invN * wg;

        Matrix dt = scale(dO, block.w[i] * invN);
        Matrix dxP = tree_backward(block.trees[i], tc, dt, g.trees[i]);

        if (block.has_selection) {
            const Matrix& P = cache.proj[i];
            add_inplace(dXB, matmul(dxP, P));
            Matrix dP = matmul_at(dxP, cache.xB);  // d x n
            for (std::size_t r = 0; r < P.rows; ++r) {
                std::vector<double> prow(P.cols), vrow(P.cols);
                for (std::size_t c = 0; c < P.cols; ++c) {
                    prow[c] = P(r, c);
                    vrow[c] = dP(r, c);
                }
                std::vector<double> da = sparse_apply_bwd(block.sparse_fn, prow, vrow);
                for (std::size_t c = 0; c < P.cols; ++c) g.A[i](r, c) += da[c];
            }
        } else {
            add_inplace(dXB, dxP);
        }
    }
    return batchnorm_bwd(dXB, block.bn, cache.bn, g.gamma, g.beta);
}

// Gradients of every parameter given d loss / d output. Residual skips add
// cotangents on the way down.
inline Matrix backward(const NcartModel& model, const ForwardCache& cache, const Matrix& d_out,
                       ModelGrads& grads) {
    if (cache.blocks.size() != model.blocks.size() || grads.blocks.size() != model.blocks.size())
        throw std::invalid_argument("backward: cache/gradient holder does not match the model");
    const std::size_t L = model.blocks.size();
    Matrix d = block_backward(model.blocks[L - 1], cache.blocks[L - 1], d_out,
                              grads.blocks[L - 1]);
    for (std::size_t l = L - 1; l-- > 0;) {
        Matrix dx = block_backward(model.blocks[l], cache.blocks[l], d, grads.blocks[l]);
        add_inplace(d, dx);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Inference and routing tallies.
// ---------------------------------------------------------------------------

// Class probabilities for classification, raw outputs for regression.
// Eval-mode BN never mutates the model, so trained models can be shared.
inline Matrix predict(const NcartModel& model, const Matrix& x) {
    NcartModel& m = const_cast<NcartModel&>(model);
    Matrix out = forward(m, x, Mode::eval);
    if (model.task == Task::regression) return out;
    return softmax_rows(out);
}

struct SplitTally {
    std::size_t left = 0;
    std::size_t right = 0;
};

// tallies.blocks[l][tree][coordinate]
struct RouteTallies {
    std::size_t samples = 0;
    std::vector<std::vector<std::vector<SplitTally>>> blocks;
};

// A sample routes right at coordinate j when sigmoid(xP_j - s_j) > 0.5,
// i.e. exactly when xP_j > s_j; boundary samples count as left.
inline RouteTallies route_counts(const NcartModel& model, const Matrix& x) {
    NcartModel& m = const_cast<NcartModel&>(model);
    ForwardCache cache;
    forward(m, x, Mode::eval, &cache);

    RouteTallies tallies;
    tallies.samples = x.rows;
    tallies.blocks.resize(model.blocks.size());
    for (std::size_t l = 0; l < model.blocks.size(); ++l) {
        const NcartBlock& block = model.blocks[l];
        tallies.blocks[l].resize(block.trees.size());
        for (std::size_t i = 0; i < block.trees.size(); ++i) {
            const TreeParams& tree = block.trees[i];
            const Matrix& xP = cache.blocks[l].trees[i].xP;
            std::vector<SplitTally>& coords = tallies.blocks[l][i];
            coords.resize(tree.in_dim());
            for (std::size_t j = 0; j < tree.in_dim(); ++j) {
                std::size_t right = 0;
                for (std::size_t r = 0; r < xP.rows; ++r)
                    if (xP(r, j) > tree.s[j]) ++right;
                coords[j].right = right;
                coords[j].left = x.rows - right;
            }
        }
    }
    return tallies;
}

}  // namespace ncart
