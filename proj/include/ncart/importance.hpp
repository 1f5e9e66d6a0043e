#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncart/matrix.hpp"
#include "ncart/model.hpp"

namespace ncart {

// Gini impurity of one binary split: 1 - (l/M)^2 - (r/M)^2.
inline double gini_leaf(std::size_t m_left, std::size_t m_right, std::size_t samples) {
    if (samples == 0) throw std::invalid_argument("gini_leaf: zero samples");
    if (m_left + m_right != samples)
        throw std::invalid_argument("gini_leaf: tallies " + std::to_string(m_left) + "+" +
                                    std::to_string(m_right) + " do not sum to " +
                                    std::to_string(samples));
    const double l = static_cast<double>(m_left) / static_cast<double>(samples);
    const double r = static_cast<double>(m_right) / static_cast<double>(samples);
    return 1.0 - l * l - r * r;
}

// Per-input-feature score of one block. Blocks without a selection layer sum
// the per-coordinate Gini over trees; selection blocks push each selected
// coordinate's Gini back through the row-stochastic projection h(A).
inline std::vector<double> block_importance(const NcartBlock& block,
                                            const std::vector<std::vector<SplitTally>>& tallies,
                                            std::size_t samples) {
    if (tallies.size() != block.trees.size())
        throw std::invalid_argument("block_importance: tallies for " +
                                    std::to_string(tallies.size()) + " trees, block has " +
                                    std::to_string(block.trees.size()));
    const std::size_t n = block.in_dim();
    std::vector<double> scores(n, 0.0);
    for (std::size_t i = 0; i < block.trees.size(); ++i) {
        const std::vector<SplitTally>& coords = tallies[i];
        if (coords.size() != block.trees[i].in_dim())
            throw std::invalid_argument("block_importance: tally width mismatch on tree " +
                                        std::to_string(i));
        if (block.has_selection) {
            // recompute h(A_i) rows; selection matrices are d x n
            const Matrix& A = block.selections[i].A;
            for (std::size_t k = 0; k < coords.size(); ++k) {
                const double g = gini_leaf(coords[k].left, coords[k].right, samples);
                std::vector<double> row(A.cols);
                for (std::size_t c = 0; c < A.cols; ++c) row[c] = A(k, c);
                const std::vector<double> p = sparse_apply(block.sparse_fn, row);
                for (std::size_t j = 0; j < n; ++j) scores[j] += g * p[j];
            }
        } else {
            for (std::size_t j = 0; j < coords.size(); ++j)
                scores[j] += gini_leaf(coords[j].left, coords[j].right, samples);
        }
    }
    return scores;
}

struct ImportanceVector {
    std::vector<double> raw;         // per original feature, >= 0
    std::vector<double> normalized;  // raw scaled to sum 1 (zeros if raw is all zero)
};

// Total importance: every block splits the residual stream, whose coordinate
// j is attributed to original feature j (identity skips keep coordinates
// aligned); the final selection block distributes through h(A).
inline ImportanceVector feature_importance(const NcartModel& model, const Matrix& x) {
    if (x.rows == 0) throw std::invalid_argument("feature_importance: empty dataset");
    const RouteTallies tallies = route_counts(model, x);

    ImportanceVector out;
    out.raw.assign(model.n_features, 0.0);
    for (std::size_t l = 0; l < model.blocks.size(); ++l) {
        const std::vector<double> s =
            block_importance(model.blocks[l], tallies.blocks[l], tallies.samples);
        for (std::size_t j = 0; j < out.raw.size(); ++j) out.raw[j] += s[j];
    }

    double total = 0.0;
    for (double v : out.raw) total += v;
    out.normalized.assign(out.raw.size(), 0.0);
    if (total > 0.0)
        for (std::size_t j = 0; j < out.raw.size(); ++j) out.normalized[j] = out.raw[j] / total;
    return out;
}

}  // namespace ncart
