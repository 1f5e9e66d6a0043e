#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncart {

// ---------------------------------------------------------------------------
// Axis-aligned decision trees over a handful of axes, and their refinement
// into a grid of cells. A point routes right when x[axis] >= threshold
// (Heaviside with H(0) = 1).
// ---------------------------------------------------------------------------

struct AxisTreeNode {
    bool is_leaf = true;
    double value = 0.0;
    int axis = 0;
    double threshold = 0.0;
    std::unique_ptr<AxisTreeNode> left, right;
};

struct AxisTree {
    std::unique_ptr<AxisTreeNode> root;
    std::size_t n_axes = 0;
};

inline double tree_eval(const AxisTreeNode& node, const std::vector<double>& point) {
    if (node.is_leaf) return node.value;
    const AxisTreeNode& next =
        point[static_cast<std::size_t>(node.axis)] >= node.threshold ? *node.right : *node.left;
    return tree_eval(next, point);
}

inline double tree_eval(const AxisTree& tree, const std::vector<double>& point) {
    if (point.size() < tree.n_axes)
        throw std::invalid_argument("tree_eval: point has " + std::to_string(point.size()) +
                                    " coordinates, tree uses " + std::to_string(tree.n_axes));
    return tree_eval(*tree.root, point);
}

// Nested text format:   split AXIS THRESHOLD { LEFT } { RIGHT }   |   leaf VALUE
namespace odt_detail {

inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (c == '{' || c == '}') {
            flush();
            tokens.push_back(std::string(1, c));
        } else {
            cur += c;
        }
    }
    flush();
    return tokens;
}

inline double parse_number(const std::string& tok, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(std::string("tree parse: expected ") + what + ", got '" + tok +
                                 "'");
    }
}

inline std::unique_ptr<AxisTreeNode> parse_node(const std::vector<std::string>& tokens,
                                                std::size_t& pos, std::size_t& max_axis) {
    auto need = [&](const char* what) -> const std::string& {
        if (pos >= tokens.size())
            throw std::runtime_error(std::string("tree parse: unexpected end, expected ") + what);
        return tokens[pos++];
    };
    const std::string& head = need("'leaf' or 'split'");
    auto node = std::make_unique<AxisTreeNode>();
    if (head == "leaf") {
        node->is_leaf = true;
        node->value = parse_number(need("leaf value"), "leaf value");
        return node;
    }
    if (head != "split")
        throw std::runtime_error("tree parse: expected 'leaf' or 'split', got '" + head + "'");
    node->is_leaf = false;
    node->axis = static_cast<int>(parse_number(need("axis index"), "axis index"));
    if (node->axis < 0) throw std::runtime_error("tree parse: negative axis index");
    max_axis = std::max(max_axis, static_cast<std::size_t>(node->axis));
    node->threshold = parse_number(need("threshold"), "threshold");
    if (!std::isfinite(node->threshold)) throw std::runtime_error("tree parse: non-finite threshold");
    if (need("'{'") != "{") throw std::runtime_error("tree parse: expected '{' before left child");
    node->left = parse_node(tokens, pos, max_axis);
    if (need("'}'") != "}") throw std::runtime_error("tree parse: expected '}' after left child");
    if (need("'{'") != "{") throw std::runtime_error("tree parse: expected '{' before right child");
    node->right = parse_node(tokens, pos, max_axis);
    if (need("'}'") != "}") throw std::runtime_error("tree parse: expected '}' after right child");
    return node;
}

}  // namespace odt_detail

inline AxisTree parse_tree(const std::string& text) {
    const std::vector<std::string> tokens = odt_detail::tokenize(text);
    if (tokens.empty()) throw std::runtime_error("tree parse: empty description");
    std::size_t pos = 0;
    std::size_t max_axis = 0;
    bool any_split = false;
    for (const std::string& t : tokens) any_split |= (t == "split");
    AxisTree tree;
    tree.root = odt_detail::parse_node(tokens, pos, max_axis);
    if (pos != tokens.size())
        throw std::runtime_error("tree parse: trailing tokens after the root node");
    tree.n_axes = any_split ? max_axis + 1 : 0;
    return tree;
}

// ---------------------------------------------------------------------------
// Grid refinement: collect every split threshold per axis and tabulate the
// tree's value on each cell. Extending split lines to full grid lines never
// changes the represented function.
// ---------------------------------------------------------------------------

struct GridSpec {
    std::vector<std::vector<double>> thresholds;  // per axis, strictly increasing
    std::vector<std::size_t> dims;                // per axis: thresholds + 1 intervals
    std::vector<double> values;                   // row-major over axes

    std::size_t n_cells() const {
        std::size_t n = 1;
        for (std::size_t d : dims) n *= d;
        return n;
    }
};

// Interval of one coordinate: number of thresholds <= v ([t_i, t_{i+1}) cells).
inline std::size_t interval_index(const std::vector<double>& thresholds, double v) {
    return static_cast<std::size_t>(
        std::upper_bound(thresholds.begin(), thresholds.end(), v) - thresholds.begin());
}

inline GridSpec refine(const AxisTree& tree) {
    if (tree.n_axes > 3)
        throw std::invalid_argument("refine: trees over more than 3 axes are not supported");

    GridSpec grid;
    grid.thresholds.assign(tree.n_axes, {});
    std::vector<std::set<double>> seen(tree.n_axes);
    std::function<void(const AxisTreeNode&)> collect = [&](const AxisTreeNode& node) {
        if (node.is_leaf) return;
        seen[static_cast<std::size_t>(node.axis)].insert(node.threshold);
        collect(*node.left);
        collect(*node.right);
    };
    collect(*tree.root);
    for (std::size_t a = 0; a < tree.n_axes; ++a)
        grid.thresholds[a].assign(seen[a].begin(), seen[a].end());

    grid.dims.resize(tree.n_axes);
    for (std::size_t a = 0; a < tree.n_axes; ++a) grid.dims[a] = grid.thresholds[a].size() + 1;

    // representative point of interval i along an axis: strictly inside the
    // half-open cell [t_i, t_{i+1})
    auto representative = [&](std::size_t axis, std::size_t i) {
        const std::vector<double>& ts = grid.thresholds[axis];
        if (ts.empty()) return 0.0;
        if (i == 0) return ts.front() - 1.0;
        if (i == ts.size()) return ts.back() + 1.0;
        return 0.5 * (ts[i - 1] + ts[i]);
    };

    grid.values.resize(grid.n_cells());
    std::vector<std::size_t> idx(tree.n_axes, 0);
    for (std::size_t cell = 0; cell < grid.values.size(); ++cell) {
        std::vector<double> point(tree.n_axes);
        for (std::size_t a = 0; a < tree.n_axes; ++a) point[a] = representative(a, idx[a]);
        grid.values[cell] = tree_eval(*tree.root, point);
        for (std::size_t a = tree.n_axes; a-- > 0;) {
            if (++idx[a] < grid.dims[a]) break;
            idx[a] = 0;
        }
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Fitting a_r + b_c to a 2-axis grid under the L1 objective by alternating
// exact median updates. Each coordinate subproblem is solved exactly, so the
// objective never increases across sweeps. The (a+t, b-t) gauge freedom is
// fixed afterwards by pinning mean(b) to the global median of the grid.
// ---------------------------------------------------------------------------

struct OdtLeafVectors {
    std::vector<double> a;  // per row interval of axis 0
    std::vector<double> b;  // per column interval of axis 1
};

struct OdtFit {
    OdtLeafVectors leaves;
    double residual = 0.0;
    std::vector<double> objective_trace;  // objective after each sweep
    std::size_t sweeps = 0;
};

namespace odt_detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

}  // namespace odt_detail

inline OdtFit fit_two_odts(const GridSpec& grid) {
    if (grid.dims.size() != 2)
        throw std::invalid_argument("fit_two_odts: need a 2-axis grid, got " +
                                    std::to_string(grid.dims.size()) + " axes");
    if (grid.values.empty()) throw std::invalid_argument("fit_two_odts: empty grid");
    const std::size_t R = grid.dims[0], C = grid.dims[1];
    auto at = [&](std::size_t r, std::size_t c) { return grid.values[r * C + c]; };

    OdtFit fit;
    std::vector<double>& a = fit.leaves.a;
    std::vector<double>& b = fit.leaves.b;
    a.assign(R, 0.0);
    b.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> col(R);
        for (std::size_t r = 0; r < R; ++r) col[r] = at(r, c);
        b[c] = odt_detail::median(std::move(col));
    }

    auto objective = [&] {
        double s = 0.0;
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) s += std::fabs(a[r] + b[c] - at(r, c));
        return s;
    };

    double prev = objective();
    for (std::size_t sweep = 0; sweep < 200; ++sweep) {
        for (std::size_t r = 0; r < R; ++r) {
            std::vector<double> res(C);
            for (std::size_t c = 0; c < C; ++c) res[c] = at(r, c) - b[c];
            a[r] = odt_detail::median(std::move(res));
        }
        for (std::size_t c = 0; c < C; ++c) {
            std::vector<double> res(R);
            for (std::size_t r = 0; r < R; ++r) res[r] = at(r, c) - a[r];
            b[c] = odt_detail::median(std::move(res));
        }
        const double obj = objective();
        fit.objective_trace.push_back(obj);
        fit.sweeps = sweep + 1;
        if (prev - obj < 1e-12) break;
        prev = obj;
    }
    fit.residual = fit.objective_trace.back();

    // gauge fix
    const double global_median = odt_detail::median(grid.values);
    double b_mean = 0.0;
    for (double v : b) b_mean += v;
    b_mean /= static_cast<double>(C);
    const double shift = b_mean - global_median;
    for (double& v : b) v -= shift;
    for (double& v : a) v += shift;
    return fit;
}

// Value of the fitted ODT pair at a point: locate each coordinate's interval
// by Heaviside comparisons, then add the two leaf entries.
inline double odt_eval(const OdtLeafVectors& leaves, const GridSpec& grid,
                       const std::vector<double>& point) {
    if (grid.dims.size() != 2 || point.size() < 2)
        throw std::invalid_argument("odt_eval: need a 2-axis grid and a 2-d point");
    const std::size_t r = interval_index(grid.thresholds[0], point[0]);
    const std::size_t c = interval_index(grid.thresholds[1], point[1]);
    return leaves.a[r] + leaves.b[c];
}

}  // namespace ncart
