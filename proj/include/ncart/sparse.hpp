#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncart {

enum class SparseKind { sparsemax, entmax };

// The row transform h of the selection matrix. alpha only applies to entmax;
// 1.5 sits between softmax (alpha -> 1) and sparsemax (alpha = 2) and has the
// cheap sqrt backward.
struct SparseFn {
    SparseKind kind = SparseKind::sparsemax;
    double alpha = 1.5;
};

inline const char* to_string(SparseKind k) {
    return k == SparseKind::sparsemax ? "sparsemax" : "entmax";
}

namespace detail {
inline void check_sparse_input(const std::vector<double>& z, const char* what) {
    if (z.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
    for (double v : z)
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}
}  // namespace detail

// Euclidean projection of z onto the probability simplex, by the sorted
// threshold rule. Ties in the sort keep original index order.
inline std::vector<double> sparsemax(const std::vector<double>& z) {
    detail::check_sparse_input(z, "sparsemax");
    const std::size_t d = z.size();
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return z[a] > z[b]; });

    // k(z) = max{k : 1 + k z_(k) > sum of top k}; the valid k form a prefix.
    double cumsum = 0.0;
    double tau = 0.0;
    for (std::size_t k = 1; k <= d; ++k) {
        const double zk = z[order[k - 1]];
        if (1.0 + static_cast<double>(k) * zk > cumsum + zk) {
            cumsum += zk;
            tau = (cumsum - 1.0) / static_cast<double>(k);
        } else {
            break;
        }
    }
    std::vector<double> p(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) p[i] = std::max(z[i] - tau, 0.0);
    return p;
}

// Jacobian-vector product of sparsemax at output p: on the support,
// g_i = v_i - mean of v over the support; zero elsewhere.
inline std::vector<double> sparsemax_bwd(const std::vector<double>& p,
                                         const std::vector<double>& v) {
    if (p.size() != v.size())
        throw std::invalid_argument("sparsemax_bwd: length mismatch");
    double vsum = 0.0;
    std::size_t nnz = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) {
            vsum += v[i];
            ++nnz;
        }
    if (nnz == 0) throw std::invalid_argument("sparsemax_bwd: empty support");
    const double vmean = vsum / static_cast<double>(nnz);
    std::vector<double> g(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) g[i] = v[i] - vmean;
    return g;
}

// alpha-entmax via bisection on the threshold tau:
//   p_i = max((alpha-1) z_i - tau, 0)^(1/(alpha-1)),  sum p = 1.
// The bracket [max(zs)-1, max(zs)] over zs = (alpha-1) z always contains the
// root: at the lower end the max coordinate alone contributes 1.
inline std::vector<double> entmax(const std::vector<double>& z, double alpha = 1.5) {
    detail::check_sparse_input(z, "entmax");
    if (!(alpha > 1.0)) throw std::invalid_argument("entmax: alpha must exceed 1");
    const std::size_t d = z.size();
    const double am1 = alpha - 1.0;
    const double inv_am1 = 1.0 / am1;

    std::vector<double> zs(d);
    for (std::size_t i = 0; i < d; ++i) zs[i] = am1 * z[i];
    const double zmax = *std::max_element(zs.begin(), zs.end());

    auto mass = [&](double tau, std::vector<double>& p) {
        double sum = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double u = zs[i] - tau;
            p[i] = u > 0.0 ? std::pow(u, inv_am1) : 0.0;
            sum += p[i];
        }
        return sum;
    };

    double lo = zmax - 1.0, hi = zmax;
    std::vector<double> p(d, 0.0);
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double sum = mass(mid, p);
        if (std::fabs(sum - 1.0) <= 1e-12) return p;
        if (sum > 1.0)
            lo = mid;
        else
            hi = mid;
    }
    mass(0.5 * (lo + hi), p);
    return p;
}

// Jacobian-vector product of alpha-entmax at output p:
//   with g_i = p_i^(2-alpha) on the support, dz_i = g_i v_i - g_i <g,v>/<g,1>.
inline std::vector<double> entmax_bwd(const std::vector<double>& p, double alpha,
                                      const std::vector<double>& v) {
    if (p.size() != v.size())
        throw std::invalid_argument("entmax_bwd: length mismatch");
    std::vector<double> g(p.size(), 0.0);
    double gv = 0.0, gsum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            g[i] = std::pow(p[i], 2.0 - alpha);
            gv += g[i] * v[i];
            gsum += g[i];
        }
    }
    if (gsum == 0.0) throw std::invalid_argument("entmax_bwd: empty support");
    std::vector<double> dz(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) dz[i] = g[i] * v[i] - g[i] * gv / gsum;
    return dz;
}

inline std::vector<double> sparse_apply(const SparseFn& fn, const std::vector<double>& z) {
    return fn.kind == SparseKind::sparsemax ? sparsemax(z) : entmax(z, fn.alpha);
}

inline std::vector<double> sparse_apply_bwd(const SparseFn& fn, const std::vector<double>& p,
                                            const std::vector<double>& v) {
    return fn.kind == SparseKind::sparsemax ? sparsemax_bwd(p, v) : entmax_bwd(p, fn.alpha, v);
}

}  // namespace ncart
