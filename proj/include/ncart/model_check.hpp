#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ncart/gradcheck.hpp"
#include "ncart/kernels.hpp"
#include "ncart/model.hpp"

namespace ncart {

inline std::vector<double> flatten_model_params(const NcartModel& m) {
    std::vector<double> flat;
    for_each_param(m, [&flat](const std::vector<double>& p) {
        flat.insert(flat.end(), p.begin(), p.end());
    });
    return flat;
}

inline void write_model_params(NcartModel& m, const std::vector<double>& flat) {
    std::size_t pos = 0;
    for_each_param(m, [&](std::vector<double>& p) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + p.size()), p.begin());
        pos += p.size();
    });
}

inline std::vector<double> flatten_model_grads(NcartModel& m, ModelGrads& g) {
    std::vector<double> flat;
    for_each_param_grad(m, g, [&flat](std::vector<double>&, std::vector<double>& gv) {
        flat.insert(flat.end(), gv.begin(), gv.end());
    });
    return flat;
}

// Deterministic coordinate sample: an even stride over the flat parameter
// vector (budget = 0 takes everything). The per-tree tensors interleave in
// the flat layout, so a stride visits every tensor kind across the trees.
inline std::vector<std::size_t> sample_coordinates(const NcartModel& m, std::size_t budget,
                                                   std::uint64_t phase = 0) {
    std::size_t total = 0;
    for_each_param(m, [&total](const std::vector<double>& p) { total += p.size(); });
    std::vector<std::size_t> coords;
    if (budget == 0 || total <= budget) {
        coords.resize(total);
        for (std::size_t i = 0; i < total; ++i) coords[i] = i;
        return coords;
    }
    const std::size_t stride = total / budget;
    const std::size_t start = stride > 1 ? static_cast<std::size_t>(phase % stride) : 0;
    for (std::size_t i = start; i < total; i += stride) coords.push_back(i);
    return coords;
}

// Finite-difference check of the training loss over a coordinate subset
// (per_tensor = 0 checks everything).
inline GradCheckReport whole_model_gradcheck(const NcartModel& model, const Matrix& x,
                                             const std::vector<int>& labels,
                                             std::size_t budget = 0, double h = 1e-5,
                                             double rtol = 1e-4, double atol = 1e-8,
                                             std::uint64_t phase = 0) {
    NcartModel work = model;
    ForwardCache cache;
    Matrix out = forward(work, x, Mode::train, &cache);
    Matrix d_out;
    cross_entropy_with_logits(out, labels, &d_out);
    ModelGrads grads = make_grads(work);
    backward(work, cache, d_out, grads);

    const std::vector<double> params = flatten_model_params(model);
    const std::vector<double> analytic = flatten_model_grads(work, grads);
    const std::vector<std::size_t> coords = sample_coordinates(model, budget, phase);

    GradCheckReport report;
    report.n_params = coords.size();
    double worst_violation = 0.0;
    std::vector<double> p = params;
    NcartModel probe = model;
    for (std::size_t idx : coords) {
        const double saved = p[idx];
        p[idx] = saved + h;
        write_model_params(probe, p);
        const double fp = cross_entropy_with_logits(forward(probe, x, Mode::train), labels);
        p[idx] = saved - h;
        write_model_params(probe, p);
        const double fm = cross_entropy_with_logits(forward(probe, x, Mode::train), labels);
        p[idx] = saved;

        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[idx];
        const double abs_err = std::fabs(a - numeric);
        const double scale = std::max(std::fabs(a), std::fabs(numeric));
        report.max_rel_err = std::max(report.max_rel_err, abs_err / std::max(scale, 1e-8));
        report.max_abs_err = std::max(report.max_abs_err, abs_err);
        const double violation = abs_err / std::max(rtol * scale, atol);
        if (violation > worst_violation) {
            worst_violation = violation;
            report.worst_index = idx;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    write_model_params(probe, params);
    report.ok = worst_violation <= 1.0;
    return report;
}

// One corner of the hyperparameter grid at reduced width.
struct CornerCheck {
    NcartConfig config;
    GradCheckReport report;
};

// Gradient checks across the extreme corners of the search space
// ({2,4} blocks x {8,64} trees x sel_dim {2,10} x both sparse transforms)
// on a random 16-sample batch at hidden width 8.
inline std::vector<CornerCheck> search_grid_gradcheck(std::uint64_t seed,
                                                      std::size_t n_features = 6,
                                                      std::size_t batch = 16, int hidden = 8,
                                                      std::size_t budget = 320) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    Matrix x(batch, n_features);
    for (double& v : x.data) v = dist(rng);
    std::vector<int> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<int>(i % 2);

    std::vector<CornerCheck> results;
    for (int blocks : {2, 4})
        for (int trees : {8, 64})
            for (int sel_dim : {2, 10})
                for (SparseKind kind : {SparseKind::sparsemax, SparseKind::entmax}) {
                    NcartConfig cfg;
                    cfg.blocks = blocks;
                    cfg.trees = trees;
                    cfg.sel_dim = sel_dim;
                    cfg.hidden = hidden;
                    cfg.sparse_fn.kind = kind;
                    cfg.seed = seed;
                    NcartModel model = init(cfg, n_features, 2, seed);
                    model.task = Task::binclass;
                    CornerCheck check;
                    check.config = cfg;
                    check.report = whole_model_gradcheck(model, x, labels, budget,
                                                         1e-5, 1e-4, 1e-8, seed);
                    results.push_back(std::move(check));
                }
    return results;
}

}  // namespace ncart
