#pragma once

#include <random>
#include <vector>

#include "ncart/data.hpp"
#include "ncart/matrix.hpp"

namespace test_helpers {

inline std::mt19937_64 make_rng(unsigned long long seed) { return std::mt19937_64(seed); }

inline ncart::Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                   double lo = -3.0, double hi = 3.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    ncart::Matrix m(rows, cols);
    for (double& v : m.data) v = dist(rng);
    return m;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -3.0,
                                         double hi = 3.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

// Linearly separable two-class data: label = 1 iff x0 + x1 > margin, with a
// dead zone around the boundary so the classes never touch.
inline ncart::Dataset separable_classification(std::mt19937_64& rng, std::size_t samples,
                                               std::size_t features = 4) {
    ncart::Dataset ds;
    ds.task = ncart::Task::binclass;
    ds.n_classes = 2;
    ds.class_labels = {"neg", "pos"};
    ds.target_name = "y";
    for (std::size_t f = 0; f < features; ++f) {
        ds.feature_names.push_back("f" + std::to_string(f));
        ds.is_categorical.push_back(false);
        ds.categories.emplace_back();
    }
    ds.X = random_matrix(rng, samples, features, -1.0, 1.0);
    ds.y_class.resize(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        double score = ds.X(i, 0) + ds.X(i, 1);
        if (std::fabs(score) < 0.2) {  // push out of the dead zone
            ds.X(i, 0) += score >= 0 ? 0.3 : -0.3;
            ds.X(i, 1) += score >= 0 ? 0.3 : -0.3;
            score = ds.X(i, 0) + ds.X(i, 1);
        }
        ds.y_class[i] = score > 0.0 ? 1 : 0;
    }
    return ds;
}

inline ncart::Dataset synthetic_regression(std::mt19937_64& rng, std::size_t samples,
                                           std::size_t features = 3) {
    ncart::Dataset ds;
    ds.task = ncart::Task::regression;
    ds.target_name = "y";
    for (std::size_t f = 0; f < features; ++f) {
        ds.feature_names.push_back("f" + std::to_string(f));
        ds.is_categorical.push_back(false);
        ds.categories.emplace_back();
    }
    ds.X = random_matrix(rng, samples, features, -1.0, 1.0);
    ds.y_reg.resize(samples);
    for (std::size_t i = 0; i < samples; ++i)
        ds.y_reg[i] = 0.7 * ds.X(i, 0) - 0.4 * ds.X(i, 1);
    return ds;
}

}  // namespace test_helpers
