#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncart {

struct GradCheckReport {
    double max_rel_err = 0.0;  // |a-n| / max(|a|, |n|, 1e-8), worst coordinate
    double max_abs_err = 0.0;
    bool ok = true;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t n_params = 0;
};

// Central finite differences against a supplied analytic gradient. fn must be
// a pure scalar function of the flat parameter vector.
//
// The report carries the max relative error with an absolute floor of 1e-8 in
// the denominator. The pass verdict uses |a-n| <= max(rtol*max(|a|,|n|), atol):
// differencing carries roundoff of order eps*|f|/(2h) ~ 1e-10, so coordinates
// whose true gradient sits below that noise can never meet a purely relative
// bound; atol covers them at ~20x the roundoff.
inline GradCheckReport gradcheck(const std::function<double(const std::vector<double>&)>& fn,
                                 const std::vector<double>& params,
                                 const std::vector<double>& analytic_grad, double h = 1e-5,
                                 double rtol = 1e-4, double atol = 1e-8) {
    if (params.size() != analytic_grad.size())
        throw std::invalid_argument("gradcheck: gradient length " +
                                    std::to_string(analytic_grad.size()) + " vs " +
                                    std::to_string(params.size()) + " parameters");
    GradCheckReport report;
    report.n_params = params.size();
    double worst_violation = 0.0;
    std::vector<double> p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double saved = p[i];
        p[i] = saved + h;
        const double fp = fn(p);
        p[i] = saved - h;
        const double fm = fn(p);
        p[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("gradcheck: non-finite function value at parameter " +
                                     std::to_string(i));
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = analytic_grad[i];
        const double abs_err = std::fabs(analytic - numeric);
        const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
        const double rel = abs_err / std::max(scale, 1e-8);

        report.max_rel_err = std::max(report.max_rel_err, rel);
        report.max_abs_err = std::max(report.max_abs_err, abs_err);
        const double violation = abs_err / std::max(rtol * scale, atol);
        if (violation > worst_violation) {
            worst_violation = violation;
            report.worst_index = i;
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    report.ok = worst_violation <= 1.0;
    return report;
}

}  // namespace ncart
