#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "mmrec/error.hpp"

namespace mmrec {

/// One parameter entry under test: where it lives and what the analytic
/// gradient claims for it.
struct GradCheckEntry {
    double* value = nullptr;
    double analytic = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_entry = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Central-difference gradient check. For each listed entry, perturbs the
/// parameter in place by +/- eps, re-evaluates the loss closure, restores the
/// original value, and compares (L+ - L-) / (2 eps) against the analytic value.
///
/// Relative error uses max(|fd|, |an|, 1e-6) as denominator: the absolute
/// floor keeps entries whose true gradient is exactly zero (dead ReLU paths)
/// from reporting finite-difference rounding noise as error.
inline GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                         std::span<const GradCheckEntry> entries, double eps) {
    if (!(eps > 0.0)) throw NumericError("finite_diff_check: eps must be positive");
    GradCheckReport report;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        double* theta = entries[k].value;
        const double saved = *theta;
        *theta = saved + eps;
        const double loss_plus = loss_fn();
        *theta = saved - eps;
        const double loss_minus = loss_fn();
        *theta = saved;
        if (!std::isfinite(loss_plus) || !std::isfinite(loss_minus)) {
            throw NumericError("finite_diff_check: non-finite loss at entry " + std::to_string(k));
        }
        const double fd = (loss_plus - loss_minus) / (2.0 * eps);
        const double an = entries[k].analytic;
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        const double rel = std::abs(fd - an) / denom;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_entry = k;
            report.worst_analytic = an;
            report.worst_numeric = fd;
        }
    }
    return report;
}

}  // namespace mmrec
