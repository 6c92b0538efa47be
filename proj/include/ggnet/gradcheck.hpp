#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>

#include "ggnet/errors.hpp"
#include "ggnet/tensor.hpp"

namespace ggnet {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    Eigen::Index worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    Eigen::Index checked = 0;
    Eigen::Index refined = 0;  // entries that needed a smaller step
    bool passed = true;

    [[nodiscard]] std::string summary() const {
        std::ostringstream os;
        os << (passed ? "PASS" : "FAIL") << " max_rel=" << max_rel_error << " max_abs=" << max_abs_error
           << " checked=" << checked;
        if (refined > 0) os << " refined=" << refined;
        if (worst_index >= 0) {
            os << " worst[" << worst_index << "] analytic=" << worst_analytic << " numeric=" << worst_numeric;
        }
        return os.str();
    }
};

struct GradCheckOptions {
    double epsilon = 1e-3;
    double rel_tol = 1e-3;
    /// Denominator floor: entries whose gradients are both below this are
    /// compared on an absolute scale of rel_tol * floor.
    double denom_floor = 1e-3;
    /// Entries that fail are re-measured with the step divided by 10, up to
    /// this many times, before counting as failures. Steps that straddle a
    /// kink (ReLU at zero, a bilinear cell edge) resolve this way.
    int refinements = 0;
};

/// Central differences of the scalar function `f` around `x`, compared
/// elementwise against `analytic`.
inline GradCheckReport finite_diff_check(const std::function<double(const VectorX<double>&)>& f,
                                         const VectorX<double>& x, const VectorX<double>& analytic,
                                         const GradCheckOptions& opt = {}) {
    if (analytic.size() != x.size()) {
        throw DimensionError("finite_diff_check: gradient length " + std::to_string(analytic.size()) +
                             " != input length " + std::to_string(x.size()));
    }
    GradCheckReport r;
    VectorX<double> probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(analytic[i])) {
            throw NumericError("finite_diff_check: non-finite input or analytic gradient at index " +
                               std::to_string(i));
        }
        auto central = [&](double eps) {
            probe[i] = x[i] + eps;
            const double fp = f(probe);
            probe[i] = x[i] - eps;
            const double fm = f(probe);
            probe[i] = x[i];
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("finite_diff_check: non-finite function value when perturbing index " +
                                   std::to_string(i));
            }
            return (fp - fm) / (2.0 * eps);
        };
        auto relative = [&](double numeric) {
            return std::abs(numeric - analytic[i]) /
                   std::max({std::abs(numeric), std::abs(analytic[i]), opt.denom_floor});
        };
        double eps = opt.epsilon;
        double numeric = central(eps);
        for (int k = 0; k < opt.refinements && relative(numeric) > opt.rel_tol; ++k) {
            eps /= 10.0;
            numeric = central(eps);
            if (k == 0) ++r.refined;
        }
        const double abs_err = std::abs(numeric - analytic[i]);
        const double rel = relative(numeric);
        r.max_abs_error = std::max(r.max_abs_error, abs_err);
        if (rel > r.max_rel_error || r.worst_index < 0) {
            r.max_rel_error = std::max(rel, r.max_rel_error);
            r.worst_index = i;
            r.worst_analytic = analytic[i];
            r.worst_numeric = numeric;
        }
        ++r.checked;
    }
    r.passed = r.max_rel_error <= opt.rel_tol;
    return r;
}

/// Convenience overload for a tensor-valued input.
inline GradCheckReport finite_diff_check(const std::function<double(const Tensor<double>&)>& f,
                                         const Tensor<double>& x, const Tensor<double>& analytic,
                                         const GradCheckOptions& opt = {}) {
    require_same_shape(x, analytic, "finite_diff_check");
    const Shape shape = x.shape();
    return finite_diff_check([&](const VectorX<double>& v) { return f(Tensor<double>::from_data(shape, v)); },
                             x.data(), analytic.data(), opt);
}

} // namespace ggnet
