#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ddekit/errors.hpp"

namespace ddekit {

/// Central-difference Jacobian: J[i][j] = (f(x+eps e_j)[i] - f(x-eps e_j)[i]) / (2 eps).
/// Row-major, out_dim x in_dim. The gradient oracle everything else is checked
/// against, so it stays deliberately simple.
inline std::vector<double> finite_diff_jacobian(
    const std::function<std::vector<double>(std::span<const double>)>& f,
    std::span<const double> x, double eps, int* out_dim_hint = nullptr) {
    if (!(eps > 0.0)) throw config_error("finite_diff_jacobian: eps must be > 0");
    std::vector<double> xp(x.begin(), x.end());
    const std::size_t n = xp.size();
    std::vector<double> jac;
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double saved = xp[j];
        xp[j] = saved + eps;
        std::vector<double> fp = f(xp);
        xp[j] = saved - eps;
        std::vector<double> fm = f(xp);
        xp[j] = saved;
        if (j == 0) {
            m = fp.size();
            jac.assign(m * n, 0.0);
        }
        if (fp.size() != m || fm.size() != m)
            throw numeric_error("finite_diff_jacobian: inconsistent output width");
        for (std::size_t i = 0; i < m; ++i) {
            const double d = (fp[i] - fm[i]) / (2.0 * eps);
            if (!std::isfinite(d))
                throw numeric_error("finite_diff_jacobian: non-finite difference");
            jac[i * n + j] = d;
        }
    }
    if (out_dim_hint) *out_dim_hint = static_cast<int>(m);
    return jac;
}

/// Central-difference gradient of a scalar functional, one coordinate at a time.
inline std::vector<double> finite_diff_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double eps) {
    if (!(eps > 0.0)) throw config_error("finite_diff_gradient: eps must be > 0");
    std::vector<double> xp(x.begin(), x.end());
    std::vector<double> grad(xp.size());
    for (std::size_t j = 0; j < xp.size(); ++j) {
        const double saved = xp[j];
        xp[j] = saved + eps;
        const double fp = f(xp);
        xp[j] = saved - eps;
        const double fm = f(xp);
        xp[j] = saved;
        grad[j] = (fp - fm) / (2.0 * eps);
        if (!std::isfinite(grad[j]))
            throw numeric_error("finite_diff_gradient: non-finite difference");
    }
    return grad;
}

} // namespace ddekit
