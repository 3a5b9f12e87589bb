#pragma once

#include "gpxva/common.hpp"

#include <string>
#include <vector>

namespace gpxva {

enum class KernelFamily { SquaredExponential, Matern, Linear, Sum, Product };

/// Declarative covariance-function description. Stationary families carry a
/// lengthscale (one shared entry, or p entries for per-dimension scaling) and
/// a signal variance; Linear carries a scale in `variance`; Sum/Product
/// compose children element-wise.
struct KernelSpec {
    KernelFamily family = KernelFamily::SquaredExponential;
    Vec lengthscale = Vec::Ones(1);
    double variance = 1.0;
    double nu = 1.5; // Matern smoothness, fixed at construction
    std::vector<KernelSpec> children;

    static KernelSpec se(double ell, double var = 1.0);
    static KernelSpec se_ard(const Vec& ell, double var = 1.0);
    static KernelSpec matern(double nu, double ell, double var = 1.0);
    static KernelSpec linear(double scale = 1.0);
    static KernelSpec sum(std::vector<KernelSpec> terms);
    static KernelSpec product(std::vector<KernelSpec> factors);

    void validate() const;
    bool is_composite() const {
        return family == KernelFamily::Sum || family == KernelFamily::Product;
    }
};

/// k(x, x'). Symmetric in its arguments.
double eval_kernel(const KernelSpec& spec, const Eigen::Ref<const Vec>& x,
                   const Eigen::Ref<const Vec>& xp);

/// Cross-covariance matrix; entry (i,j) = k(X.row(i), Xp.row(j)).
Mat kernel_matrix(const KernelSpec& spec, const Eigen::Ref<const Mat>& X,
                  const Eigen::Ref<const Mat>& Xp);

/// Symmetric Gram matrix on one point set.
Mat kernel_matrix(const KernelSpec& spec, const Eigen::Ref<const Mat>& X);

// --- hyperparameter vector interface -------------------------------------
//
// Free hyperparameters are enumerated depth-first: for SE/Matern the
// lengthscale entries then the signal variance, for Linear the scale, and for
// Sum/Product the children in order. All of them are positive, so optimizers
// work on log values.

int hyper_count(const KernelSpec& spec);
Vec get_log_hypers(const KernelSpec& spec);
void set_log_hypers(KernelSpec& spec, const Eigen::Ref<const Vec>& logh);
std::vector<std::string> hyper_names(const KernelSpec& spec);

struct HyperGrad {
    std::vector<Mat> dK;               ///< dK/dtheta_k (raw parameters, not log)
    bool used_finite_difference = false;
};

/// Gradient of the Gram matrix on X with respect to each free hyperparameter.
/// Families without a closed form fall back to central finite differences
/// (step 1e-6 * theta) and set `used_finite_difference`.
HyperGrad kernel_grad_hyper(const KernelSpec& spec, const Eigen::Ref<const Mat>& X);

/// Central finite-difference version of kernel_grad_hyper; the fallback used
/// when no analytic gradient exists for a family.
HyperGrad kernel_grad_hyper_fd(const KernelSpec& spec, const Eigen::Ref<const Mat>& X);

struct InputGrad {
    Mat grad;                ///< n x p, row i = dk(x*, X_i)/dx*
    bool degenerate = false; ///< set when x* coincides with a row at a kink (Matern 1/2)
};

/// Gradient of k(x*, X_i) with respect to the test point x*.
InputGrad kernel_grad_input(const KernelSpec& spec, const Eigen::Ref<const Vec>& xstar,
                            const Eigen::Ref<const Mat>& X);

} // namespace gpxva
