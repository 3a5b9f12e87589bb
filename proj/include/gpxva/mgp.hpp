#pragma once

#include "gpxva/gp.hpp"

namespace gpxva {

/// Negative log marginal likelihood of the separable multi-output model with
/// input covariance K' = K + sigma^2 I and task covariance
/// Omega = b b' + omega^2 I, evaluated on raw (unscaled) data:
///   nd/2 ln 2pi + d/2 ln|K'| + n/2 ln|Omega| + 1/2 tr(K'^{-1} Y Omega^{-1} Y').
double neg_log_marginal_multi(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y,
                              const KernelSpec& kernel, double sigma,
                              const Eigen::Ref<const Vec>& b, double omega);

struct MgpPrediction {
    Mat mean;      ///< m x d, original units
    Mat input_cov; ///< Sigma-hat, m x m (unit-free input side)
    Mat task_cov;  ///< Omega in original output units, d x d
};

struct PortfolioPosterior {
    Vec mean;
    Mat cov;      ///< m x m, (w' Omega w) * Sigma-hat in original units
    Vec variance; ///< diagonal of cov
};

/// Separable multi-output GP: shared input kernel, rank-1 + diagonal task
/// covariance. Immutable after construction.
class MgpModel {
public:
    /// Condition on data with fixed parameters. b and omega live in the
    /// scaled output space when rescale is set.
    static MgpModel condition(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y,
                              KernelSpec kernel, double sigma, Vec b, double omega,
                              bool rescale = true);

    static MgpModel condition_mapped(const Eigen::Ref<const Mat>& X,
                                     const Eigen::Ref<const Mat>& Y, KernelSpec kernel,
                                     double sigma, Vec b, double omega, AffineMap in_map,
                                     std::vector<OutputMap> out_maps);

    MgpPrediction predict_multi(const Eigen::Ref<const Mat>& Xstar) const;
    PortfolioPosterior portfolio_posterior(const Eigen::Ref<const Vec>& w,
                                           const Eigen::Ref<const Mat>& Xstar) const;

    /// Negative log marginal likelihood of the conditioned (scaled) data.
    double neg_log_marginal() const { return nll_; }

    int tasks() const { return static_cast<int>(y_raw_.cols()); }
    const KernelSpec& kernel() const { return kernel_; }
    double noise() const { return sigma_; }
    const Vec& task_factor() const { return b_; }
    double task_noise() const { return omega_; }
    /// Omega = b b' + omega^2 I in the scaled output space.
    Mat task_cov_scaled() const;
    /// Omega mapped back to original output units.
    Mat task_cov() const;
    const Mat& train_inputs() const { return x_raw_; }
    const Mat& train_targets() const { return y_raw_; }
    const AffineMap& input_map() const { return in_map_; }
    const std::vector<OutputMap>& output_maps() const { return out_maps_; }

private:
    MgpModel() = default;

    KernelSpec kernel_;
    double sigma_ = 0.0;
    Vec b_;
    double omega_ = 0.0;
    AffineMap in_map_;
    std::vector<OutputMap> out_maps_;
    Mat x_raw_, y_raw_;
    Mat x_scaled_, y_scaled_;
    Mat cholL_;
    Mat alpha_; ///< (K')^{-1} Y_scaled, n x d
    double jitter_ = 0.0;
    double nll_ = 0.0;
};

/// Joint maximum-likelihood fit of kernel hyperparameters, input noise and
/// task covariance. Kernel/noise gradients are analytic; (b, omega) use
/// central finite differences.
MgpModel fit_multi(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y,
                   KernelSpec kernel0, const OptimizerCfg& opt = {});

/// Profiled maximum-likelihood task covariance at a fixed kernel and noise:
/// Y' (K + sigma^2 I)^{-1} Y / n. Columns of Y should be centered.
Mat ml_task_cov(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y,
                const KernelSpec& kernel, double sigma);

} // namespace gpxva
