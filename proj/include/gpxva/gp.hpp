#pragma once

#include "gpxva/kernels.hpp"

#include <optional>

namespace gpxva {

/// Settings for evidence maximization by Adam in log-parameter space.
struct OptimizerCfg {
    int iterations = 300;
    double learning_rate = 0.1;
    int restarts = 5;
    double restart_spread = 0.5; ///< stddev of the log-space restart jitter
    std::uint64_t seed = 0;
    bool learn_noise = true;
    bool decay = false; ///< anneal the step size linearly to zero
};

/// Per-dimension affine map x_scaled = (x - offset) / scale.
struct AffineMap {
    Vec offset;
    Vec scale;

    Mat forward(const Eigen::Ref<const Mat>& X) const;
    static AffineMap identity(int dim);
    static AffineMap unit_box(const Eigen::Ref<const Mat>& X);
};

/// Scalar output map y_scaled = (y - offset) / scale.
struct OutputMap {
    double offset = 0.0;
    double scale = 1.0;

    static OutputMap centered(const Eigen::Ref<const Vec>& Y);
};

/// Log marginal likelihood of the targets under the GP prior,
/// -1/2 [ Y'(K+s^2 I)^{-1} Y + log det(K+s^2 I) + n log 2pi ],
/// evaluated through a Cholesky factorization. No rescaling is applied here.
double log_evidence(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Vec>& Y,
                    const KernelSpec& kernel, double sigma);

struct EvidenceGrad {
    double value = 0.0;
    Vec grad; ///< over (log kernel hyperparameters [, log sigma])
    bool used_finite_difference = false;
};

/// Value and analytic gradient of the evidence with respect to the log
/// hyperparameters (and log noise when include_noise is set).
EvidenceGrad evidence_grad(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Vec>& Y,
                           const KernelSpec& kernel, double sigma, bool include_noise = true);

/// Fitted single-output GP. Immutable once constructed; prediction is
/// reentrant. Holds the training inputs, the Cholesky factor of the noisy
/// Gram matrix, the weight vector alpha and the affine rescaling records.
class GpModel {
public:
    /// Condition on data with fixed hyperparameters (no optimization).
    /// When rescale is set, inputs map to the unit box and targets are
    /// centered and range-scaled internally; kernel hyperparameters are then
    /// interpreted in scaled units.
    static GpModel condition(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Vec>& Y,
                             KernelSpec kernel, double sigma, bool rescale = true);

    /// As above with explicit maps (used by deserialization and fit).
    static GpModel condition_mapped(const Eigen::Ref<const Mat>& X,
                                    const Eigen::Ref<const Vec>& Y, KernelSpec kernel,
                                    double sigma, AffineMap in_map, OutputMap out_map);

    void predict(const Eigen::Ref<const Mat>& Xstar, Vec& mean, Vec& variance) const;
    Vec predict_mean(const Eigen::Ref<const Mat>& Xstar) const;

    /// d mean / d x* per test row, in original input/output units.
    Mat predict_gradient(const Eigen::Ref<const Mat>& Xstar) const;
    /// True if any kernel_grad_input call during the last predict_gradient hit
    /// a degenerate point (Matern 1/2 at a training input).
    bool last_gradient_degenerate() const { return last_grad_degenerate_; }

    /// Posterior after absorbing one extra observation at unchanged
    /// hyperparameters, via rank-1 extension of the Cholesky factor.
    GpModel online_update(const Eigen::Ref<const Vec>& x, double y) const;

    /// Evidence of the conditioned model (scaled data).
    double evidence() const { return evidence_; }

    const KernelSpec& kernel() const { return kernel_; }
    double noise() const { return sigma_; }
    double jitter() const { return jitter_; }
    const Mat& train_inputs() const { return x_raw_; }
    const Vec& train_targets() const { return y_raw_; }
    const AffineMap& input_map() const { return in_map_; }
    const OutputMap& output_map() const { return out_map_; }
    const Vec& alpha() const { return alpha_; }
    const Mat& chol_factor() const { return cholL_; }
    Eigen::Index size() const { return x_scaled_.rows(); }

private:
    GpModel() = default;

    KernelSpec kernel_;
    double sigma_ = 0.0;
    double jitter_ = 0.0;
    AffineMap in_map_;
    OutputMap out_map_;
    Mat x_raw_;
    Vec y_raw_;
    Mat x_scaled_;
    Vec y_scaled_;
    Mat cholL_;
    Vec alpha_;
    double evidence_ = 0.0;
    mutable bool last_grad_degenerate_ = false;
};

/// Evidence maximization: unit-box rescaling, Adam in log space with
/// restarts, best iterate kept. kernel0 and sigma0 are interpreted in the
/// scaled units and seed the first restart.
GpModel fit(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Vec>& Y, KernelSpec kernel0,
            double sigma0, const OptimizerCfg& opt = {});

namespace detail {

/// Cholesky of A + jitter*I with jitter escalation (x10 from jitter0 up to
/// max_jitter, both relative to the mean diagonal). Throws NumericError when
/// the factorization keeps failing. Returns the absolute jitter used.
double robust_cholesky(const Mat& A, Mat& L, double jitter0 = 1e-10, double max_jitter = 1e-6);

/// Generic Adam minimizer used by gp and mgp fitting.
struct AdamResult {
    Vec best_params;
    double best_value = 0.0;
    bool any_success = false;
};
AdamResult adam_minimize(const Vec& init, const std::function<double(const Vec&, Vec&)>& value_grad,
                         const OptimizerCfg& opt);

} // namespace detail

} // namespace gpxva
