#pragma once

#include "gpxva/paths.hpp"

namespace gpxva {

/// Dynamic pre-default intensity gamma(S) = gamma0 (S0/S)^gamma1 with a flat
/// recovery rate.
struct IntensityModel {
    double gamma0 = 0.02;
    double gamma1 = 1.2;
    double s0 = 100.0;
    double recovery = 0.4;

    void validate() const;
};

/// Hazard rate at spot S; S must be positive.
double intensity(const IntensityModel& model, double spot);

/// Survival and default-density weights on a uniform date grid, using the
/// left-endpoint accumulation of the discretized CVA estimator: the survival
/// factor at date i sums intensities strictly before i.
struct SurvivalWeights {
    Vec survival;              ///< e^{-dt sum_{l<i} gamma_l}, survival(0) = 1
    Vec density;               ///< gamma_i * survival_i
    double terminal_survival;  ///< survival just past the last date
};
SurvivalWeights survival_weights(const Eigen::Ref<const Vec>& gamma_path, double dt);

/// Root-find gamma0 so the Monte-Carlo estimate of E[e^{-int_0^T gamma(S)dt}]
/// on the given paths matches the target survival probability. Bracketed
/// bisection on (0, 10]; the map gamma0 -> mean survival is strictly
/// decreasing.
double calibrate_gamma0(double gamma1, const PathSet& paths, int spot_factor, double s0,
                        double target_survival);

/// Mean survival at given parameters on the paths (the calibration objective).
double mean_survival(double gamma0, double gamma1, const PathSet& paths, int spot_factor,
                     double s0);

/// Draws (center + scale Z)^2 for standard normal Z; the non-central
/// chi-squared construction used for the gamma1 prior.
Vec sample_gamma1_prior(double center, double scale, int count, std::uint64_t seed);

} // namespace gpxva
