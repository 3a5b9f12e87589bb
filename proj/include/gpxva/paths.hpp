#pragma once

#include "gpxva/pricers.hpp"

#include <string>
#include <vector>

namespace gpxva {

/// Simulated risk-factor trajectories on a fixed time grid with seed
/// provenance. Factor values are stored as one (paths x times) matrix per
/// factor; column 0 always holds the initial conditions exactly.
struct PathSet {
    std::vector<double> grid;         ///< N+1 strictly increasing times, grid[0] = 0
    std::vector<std::string> factors; ///< factor names, parallel to `values`
    std::vector<Mat> values;          ///< per factor: n_paths x (N+1)
    std::uint64_t seed = 0;
    int substeps = 1; ///< fine Euler substeps folded into each stored step

    int n_paths() const { return values.empty() ? 0 : static_cast<int>(values[0].rows()); }
    int n_steps() const { return static_cast<int>(grid.size()) - 1; }
    double dt() const { return grid.size() > 1 ? grid[1] - grid[0] : 0.0; }
    int factor_index(const std::string& name) const;
    const Mat& factor(const std::string& name) const { return values[factor_index(name)]; }

    /// Columnar text dump: one row per (path, date), one column per factor.
    void write_csv(std::ostream& os) const;
};

/// Draws from N(0, R): rows are the k correlated components, columns the
/// samples. Cholesky of R with PSD jitter fallback; deterministic in `seed`.
Mat correlated_normals(const Mat& R, int count, std::uint64_t seed);

/// Geometric Brownian motion under the exact log-Euler increments.
PathSet simulate_gbm(double s0, double rate, double sigma, double horizon, int steps,
                     int n_paths, std::uint64_t seed, int substeps = 1);

/// Heston under full-truncation Euler (V^+ in drift and diffusion, log-Euler
/// for the spot). Factors: "spot", "variance".
PathSet simulate_heston(const HestonParams& params, int steps, int n_paths, std::uint64_t seed,
                        int substeps = 1);

/// Multi-currency Hull-White short rates plus FX, all under the domestic
/// pricing measure, with the quasi-homogeneous block correlation structure.
struct RatesFxConfig {
    std::vector<HullWhiteCurve> currencies; ///< index 0 = domestic
    std::vector<double> fx0;                ///< initial FX (domestic per foreign), size n-1
    double fx_vol = 0.1;
    std::vector<double> fx_sign;            ///< alpha per pair; defaults to +1
    double corr_rate_rate = 0.45;
    double corr_rate_fx = 0.30;
    double corr_fx_fx = 0.15;

    int n_currencies() const { return static_cast<int>(currencies.size()); }
    int n_factors() const { return 2 * n_currencies() - 1; }
    Mat correlation() const;
    void validate() const;
};

/// Factors: r_0..r_{n-1} (short rates), fx_1..fx_{n-1}, and ir_0..ir_{n-1}
/// holding the running integrals of the short rates on the fine grid
/// (left endpoints), from which path discounts and the measure-change check
/// are built.
PathSet simulate_hw_fx(const RatesFxConfig& cfg, double horizon, int steps, int n_paths,
                       std::uint64_t seed, int substeps = 10, bool exact_ou = false);

/// Sample mean of the Radon-Nikodym process FX_j(t)/FX_j(0) *
/// exp(int_0^t (r_j - r_0) ds) at a stored date; 1.0 up to MC error.
double measure_change_mean(const PathSet& paths, int foreign_index, int time_index);

} // namespace gpxva
