#include "gpxva/credit.hpp"

#include <cmath>

namespace gpxva {

void IntensityModel::validate() const {
    require(gamma0 >= 0.0, "intensity: gamma0 must be nonnegative");
    require(std::isfinite(gamma1), "intensity: non-finite gamma1");
    require(s0 > 0.0, "intensity: reference spot must be positive");
    require(recovery >= 0.0 && recovery < 1.0, "intensity: recovery must lie in [0,1)");
}

double intensity(const IntensityModel& model, double spot) {
    if (!(spot > 0.0)) throw ValidationError("intensity: spot must be positive");
    return model.gamma0 * std::pow(model.s0 / spot, model.gamma1);
}

SurvivalWeights survival_weights(const Eigen::Ref<const Vec>& gamma_path, double dt) {
    require(dt > 0.0, "survival_weights: dt must be positive");
    if ((gamma_path.array() < 0.0).any())
        throw ValidationError("survival_weights: negative intensity");

    const Eigen::Index n = gamma_path.size();
    SurvivalWeights w;
    w.survival.resize(n);
    w.density.resize(n);
    double acc = 0.0; // sum of intensities strictly before the current date
    for (Eigen::Index i = 0; i < n; ++i) {
        w.survival(i) = std::exp(-dt * acc);
        w.density(i) = gamma_path(i) * w.survival(i);
        acc += gamma_path(i);
    }
    w.terminal_survival = std::exp(-dt * acc);
    return w;
}

namespace {

// Per-path exponent weights w_j = dt * sum_i (s0/S_i)^gamma1 over the left
// endpoints t_0..t_{N-1}; mean survival is then mean_j exp(-gamma0 w_j).
Vec path_exponents(double gamma1, const PathSet& paths, int spot_factor, double s0) {
    const Mat& S = paths.values[static_cast<std::size_t>(spot_factor)];
    const double dt = paths.dt();
    const int n_steps = paths.n_steps();
    Vec w = Vec::Zero(paths.n_paths());
    for (int p = 0; p < paths.n_paths(); ++p) {
        double acc = 0.0;
        for (int i = 0; i < n_steps; ++i) acc += std::pow(s0 / S(p, i), gamma1);
        w(p) = dt * acc;
    }
    return w;
}

} // namespace

double mean_survival(double gamma0, double gamma1, const PathSet& paths, int spot_factor,
                     double s0) {
    const Vec w = path_exponents(gamma1, paths, spot_factor, s0);
    return (-gamma0 * w.array()).exp().mean();
}

double calibrate_gamma0(double gamma1, const PathSet& paths, int spot_factor, double s0,
                        double target_survival) {
    require(target_survival > 0.0 && target_survival < 1.0,
            "calibrate_gamma0: target survival must lie in (0,1)");
    require(paths.n_steps() >= 1, "calibrate_gamma0: empty path grid");

    const Vec w = path_exponents(gamma1, paths, spot_factor, s0);
    const auto objective = [&](double g0) {
        return (-g0 * w.array()).exp().mean() - target_survival;
    };

    double lo = 0.0, hi = 10.0;
    // survival(0+) = 1 > target; need survival(hi) <= target for a bracket
    if (objective(hi) > 0.0)
        throw NumericError("calibrate_gamma0: target survival unreachable for gamma0 <= 10");
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (objective(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    const double g0 = 0.5 * (lo + hi);
    if (std::abs(objective(g0)) > 1e-3)
        throw NumericError("calibrate_gamma0: residual above tolerance");
    return g0;
}

Vec sample_gamma1_prior(double center, double scale, int count, std::uint64_t seed) {
    require(count >= 1, "sample_gamma1_prior: count must be positive");
    NormalRng rng(seed);
    Vec out(count);
    for (int i = 0; i < count; ++i) {
        const double z = center + scale * rng.next();
        out(i) = z * z;
    }
    return out;
}

} // namespace gpxva
