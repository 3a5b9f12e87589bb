#include "gpxva/paths.hpp"

#include "gpxva/gp.hpp" // detail::robust_cholesky

#include <cmath>
#include <cstdio>
#include <ostream>

namespace gpxva {

int PathSet::factor_index(const std::string& name) const {
    for (std::size_t i = 0; i < factors.size(); ++i)
        if (factors[i] == name) return static_cast<int>(i);
    throw ValidationError("PathSet: unknown factor '" + name + "'");
}

void PathSet::write_csv(std::ostream& os) const {
    os << "path,time";
    for (const auto& f : factors) os << ',' << f;
    os << '\n';
    char buf[64];
    for (int p = 0; p < n_paths(); ++p) {
        for (std::size_t t = 0; t < grid.size(); ++t) {
            std::snprintf(buf, sizeof(buf), "%d,%.12g", p, grid[t]);
            os << buf;
            for (const auto& v : values) {
                std::snprintf(buf, sizeof(buf), ",%.12g", v(p, static_cast<Eigen::Index>(t)));
                os << buf;
            }
            os << '\n';
        }
    }
}

namespace {

// One independent normal stream per factor, drawn time-major then path, so
// runs that differ only in factor count share the leading factors' draws.
class FactorStreams {
public:
    FactorStreams(std::uint64_t seed, int n_factors) {
        streams_.reserve(static_cast<std::size_t>(n_factors));
        for (int f = 0; f < n_factors; ++f)
            streams_.emplace_back(split_seed(seed, static_cast<std::uint64_t>(f)));
    }

    /// k x count draws for one time step.
    Mat step(int count) {
        Mat z(static_cast<Eigen::Index>(streams_.size()), count);
        for (std::size_t f = 0; f < streams_.size(); ++f)
            for (int p = 0; p < count; ++p) z(static_cast<Eigen::Index>(f), p) = streams_[f].next();
        return z;
    }

private:
    std::vector<NormalRng> streams_;
};

Mat correlation_root(const Mat& R) {
    require(R.rows() == R.cols(), "correlated_normals: R must be square");
    require((R - R.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
            "correlated_normals: R must be symmetric");
    Mat L;
    try {
        detail::robust_cholesky(R, L, 1e-12, 1e-8);
    } catch (const NumericError&) {
        throw NumericError("correlated_normals: correlation matrix not PSD after jitter");
    }
    return L;
}

std::vector<double> make_grid(double horizon, int steps) {
    std::vector<double> g(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) g[static_cast<std::size_t>(i)] = horizon * i / steps;
    return g;
}

} // namespace

Mat correlated_normals(const Mat& R, int count, std::uint64_t seed) {
    require(count >= 1, "correlated_normals: count must be positive");
    const Mat L = correlation_root(R);
    FactorStreams streams(seed, static_cast<int>(R.rows()));
    // one conceptual "time step" per sample column keeps the per-factor
    // sequences time-major
    Mat Z(R.rows(), count);
    for (int c = 0; c < count; ++c) Z.col(c) = streams.step(1).col(0);
    return L.triangularView<Eigen::Lower>() * Z;
}

PathSet simulate_gbm(double s0, double rate, double sigma, double horizon, int steps,
                     int n_paths, std::uint64_t seed, int substeps) {
    require(steps >= 1 && substeps >= 1, "simulate_gbm: steps must be >= 1");
    require(s0 > 0.0 && horizon > 0.0, "simulate_gbm: s0 and horizon must be positive");
    require(n_paths >= 1, "simulate_gbm: need at least one path");

    PathSet ps;
    ps.grid = make_grid(horizon, steps);
    ps.factors = {"spot"};
    ps.seed = seed;
    ps.substeps = substeps;
    ps.values.assign(1, Mat(n_paths, steps + 1));
    Mat& S = ps.values[0];
    S.col(0).setConstant(s0);

    const double dt = horizon / steps / substeps;
    const double drift = (rate - 0.5 * sigma * sigma) * dt;
    const double diff = sigma * std::sqrt(dt);
    FactorStreams streams(seed, 1);
    Vec logs = Vec::Constant(n_paths, std::log(s0));
    for (int i = 1; i <= steps; ++i) {
        for (int s = 0; s < substeps; ++s) {
            const Mat z = streams.step(n_paths);
            logs.array() += drift + diff * z.row(0).transpose().array();
        }
        S.col(i) = logs.array().exp();
    }
    return ps;
}

PathSet simulate_heston(const HestonParams& params, int steps, int n_paths, std::uint64_t seed,
                        int substeps) {
    params.validate();
    require(steps >= 1 && substeps >= 1, "simulate_heston: steps must be >= 1");

    PathSet ps;
    ps.grid = make_grid(params.maturity, steps);
    ps.factors = {"spot", "variance"};
    ps.seed = seed;
    ps.substeps = substeps;
    ps.values.assign(2, Mat(n_paths, steps + 1));
    ps.values[0].col(0).setConstant(params.s0);
    ps.values[1].col(0).setConstant(params.v0);

    Mat R(2, 2);
    R << 1.0, params.rho, params.rho, 1.0;
    const Mat L = correlation_root(R);
    FactorStreams streams(seed, 2);

    const double dt = params.maturity / steps / substeps;
    const double sqdt = std::sqrt(dt);
    Vec logs = Vec::Constant(n_paths, std::log(params.s0));
    Vec v = Vec::Constant(n_paths, params.v0);
    for (int i = 1; i <= steps; ++i) {
        for (int s = 0; s < substeps; ++s) {
            const Mat xi = L.triangularView<Eigen::Lower>() * streams.step(n_paths);
            for (int p = 0; p < n_paths; ++p) {
                const double vp = std::max(v(p), 0.0);
                logs(p) += (params.rate - 0.5 * vp) * dt + std::sqrt(vp) * sqdt * xi(0, p);
                v(p) += params.kappa * (params.theta - vp) * dt +
                        params.sigma_vol * std::sqrt(vp) * sqdt * xi(1, p);
            }
        }
        ps.values[0].col(i) = logs.array().exp();
        ps.values[1].col(i) = v;
    }
    return ps;
}

Mat RatesFxConfig::correlation() const {
    const int n = n_currencies();
    const int k = n_factors();
    Mat R = Mat::Identity(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < i; ++j) {
            const bool ri = i < n, rj = j < n;
            double c;
            if (ri && rj)
                c = corr_rate_rate;
            else if (!ri && !rj)
                c = corr_fx_fx;
            else
                c = corr_rate_fx;
            R(i, j) = R(j, i) = c;
        }
    }
    return R;
}

void RatesFxConfig::validate() const {
    require(n_currencies() >= 1, "hw_fx: need at least one currency");
    for (const auto& hw : currencies)
        require(hw.mean_reversion > 0.0 && hw.sigma >= 0.0,
                "hw_fx: mean reversion must be positive and vol nonnegative");
    require(static_cast<int>(fx0.size()) == n_currencies() - 1,
            "hw_fx: need one initial FX level per foreign currency");
    for (double f : fx0) require(f > 0.0, "hw_fx: initial FX must be positive");
    require(fx_vol >= 0.0, "hw_fx: FX vol must be nonnegative");
    if (!fx_sign.empty())
        require(fx_sign.size() == fx0.size(), "hw_fx: one sign per FX pair");
}

PathSet simulate_hw_fx(const RatesFxConfig& cfg, double horizon, int steps, int n_paths,
                       std::uint64_t seed, int substeps, bool exact_ou) {
    cfg.validate();
    require(steps >= 1 && substeps >= 1 && n_paths >= 1, "simulate_hw_fx: bad discretization");

    const int n = cfg.n_currencies();
    const int k = cfg.n_factors();
    PathSet ps;
    ps.grid = make_grid(horizon, steps);
    ps.seed = seed;
    ps.substeps = substeps;
    for (int i = 0; i < n; ++i) ps.factors.push_back("r_" + std::to_string(i));
    for (int j = 1; j < n; ++j) ps.factors.push_back("fx_" + std::to_string(j));
    for (int i = 0; i < n; ++i) ps.factors.push_back("ir_" + std::to_string(i));
    ps.values.assign(ps.factors.size(), Mat(n_paths, steps + 1));

    for (int i = 0; i < n; ++i) ps.values[static_cast<std::size_t>(i)].col(0).setConstant(cfg.currencies[static_cast<std::size_t>(i)].beta(0.0));
    for (int j = 1; j < n; ++j)
        ps.values[static_cast<std::size_t>(n + j - 1)].col(0).setConstant(cfg.fx0[static_cast<std::size_t>(j - 1)]);
    for (int i = 0; i < n; ++i) ps.values[static_cast<std::size_t>(n + n - 1 + i)].col(0).setZero();

    const Mat L = correlation_root(cfg.correlation());
    FactorStreams streams(seed, k);

    const double dt = horizon / steps / substeps;
    const double sqdt = std::sqrt(dt);
    Mat x = Mat::Zero(n_paths, n);       // OU factors
    Mat logfx(n_paths, std::max(n - 1, 0));
    for (int j = 0; j < n - 1; ++j) logfx.col(j).setConstant(std::log(cfg.fx0[static_cast<std::size_t>(j)]));
    Mat integral = Mat::Zero(n_paths, n);

    for (int i = 1; i <= steps; ++i) {
        for (int s = 0; s < substeps; ++s) {
            const double t = ((i - 1) * substeps + s) * dt;
            const Mat xi = L.triangularView<Eigen::Lower>() * streams.step(n_paths);
            // short rates at the left endpoint
            for (int c = 0; c < n; ++c) {
                const double bc = cfg.currencies[static_cast<std::size_t>(c)].beta(t);
                integral.col(c).array() += (x.col(c).array() + bc) * dt;
            }
            for (int j = 1; j < n; ++j) {
                const double alpha = cfg.fx_sign.empty() ? 1.0 : cfg.fx_sign[static_cast<std::size_t>(j - 1)];
                const double b0 = cfg.currencies[0].beta(t);
                const double bj = cfg.currencies[static_cast<std::size_t>(j)].beta(t);
                logfx.col(j - 1).array() +=
                    ((x.col(0).array() + b0) - (x.col(j).array() + bj) -
                     0.5 * cfg.fx_vol * cfg.fx_vol) *
                        dt +
                    alpha * cfg.fx_vol * sqdt * xi.row(n + j - 1).transpose().array();
            }
            for (int c = 0; c < n; ++c) {
                const auto& hw = cfg.currencies[static_cast<std::size_t>(c)];
                if (exact_ou) {
                    const double decay = std::exp(-hw.mean_reversion * dt);
                    const double sd =
                        hw.sigma * std::sqrt((1.0 - decay * decay) / (2.0 * hw.mean_reversion));
                    x.col(c) = decay * x.col(c) + sd * xi.row(c).transpose();
                } else {
                    x.col(c) += -hw.mean_reversion * x.col(c) * dt +
                                hw.sigma * sqdt * xi.row(c).transpose();
                }
            }
        }
        const double t_end = ps.grid[static_cast<std::size_t>(i)];
        for (int c = 0; c < n; ++c)
            ps.values[static_cast<std::size_t>(c)].col(i) =
                x.col(c).array() + cfg.currencies[static_cast<std::size_t>(c)].beta(t_end);
        for (int j = 1; j < n; ++j)
            ps.values[static_cast<std::size_t>(n + j - 1)].col(i) = logfx.col(j - 1).array().exp();
        for (int c = 0; c < n; ++c)
            ps.values[static_cast<std::size_t>(n + n - 1 + c)].col(i) = integral.col(c);
    }
    return ps;
}

double measure_change_mean(const PathSet& paths, int foreign_index, int time_index) {
    require(foreign_index >= 1, "measure_change_mean: foreign index must be >= 1");
    const Mat& fx = paths.factor("fx_" + std::to_string(foreign_index));
    const Mat& irj = paths.factor("ir_" + std::to_string(foreign_index));
    const Mat& ir0 = paths.factor("ir_0");
    const Eigen::Index t = time_index;
    const Vec rn = (fx.col(t).array() / fx.col(0).array()) *
                   (irj.col(t) - ir0.col(t)).array().exp();
    return rn.mean();
}

} // namespace gpxva
