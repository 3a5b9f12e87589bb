#include "gpxva/xva.hpp"

#include <algorithm>
#include <cmath>

namespace gpxva {

void GpPortfolioValuer::value_at(const PathSet& paths, int col, double time, Vec& value,
                                 Vec& sd) const {
    const int m = paths.n_paths();
    value = Vec::Zero(m);
    Vec var = Vec::Zero(m);
    const long key = std::lround(time / key_dt_);
    for (const auto& inst : instruments_) {
        const auto it = inst.models.find(key);
        if (it == inst.models.end())
            throw ValidationError("GpPortfolioValuer: no model for valuation time " +
                                  std::to_string(time));
        const GpModel& model = it->second;
        Mat X = inst.features(paths, col);
        // clamp simulated states to the training box
        const AffineMap& im = model.input_map();
        for (Eigen::Index d = 0; d < X.cols(); ++d) {
            const double lo = im.offset(d);
            const double hi = im.offset(d) + im.scale(d);
            X.col(d) = X.col(d).cwiseMax(lo).cwiseMin(hi);
        }
        Vec mean, v;
        model.predict(X, mean, v);
        value += inst.weight * mean;
        var.array() += inst.weight * inst.weight * v.array();
    }
    sd = var.array().sqrt();
}

Mat constant_discounts(const PathSet& paths, double rate) {
    const int n = paths.n_steps();
    Mat d(n, paths.n_paths());
    for (int i = 1; i <= n; ++i)
        d.row(i - 1).setConstant(std::exp(-rate * paths.grid[static_cast<std::size_t>(i)]));
    return d;
}

Mat integral_discounts(const PathSet& paths, int integral_factor) {
    const Mat& ir = paths.values[static_cast<std::size_t>(integral_factor)];
    const int n = paths.n_steps();
    Mat d(n, paths.n_paths());
    for (int i = 1; i <= n; ++i) d.row(i - 1) = (-ir.col(i)).array().exp().transpose();
    return d;
}

std::vector<EpeRow> epe_profile(const Valuer& valuer, const PathSet& paths,
                                const Mat& discounts, double time_offset) {
    const int n = paths.n_steps();
    require(discounts.rows() == n && discounts.cols() == paths.n_paths(),
            "epe_profile: discount matrix shape mismatch");
    std::vector<EpeRow> rows;
    rows.reserve(static_cast<std::size_t>(n));
    Vec value, sd;
    for (int i = 1; i <= n; ++i) {
        valuer.value_at(paths, i, paths.grid[static_cast<std::size_t>(i)] + time_offset, value, sd);
        EpeRow row;
        row.date = paths.grid[static_cast<std::size_t>(i)] + time_offset;
        row.epe = (discounts.row(i - 1).transpose().array() * value.array().max(0.0)).mean();
        row.band = ((value.array() > 0.0).cast<double>() * 1.96 * sd.array()).mean();
        rows.push_back(row);
    }
    return rows;
}

namespace {

void finish_report(CvaReport& rep, const Vec& per_path, double scale) {
    // per_path holds the per-path sums before the (1-R) dt / M weighting;
    // `scale` = (1-R) dt
    const int m = static_cast<int>(per_path.size());
    const Vec contrib = scale * per_path;
    rep.cva = contrib.mean();
    double ss = 0.0;
    for (int j = 0; j < m; ++j) ss += (contrib(j) - rep.cva) * (contrib(j) - rep.cva);
    const double var = m > 1 ? ss / (m - 1) : 0.0;
    rep.std_error = std::sqrt(var / m);
    rep.ci_lo = rep.cva - 1.96 * rep.std_error;
    rep.ci_hi = rep.cva + 1.96 * rep.std_error;
    rep.n_paths = m;
}

} // namespace

CvaReport cva0_independent(const Mat& pos_exposure, const Mat& discounts,
                           const Eigen::Ref<const Vec>& dp, double recovery) {
    require(pos_exposure.rows() == dp.size(), "cva0_independent: one dp per exposure date");
    require(pos_exposure.rows() == discounts.rows() && pos_exposure.cols() == discounts.cols(),
            "cva0_independent: discount matrix shape mismatch");
    require((dp.array() >= 0.0).all(), "cva0_independent: negative default probability");
    require(dp.sum() <= 1.0 + 1e-12, "cva0_independent: default probabilities exceed one");

    const int n = static_cast<int>(pos_exposure.rows());
    const int m = static_cast<int>(pos_exposure.cols());
    Vec per_path = Vec::Zero(m);
    for (int i = 0; i < n; ++i)
        per_path += dp(i) * (discounts.row(i).transpose().array() *
                             pos_exposure.row(i).transpose().array().max(0.0))
                                .matrix();

    CvaReport rep;
    rep.n_dates = n;
    rep.valuer_kind = "exposure";
    finish_report(rep, per_path, 1.0 - recovery);
    return rep;
}

CvaReport cva0_intensity(const Valuer& valuer, const PathSet& paths,
                         const IntensityModel& model, int spot_factor, const Mat& discounts,
                         double time_offset, bool with_epe) {
    model.validate();
    const int n = paths.n_steps();
    const int m = paths.n_paths();
    require(discounts.rows() == n && discounts.cols() == m,
            "cva0_intensity: discount matrix shape mismatch");
    const double dt = paths.dt();
    const Mat& S = paths.values[static_cast<std::size_t>(spot_factor)];

    CvaReport rep;
    rep.n_dates = n;
    rep.seed = paths.seed;
    rep.valuer_kind = valuer.kind();

    Vec per_path = Vec::Zero(m);
    Vec band_acc = Vec::Zero(m);
    Vec log_survival = Vec::Zero(m); // -dt * sum of intensities strictly before date i
    Vec value, sd;
    for (int i = 1; i <= n; ++i) {
        const double t = paths.grid[static_cast<std::size_t>(i)] + time_offset;
        valuer.value_at(paths, i, t, value, sd);

        Vec gamma(m);
        if (model.gamma1 == 0.0) {
            gamma.setConstant(model.gamma0);
        } else {
            for (int j = 0; j < m; ++j) {
                const double s = S(j, i);
                if (!(s > 0.0))
                    throw NumericError("cva0_intensity: nonpositive spot in intensity");
                gamma(j) = model.gamma0 * std::pow(model.s0 / s, model.gamma1);
            }
        }
        const Vec surv = log_survival.array().exp();
        const Vec beta = discounts.row(i - 1).transpose();
        per_path.array() +=
            beta.array() * value.array().max(0.0) * surv.array() * gamma.array();
        band_acc.array() += beta.array() * (value.array() > 0.0).cast<double>() * 1.96 *
                            sd.array() * surv.array() * gamma.array();
        log_survival -= dt * gamma;

        if (with_epe) {
            EpeRow row;
            row.date = t;
            row.epe = (beta.array() * value.array().max(0.0)).mean();
            row.band = ((value.array() > 0.0).cast<double>() * 1.96 * sd.array()).mean();
            rep.epe.push_back(row);
        }
    }
    finish_report(rep, dt * per_path, 1.0 - model.recovery);
    rep.gp_band = (1.0 - model.recovery) * dt * band_acc.mean();
    return rep;
}

Vec cva1_samples(const Valuer& valuer, const PathSet& outer, int spot_factor,
                 const std::function<PathSet(double s_start, std::uint64_t seed)>& inner_sim,
                 double restart_time, const IntensityModel& model, double rate,
                 std::uint64_t seed) {
    const auto it = std::find_if(outer.grid.begin(), outer.grid.end(), [&](double t) {
        return std::abs(t - restart_time) < 1e-9;
    });
    require(it != outer.grid.end(), "cva1_samples: restart time not on the outer grid");
    const int col = static_cast<int>(it - outer.grid.begin());
    const Mat& S = outer.values[static_cast<std::size_t>(spot_factor)];

    Vec samples(outer.n_paths());
    for (int j = 0; j < outer.n_paths(); ++j) {
        const PathSet inner = inner_sim(S(j, col), split_seed(seed, static_cast<std::uint64_t>(j)));
        Mat disc(inner.n_steps(), inner.n_paths());
        for (int i = 1; i <= inner.n_steps(); ++i)
            disc.row(i - 1).setConstant(std::exp(-rate * inner.grid[static_cast<std::size_t>(i)]));
        const CvaReport rep = cva0_intensity(valuer, inner, model, spot_factor, disc,
                                             restart_time, /*with_epe=*/false);
        samples(j) = rep.cva;
    }
    return samples;
}

double empirical_quantile(Vec samples, double alpha) {
    require(samples.size() >= 1, "empirical_quantile: empty sample");
    require(alpha > 0.0 && alpha < 1.0, "empirical_quantile: alpha must lie in (0,1)");
    std::sort(samples.begin(), samples.end());
    const double h = (static_cast<double>(samples.size()) - 1.0) * alpha;
    const auto lo = static_cast<Eigen::Index>(std::floor(h));
    if (lo + 1 >= samples.size()) return samples(samples.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return samples(lo) + frac * (samples(lo + 1) - samples(lo));
}

double ks_statistic(Vec a, Vec b) {
    require(a.size() >= 1 && b.size() >= 1, "ks_statistic: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    Eigen::Index ia = 0, ib = 0;
    double d = 0.0;
    while (ia < a.size() && ib < b.size()) {
        const double x = std::min(a(ia), b(ib));
        while (ia < a.size() && a(ia) <= x) ++ia;
        while (ib < b.size() && b(ib) <= x) ++ib;
        d = std::max(d, std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
    }
    return d;
}

UqResult uq_cva(const Eigen::Ref<const Vec>& gamma1_draws,
                const std::function<double(double gamma1)>& calibrate,
                const std::function<double(double gamma0, double gamma1, int draw)>& compute) {
    UqResult res;
    std::vector<double> g1s, g0s, vals;
    for (int j = 0; j < gamma1_draws.size(); ++j) {
        const double g1 = gamma1_draws(j);
        double g0;
        try {
            g0 = calibrate(g1);
        } catch (const NumericError&) {
            res.failed.push_back(j);
            continue;
        }
        g1s.push_back(g1);
        g0s.push_back(g0);
        vals.push_back(compute(g0, g1, j));
    }
    res.gamma1 = Eigen::Map<const Vec>(g1s.data(), static_cast<Eigen::Index>(g1s.size()));
    res.gamma0 = Eigen::Map<const Vec>(g0s.data(), static_cast<Eigen::Index>(g0s.size()));
    res.value = Eigen::Map<const Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    return res;
}

} // namespace gpxva
