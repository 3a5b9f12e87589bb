#pragma once

#include "gpxva/credit.hpp"
#include "gpxva/gp.hpp"
#include "gpxva/paths.hpp"

#include <functional>
#include <map>
#include <memory>

namespace gpxva {

/// Pluggable portfolio valuation over simulated states. `col` selects the
/// stored date in the path set; `time` is the absolute valuation time on the
/// master timeline, which differs from paths.grid[col] for re-rooted inner
/// simulations. Returns the portfolio value and the GP predictive standard
/// deviation (zero for exact revaluation) for every path.
class Valuer {
public:
    virtual ~Valuer() = default;
    virtual void value_at(const PathSet& paths, int col, double time, Vec& value,
                          Vec& sd) const = 0;
    virtual std::string kind() const = 0;
};

/// Exact repricing through a user closure (the MC-reval route).
class ExactValuer : public Valuer {
public:
    using Fn = std::function<void(const PathSet&, int col, double time, Vec& value)>;
    explicit ExactValuer(Fn fn) : fn_(std::move(fn)) {}

    void value_at(const PathSet& paths, int col, double time, Vec& value,
                  Vec& sd) const override {
        fn_(paths, col, time, value);
        sd = Vec::Zero(value.size());
    }
    std::string kind() const override { return "reval"; }

private:
    Fn fn_;
};

/// One surrogate GP per (instrument, valuation date); the portfolio combines
/// instrument posteriors with fixed weights, treating instrument GPs as
/// independent. States outside a model's training box are clamped to its
/// edges before prediction.
class GpPortfolioValuer : public Valuer {
public:
    struct Instrument {
        double weight = 1.0;
        /// per-date state matrix (n_paths x p) for this instrument
        std::function<Mat(const PathSet&, int col)> features;
        std::map<long, GpModel> models; ///< keyed by lround(time / key_dt)
    };

    GpPortfolioValuer(std::vector<Instrument> instruments, double key_dt)
        : instruments_(std::move(instruments)), key_dt_(key_dt) {}

    void value_at(const PathSet& paths, int col, double time, Vec& value,
                  Vec& sd) const override;
    std::string kind() const override { return "gp"; }

    double key_dt() const { return key_dt_; }
    const std::vector<Instrument>& instruments() const { return instruments_; }

private:
    std::vector<Instrument> instruments_;
    double key_dt_;
};

/// Discount factors exp(-r t_i) for stored dates t_1..t_N, one row per date.
Mat constant_discounts(const PathSet& paths, double rate);
/// Path discounts exp(-int_0^{t_i} r ds) from a stored running-integral
/// factor (see simulate_hw_fx).
Mat integral_discounts(const PathSet& paths, int integral_factor);

struct EpeRow {
    double date = 0.0;
    double epe = 0.0;
    double band = 0.0; ///< 95% GP band: mean over paths of 1{pi>0} 1.96 sd
};

/// Discounted expected positive exposure per stored date.
std::vector<EpeRow> epe_profile(const Valuer& valuer, const PathSet& paths,
                                const Mat& discounts, double time_offset = 0.0);

struct CvaReport {
    double cva = 0.0;
    double std_error = 0.0; ///< MC standard error of the estimate
    double ci_lo = 0.0, ci_hi = 0.0; ///< 95% MC confidence interval
    double gp_band = 0.0;            ///< 95% GP uncertainty band (0 for exact)
    std::vector<EpeRow> epe;
    int n_paths = 0;
    int n_dates = 0;
    std::uint64_t seed = 0;
    std::string valuer_kind;
};

/// CVA under default independent of exposure: (1-R) sum_i mean_j(beta pi+) dp_i.
/// `pos_exposure` and `discounts` are (dates x paths); dp holds the interval
/// default probabilities.
CvaReport cva0_independent(const Mat& pos_exposure, const Mat& discounts,
                           const Eigen::Ref<const Vec>& dp, double recovery);

/// CVA under the stochastic intensity model, discretized with left-endpoint
/// survival accumulation:
///   (1-R) dt/M sum_j sum_i beta_ij (pi_ij)^+ e^{-dt sum_{l<i} gamma_lj} gamma_ij.
CvaReport cva0_intensity(const Valuer& valuer, const PathSet& paths,
                         const IntensityModel& model, int spot_factor, const Mat& discounts,
                         double time_offset = 0.0, bool with_epe = true);

/// Nested estimator of CVA(1, S_1) along each outer path: the inner
/// simulation restarts at the outer state, and survival re-roots at the
/// restart time. Inner discounting uses a constant rate.
Vec cva1_samples(const Valuer& valuer, const PathSet& outer, int spot_factor,
                 const std::function<PathSet(double s_start, std::uint64_t seed)>& inner_sim,
                 double restart_time, const IntensityModel& model, double rate,
                 std::uint64_t seed);

/// Empirical quantile with linear interpolation between order statistics
/// (h = (n-1) alpha, value = x_(floor h) + frac(h) (x_(floor h + 1) - x_(floor h))).
double empirical_quantile(Vec samples, double alpha);

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(Vec a, Vec b);

struct UqResult {
    Vec gamma1;
    Vec gamma0;
    Vec value;
    std::vector<int> failed; ///< draws whose calibration failed, excluded above
};

/// Per-prior-draw calibration + CVA computation with failure bookkeeping.
UqResult uq_cva(const Eigen::Ref<const Vec>& gamma1_draws,
                const std::function<double(double gamma1)>& calibrate,
                const std::function<double(double gamma0, double gamma1, int draw)>& compute);

} // namespace gpxva
