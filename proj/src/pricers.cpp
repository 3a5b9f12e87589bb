#include "gpxva/pricers.hpp"

#include <cmath>
#include <complex>

namespace gpxva {

namespace {
constexpr double kPi = 3.1415926535897932385;
}

BsQuote bs_price(OptionSide side, double spot, double strike, double rate, double maturity,
                 double vol) {
    require(spot > 0.0 && strike > 0.0, "bs_price: spot and strike must be positive");
    require(maturity >= 0.0, "bs_price: negative maturity");
    require(vol > 0.0 || maturity == 0.0, "bs_price: volatility must be positive");

    BsQuote q;
    if (maturity == 0.0) {
        q.price = side == OptionSide::Call ? std::max(spot - strike, 0.0)
                                           : std::max(strike - spot, 0.0);
        q.delta = side == OptionSide::Call ? (spot > strike ? 1.0 : 0.0)
                                           : (spot < strike ? -1.0 : 0.0);
        q.vega = 0.0;
        return q;
    }
    const double sq = vol * std::sqrt(maturity);
    const double d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * maturity) / sq;
    const double d2 = d1 - sq;
    const double df = std::exp(-rate * maturity);
    if (side == OptionSide::Call) {
        q.price = spot * norm_cdf(d1) - strike * df * norm_cdf(d2);
        q.delta = norm_cdf(d1);
    } else {
        q.price = strike * df * norm_cdf(-d2) - spot * norm_cdf(-d1);
        q.delta = norm_cdf(d1) - 1.0;
    }
    q.vega = spot * norm_pdf(d1) * std::sqrt(maturity);
    return q;
}

void HestonParams::validate() const {
    require(s0 > 0.0 && strike > 0.0, "heston: spot and strike must be positive");
    require(v0 >= 0.0, "heston: initial variance must be >= 0");
    require(kappa > 0.0 && theta > 0.0 && sigma_vol >= 0.0,
            "heston: kappa and theta must be positive, vol-of-vol nonnegative");
    require(std::abs(rho) <= 1.0, "heston: |rho| <= 1 required");
    require(maturity > 0.0, "heston: maturity must be positive");
}

namespace {

// Characteristic function of ln(S_T/S_0) under Heston, trap-free branch.
std::complex<double> heston_cf(double u, const HestonParams& p) {
    const std::complex<double> iu(0.0, u);
    const double s2 = p.sigma_vol * p.sigma_vol;
    const std::complex<double> beta = p.kappa - p.rho * p.sigma_vol * iu;
    const std::complex<double> d = std::sqrt(beta * beta + s2 * (iu + u * u));
    const std::complex<double> g = (beta - d) / (beta + d);
    const std::complex<double> edt = std::exp(-d * p.maturity);
    const std::complex<double> C =
        iu * (p.rate * p.maturity) +
        (p.kappa * p.theta / s2) *
            ((beta - d) * p.maturity - 2.0 * std::log((1.0 - g * edt) / (1.0 - g)));
    const std::complex<double> D = ((beta - d) / s2) * (1.0 - edt) / (1.0 - g * edt);
    return std::exp(C + D * p.v0);
}

// First two cumulants of ln(S_T/S_0).
void heston_cumulants(const HestonParams& p, double& c1, double& c2) {
    const double k = p.kappa, th = p.theta, s = p.sigma_vol, v0 = p.v0, T = p.maturity;
    const double ekt = std::exp(-k * T);
    c1 = p.rate * T + (1.0 - ekt) * (th - v0) / (2.0 * k) - 0.5 * th * T;
    c2 = 1.0 / (8.0 * k * k * k) *
         (s * T * k * ekt * (v0 - th) * (8.0 * k * p.rho - 4.0 * s) +
          k * p.rho * s * (1.0 - ekt) * (16.0 * th - 8.0 * v0) +
          2.0 * th * k * T * (-4.0 * k * p.rho * s + s * s + 4.0 * k * k) +
          s * s * ((th - 2.0 * v0) * ekt * ekt + th * (6.0 * ekt - 7.0) + 2.0 * v0) +
          8.0 * k * k * (v0 - th) * (1.0 - ekt));
}

// Cosine coefficients of e^y and 1 on [c,d] within [a,b].
double chi(double k, double a, double b, double c, double d) {
    const double u = k * kPi / (b - a);
    const double expd = std::exp(d), expc = std::exp(c);
    return (std::cos(u * (d - a)) * expd - std::cos(u * (c - a)) * expc +
            u * (std::sin(u * (d - a)) * expd - std::sin(u * (c - a)) * expc)) /
           (1.0 + u * u);
}

double psi(double k, double a, double b, double c, double d) {
    if (k == 0.0) return d - c;
    const double u = k * kPi / (b - a);
    return (std::sin(u * (d - a)) - std::sin(u * (c - a))) / u;
}

} // namespace

double heston_price_cos(const HestonParams& params, OptionSide side, const CosCfg& cfg) {
    params.validate();
    require(params.sigma_vol > 0.0, "heston_price_cos: vol-of-vol must be positive");
    require(cfg.n_terms >= 64, "heston_price_cos: need at least 64 series terms");

    const double x = std::log(params.s0 / params.strike);
    double c1, c2;
    heston_cumulants(params, c1, c2);
    // interval for y = ln(S_T/K); the fourth-cumulant correction is dropped,
    // the standard choice for Heston
    const double half = cfg.trunc_mult * std::sqrt(std::abs(c2));
    const double a = x + c1 - half;
    const double b = x + c1 + half;

    // payoff support: call on [0,b], put on [a,0]
    const double lo = side == OptionSide::Call ? std::max(0.0, a) : a;
    const double hi = side == OptionSide::Call ? b : std::min(0.0, b);
    if (hi <= lo) return 0.0;

    double sum = 0.0;
    for (int k = 0; k < cfg.n_terms; ++k) {
        const double u = k * kPi / (b - a);
        double payoff_coef;
        if (side == OptionSide::Call)
            payoff_coef = (2.0 / (b - a)) * (chi(k, a, b, lo, hi) - psi(k, a, b, lo, hi));
        else
            payoff_coef = (2.0 / (b - a)) * (-chi(k, a, b, lo, hi) + psi(k, a, b, lo, hi));
        const std::complex<double> phase(0.0, u * (x - a));
        const double f = (heston_cf(u, params) * std::exp(phase)).real();
        sum += (k == 0 ? 0.5 : 1.0) * f * payoff_coef;
    }
    return params.strike * std::exp(-params.rate * params.maturity) * sum;
}

double HullWhiteCurve::beta(double t) const {
    const double a = mean_reversion;
    const double e = 1.0 - std::exp(-a * t);
    return flat_forward + sigma * sigma / (2.0 * a * a) * e * e;
}

double HullWhiteCurve::zcb(double t, double T, double short_rate) const {
    require(T >= t, "zcb: maturity before valuation date");
    const double a = mean_reversion;
    const double B = (1.0 - std::exp(-a * (T - t))) / a;
    const double lnA = -flat_forward * (T - t) + B * flat_forward -
                       sigma * sigma / (4.0 * a) * (1.0 - std::exp(-2.0 * a * t)) * B * B;
    return std::exp(lnA - B * short_rate);
}

double HullWhiteCurve::simple_rate(double t, double T, double short_rate) const {
    require(T > t, "simple_rate: T must exceed t");
    return (1.0 / zcb(t, T, short_rate) - 1.0) / (T - t);
}

void SwapSpec::validate() const {
    require(reset_period > 0.0, "swap: reset period must be positive");
    require(n_periods >= 1, "swap: need at least one period");
    require(std::isfinite(fixed_rate), "swap: non-finite fixed rate");
}

double irs_price(const SwapSpec& swap, const HullWhiteCurve& hw, double t, double short_rate,
                 double rate_prev_reset) {
    swap.validate();
    const double t0 = swap.start;
    const double dt = swap.reset_period;
    const int N = swap.n_periods;
    const double tN = swap.maturity();
    require(t >= t0 - 1e-12 && t <= tN + 1e-12, "irs_price: date outside the swap schedule");

    const double rel = (t - t0) / dt;
    const int n = static_cast<int>(std::floor(rel + 1e-9));
    const bool on_reset = std::abs(rel - n) < 1e-9;

    if (on_reset && n == 0) {
        // inception: 1 - P(t0,tN) - delta S sum_i P(t0,ti)
        double fixed = 0.0;
        for (int i = 1; i <= N; ++i) fixed += hw.zcb(t0, t0 + i * dt, short_rate);
        return 1.0 - hw.zcb(t0, tN, short_rate) - dt * swap.fixed_rate * fixed;
    }
    if (on_reset) {
        // reset date t_n, 1 <= n <= N: the coupon fixed at t_{n-1} pays now
        const double tn = t0 + n * dt;
        const double coupon = hw.simple_rate(tn - dt, tn, rate_prev_reset);
        double fixed = 0.0;
        for (int i = 0; i <= N - n; ++i) fixed += hw.zcb(tn, tn + i * dt, short_rate);
        return 1.0 + dt * coupon - hw.zcb(tn, tN, short_rate) - dt * swap.fixed_rate * fixed;
    }
    // interim date t in (t_n, t_{n+1})
    const double tn = t0 + n * dt;
    const double lfix = hw.simple_rate(tn, tn + dt, rate_prev_reset);
    double fixed = 0.0;
    for (int i = 1; i <= N - n; ++i) fixed += hw.zcb(t, tn + i * dt, short_rate);
    return (1.0 + dt * lfix) * hw.zcb(t, tn + dt, short_rate) - hw.zcb(t, tN, short_rate) -
           dt * swap.fixed_rate * fixed;
}

double irs_par_rate(const SwapSpec& swap, const HullWhiteCurve& hw, double r0) {
    swap.validate();
    double annuity = 0.0;
    for (int i = 1; i <= swap.n_periods; ++i)
        annuity += hw.zcb(swap.start, swap.start + i * swap.reset_period, r0);
    return (1.0 - hw.zcb(swap.start, swap.maturity(), r0)) / (swap.reset_period * annuity);
}

} // namespace gpxva
