#pragma once

#include "gpxva/common.hpp"

namespace gpxva {

enum class OptionSide { Call, Put };

struct BsQuote {
    double price = 0.0;
    double delta = 0.0;
    double vega = 0.0;
};

/// Black-Scholes closed form with first-order Greeks. T = 0 returns the
/// intrinsic value with zero vega.
BsQuote bs_price(OptionSide side, double spot, double strike, double rate, double maturity,
                 double vol);

/// Heston model parameters and European contract terms.
struct HestonParams {
    double s0 = 100.0;
    double v0 = 0.1;
    double kappa = 0.1;
    double theta = 0.15;
    double sigma_vol = 0.1;
    double rate = 0.01;
    double rho = -0.9;
    double strike = 100.0;
    double maturity = 2.0;

    void validate() const;
    /// 2 kappa theta < sigma_vol^2; the variance process can hit zero.
    bool feller_violated() const { return 2.0 * kappa * theta < sigma_vol * sigma_vol; }
};

struct CosCfg {
    int n_terms = 256;
    double trunc_mult = 12.0; ///< L multiplier on the cumulant-based interval
};

/// European Heston price by Fourier-cosine expansion of the log-return
/// density. The truncation interval comes from the first two cumulants.
double heston_price_cos(const HestonParams& params, OptionSide side, const CosCfg& cfg = {});

/// One-factor Hull-White short-rate model on a flat initial forward curve.
/// r(t) = x(t) + beta(t) with dx = -a x dt + sigma dW.
struct HullWhiteCurve {
    double mean_reversion = 0.1;
    double sigma = 0.01;
    double flat_forward = 0.02;

    /// Deterministic shift beta(t) = f(0,t) + sigma^2/(2a^2) (1-e^{-at})^2.
    double beta(double t) const;
    /// Zero-coupon bond P(t,T) given the short rate at t.
    double zcb(double t, double T, double short_rate) const;
    /// Simple (linear) rate L(t,T) = (1/P(t,T) - 1)/(T-t).
    double simple_rate(double t, double T, double short_rate) const;
};

/// Fixed-for-floating IRS paying every `reset_period`, spot starting at
/// `start`. Value conventions: receive floating, pay fixed, unit notional.
struct SwapSpec {
    double fixed_rate = 0.02;
    double reset_period = 0.5;
    double start = 0.0;
    int n_periods = 10;

    double maturity() const { return start + reset_period * n_periods; }
    void validate() const;
};

/// Mark-to-market of the swap at time t in [start, maturity], in units of
/// notional. Depends on the short rate at t and, except at inception, on the
/// short rate observed at the latest reset date strictly before t
/// (`rate_prev_reset`).
double irs_price(const SwapSpec& swap, const HullWhiteCurve& hw, double t, double short_rate,
                 double rate_prev_reset);

/// Fixed rate that zeroes the swap value at inception for short rate r0.
double irs_par_rate(const SwapSpec& swap, const HullWhiteCurve& hw, double r0);

} // namespace gpxva
