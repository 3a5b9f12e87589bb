#pragma once

// Test-only oracles, independent from the library code paths they verify.

#include "gpxva/gp.hpp"
#include "gpxva/kernels.hpp"

#include <cmath>

namespace oracles {

using gpxva::KernelSpec;
using gpxva::Mat;
using gpxva::Vec;

/// Dense-inverse log evidence: -1/2 [Y' K'^{-1} Y + ln det K' + n ln 2pi]
/// computed with explicit inverse and determinant (n small).
inline double dense_log_evidence(const Mat& X, const Vec& Y, const KernelSpec& k, double sigma) {
    Mat K = gpxva::kernel_matrix(k, X);
    K.diagonal().array() += sigma * sigma;
    const Mat Kinv = K.inverse();
    const double logdet = std::log(K.determinant());
    const double n = static_cast<double>(X.rows());
    return -0.5 * (Y.dot(Kinv * Y) + logdet + n * std::log(2.0 * 3.14159265358979323846));
}

/// Central finite differences of log_evidence over (log hypers [, log sigma]).
inline Vec fd_evidence_grad(const Mat& X, const Vec& Y, const KernelSpec& k, double sigma,
                            bool include_noise, double h = 1e-6) {
    const Vec logh = gpxva::get_log_hypers(k);
    const int nk = static_cast<int>(logh.size());
    Vec g(nk + (include_noise ? 1 : 0));
    for (int i = 0; i < nk; ++i) {
        KernelSpec hi = k, lo = k;
        Vec lh = logh;
        lh(i) += h;
        gpxva::set_log_hypers(hi, lh);
        lh(i) -= 2 * h;
        gpxva::set_log_hypers(lo, lh);
        g(i) = (gpxva::log_evidence(X, Y, hi, sigma) - gpxva::log_evidence(X, Y, lo, sigma)) /
               (2 * h);
    }
    if (include_noise) {
        const double ls = std::log(sigma);
        g(nk) = (gpxva::log_evidence(X, Y, k, std::exp(ls + h)) -
                 gpxva::log_evidence(X, Y, k, std::exp(ls - h))) /
                (2 * h);
    }
    return g;
}

/// General-nu Matern through the modified Bessel function of the second kind.
inline double matern_bessel(double nu, double r, double ell) {
    if (r == 0.0) return 1.0;
    const double z = std::sqrt(2.0 * nu) * r / ell;
    return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(z, nu) * std::cyl_bessel_k(nu, z);
}

/// European option price by Simpson quadrature of the discounted payoff
/// against the lognormal terminal density.
inline double bs_quadrature(bool call, double s, double k, double r, double t, double vol,
                            int n = 20001) {
    const double mu = std::log(s) + (r - 0.5 * vol * vol) * t;
    const double sd = vol * std::sqrt(t);
    const double lo = mu - 10.0 * sd, hi = mu + 10.0 * sd;
    const double h = (hi - lo) / (n - 1);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = lo + i * h;
        const double st = std::exp(x);
        const double payoff = call ? std::max(st - k, 0.0) : std::max(k - st, 0.0);
        const double dens = std::exp(-0.5 * (x - mu) * (x - mu) / (sd * sd)) /
                            (sd * std::sqrt(2.0 * 3.14159265358979323846));
        const double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * payoff * dens;
    }
    return std::exp(-r * t) * acc * h / 3.0;
}

/// Sort-and-index quantile oracle (same convention as the library, derived
/// independently).
inline double quantile_sorted(std::vector<double> v, double alpha) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * alpha;
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

} // namespace oracles
