#include "gpxva/kernels.hpp"

#include <cmath>

namespace gpxva {

namespace {

constexpr double kSqrt3 = 1.7320508075688772935;
constexpr double kSqrt5 = 2.2360679774997896964;

// Scaled distance r = sqrt(sum_d ((x_d - x'_d)/ell_d)^2).
double scaled_distance(const KernelSpec& s, const Eigen::Ref<const Vec>& x,
                       const Eigen::Ref<const Vec>& xp) {
    const bool ard = s.lengthscale.size() > 1;
    double r2 = 0.0;
    for (int d = 0; d < x.size(); ++d) {
        const double ell = ard ? s.lengthscale(d) : s.lengthscale(0);
        const double u = (x(d) - xp(d)) / ell;
        r2 += u * u;
    }
    return std::sqrt(r2);
}

// Value and radial derivative dk/dr of the stationary families at scaled
// distance r, including the signal variance.
struct Radial {
    double k;
    double dk_dr;
};

Radial radial_eval(const KernelSpec& s, double r) {
    const double v = s.variance;
    if (s.family == KernelFamily::SquaredExponential) {
        const double e = v * std::exp(-0.5 * r * r);
        return {e, -r * e};
    }
    // Matern closed forms
    if (s.nu == 0.5) {
        const double e = v * std::exp(-r);
        return {e, -e};
    }
    if (s.nu == 1.5) {
        const double e = std::exp(-kSqrt3 * r);
        return {v * (1.0 + kSqrt3 * r) * e, -3.0 * v * r * e};
    }
    // nu == 2.5
    const double e = std::exp(-kSqrt5 * r);
    return {v * (1.0 + kSqrt5 * r + (5.0 / 3.0) * r * r) * e,
            -v * (5.0 / 3.0) * r * (1.0 + kSqrt5 * r) * e};
}

void check_pair(const KernelSpec& s, const Eigen::Ref<const Vec>& x,
                const Eigen::Ref<const Vec>& xp) {
    require(x.size() == xp.size(), "eval_kernel: input dimensions differ");
    if (!x.allFinite() || !xp.allFinite())
        throw ValidationError("eval_kernel: non-finite input point");
    if (!s.is_composite() && s.family != KernelFamily::Linear && s.lengthscale.size() > 1)
        require(s.lengthscale.size() == x.size(),
                "eval_kernel: per-dimension lengthscale does not match input dimension");
}

} // namespace

KernelSpec KernelSpec::se(double ell, double var) {
    KernelSpec s;
    s.family = KernelFamily::SquaredExponential;
    s.lengthscale = Vec::Constant(1, ell);
    s.variance = var;
    s.validate();
    return s;
}

KernelSpec KernelSpec::se_ard(const Vec& ell, double var) {
    KernelSpec s;
    s.family = KernelFamily::SquaredExponential;
    s.lengthscale = ell;
    s.variance = var;
    s.validate();
    return s;
}

KernelSpec KernelSpec::matern(double nu, double ell, double var) {
    KernelSpec s;
    s.family = KernelFamily::Matern;
    s.nu = nu;
    s.lengthscale = Vec::Constant(1, ell);
    s.variance = var;
    s.validate();
    return s;
}

KernelSpec KernelSpec::linear(double scale) {
    KernelSpec s;
    s.family = KernelFamily::Linear;
    s.lengthscale.resize(0);
    s.variance = scale;
    s.validate();
    return s;
}

KernelSpec KernelSpec::sum(std::vector<KernelSpec> terms) {
    KernelSpec s;
    s.family = KernelFamily::Sum;
    s.lengthscale.resize(0);
    s.children = std::move(terms);
    s.validate();
    return s;
}

KernelSpec KernelSpec::product(std::vector<KernelSpec> factors) {
    KernelSpec s;
    s.family = KernelFamily::Product;
    s.lengthscale.resize(0);
    s.children = std::move(factors);
    s.validate();
    return s;
}

void KernelSpec::validate() const {
    switch (family) {
    case KernelFamily::SquaredExponential:
    case KernelFamily::Matern:
        require(lengthscale.size() >= 1, "kernel: missing lengthscale");
        require((lengthscale.array() > 0.0).all() && lengthscale.allFinite(),
                "kernel: lengthscale must be positive");
        require(variance > 0.0 && std::isfinite(variance),
                "kernel: signal variance must be positive");
        if (family == KernelFamily::Matern)
            require(nu == 0.5 || nu == 1.5 || nu == 2.5,
                    "kernel: Matern smoothness limited to {1/2, 3/2, 5/2}");
        break;
    case KernelFamily::Linear:
        require(variance > 0.0 && std::isfinite(variance),
                "kernel: linear scale must be positive");
        break;
    case KernelFamily::Sum:
    case KernelFamily::Product:
        require(!children.empty(), "kernel: composite without children");
        for (const auto& c : children) c.validate();
        break;
    }
}

double eval_kernel(const KernelSpec& spec, const Eigen::Ref<const Vec>& x,
                   const Eigen::Ref<const Vec>& xp) {
    check_pair(spec, x, xp);
    switch (spec.family) {
    case KernelFamily::SquaredExponential:
    case KernelFamily::Matern:
        return radial_eval(spec, scaled_distance(spec, x, xp)).k;
    case KernelFamily::Linear:
        return spec.variance * x.dot(xp);
    case KernelFamily::Sum: {
        double acc = 0.0;
        for (const auto& c : spec.children) acc += eval_kernel(c, x, xp);
        return acc;
    }
    case KernelFamily::Product: {
        double acc = 1.0;
        for (const auto& c : spec.children) acc *= eval_kernel(c, x, xp);
        return acc;
    }
    }
    return 0.0;
}

Mat kernel_matrix(const KernelSpec& spec, const Eigen::Ref<const Mat>& X,
                  const Eigen::Ref<const Mat>& Xp) {
    require(X.cols() == Xp.cols(), "kernel_matrix: column counts differ");
    Mat K(X.rows(), Xp.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < Xp.rows(); ++j)
            K(i, j) = eval_kernel(spec, X.row(i).transpose(), Xp.row(j).transpose());
    return K;
}

Mat kernel_matrix(const KernelSpec& spec, const Eigen::Ref<const Mat>& X) {
    Mat K(X.rows(), X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double k = eval_kernel(spec, X.row(i).transpose(), X.row(j).transpose());
            K(i, j) = k;
            K(j, i) = k;
        }
    }
    return K;
}

int hyper_count(const KernelSpec& spec) {
    switch (spec.family) {
    case KernelFamily::SquaredExponential:
    case KernelFamily::Matern:
        return static_cast<int>(spec.lengthscale.size()) + 1;
    case KernelFamily::Linear:
        return 1;
    default: {
        int n = 0;
        for (const auto& c : spec.children) n += hyper_count(c);
        return n;
    }
    }
}

namespace {

void collect_log_hypers(const KernelSpec& s, Vec& out, int& at) {
    switch (s.family) {
    case KernelFamily::SquaredExponential:
    case KernelFamily::Matern:
        for (int d = 0; d < s.lengthscale.size(); ++d) out(at++) = std::log(s.lengthscale(d));
        out(at++) = std::log(s.variance);
        break;
    case KernelFamily::Linear:
        out(at++) = std::log(s.variance);
        break;
    default:
        for (const auto& c : s.children) collect_log_hypers(c, out, at);
    }
}

void assign_log_hypers(KernelSpec& s, const Eigen::Ref<const Vec>& logh, int& at) {
    switch (s.family) {
    case KernelFamily::SquaredExponential:
    case KernelFamily::Matern:
        for (int d = 0; d < s.lengthscale.size(); ++d) s.lengthscale(d) = std::exp(logh(at++));
        s.variance = std::exp(logh(at++));
        break;
    case KernelFamily::Linear:
        s.variance = std::exp(logh(at++));
        break;
    default:
        for (auto& c : s.children) assign_log_hypers(c, logh, at);
    }
}

void collect_names(const KernelSpec& s, const std::string& prefix,
                   std::vector<std::string>& out) {
    switch (s.family) {
    case KernelFamily::SquaredExponential:
    case KernelFamily::Matern:
        if (s.lengthscale.size() == 1) {
            out.push_back(prefix + "lengthscale");
        } else {
            for (int d = 0; d < s.lengthscale.size(); ++d)
                out.push_back(prefix + "lengthscale[" + std::to_string(d) + "]");
        }
        out.push_back(prefix + "variance");
        break;
    case KernelFamily::Linear:
        out.push_back(prefix + "scale");
        break;
    default:
        for (std::size_t i = 0; i < s.children.size(); ++i)
            collect_names(s.children[i], prefix + "k" + std::to_string(i) + ".", out);
    }
}

void grad_hyper_into(const KernelSpec& s, const Eigen::Ref<const Mat>& X,
                     std::vector<Mat>& out, const Mat* envelope) {
    // `envelope` multiplies this node's gradients (product rule for Product
    // parents); null means all-ones.
    const auto apply = [&](Mat g) {
        if (envelope) g = g.cwiseProduct(*envelope);
        out.push_back(std::move(g));
    };

    const Eigen::Index n = X.rows();
    switch (s.family) {
    case KernelFamily::SquaredExponential:
    case KernelFamily::Matern: {
        const bool ard = s.lengthscale.size() > 1;
        const int nl = static_cast<int>(s.lengthscale.size());
        std::vector<Mat> dl(nl, Mat::Zero(n, n));
        Mat dv(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) {
                const double r = scaled_distance(s, X.row(i).transpose(), X.row(j).transpose());
                const Radial re = radial_eval(s, r);
                dv(i, j) = dv(j, i) = re.k / s.variance;
                for (int d = 0; d < nl; ++d) {
                    const double ell = s.lengthscale(d);
                    double diff2;
                    if (ard) {
                        const double u = X(i, d) - X(j, d);
                        diff2 = u * u;
                    } else {
                        diff2 = (X.row(i) - X.row(j)).squaredNorm();
                    }
                    // dk/dell = dk/dr * dr/dell, dr/dell = -diff2/(ell^3 r)
                    double g = 0.0;
                    if (r > 0.0) g = -re.dk_dr * diff2 / (ell * ell * ell * r);
                    dl[d](i, j) = dl[d](j, i) = g;
                }
            }
        }
        for (auto& m : dl) apply(std::move(m));
        apply(std::move(dv));
        break;
    }
    case KernelFamily::Linear:
        apply(X * X.transpose());
        break;
    case KernelFamily::Sum:
        for (const auto& c : s.children) grad_hyper_into(c, X, out, envelope);
        break;
    case KernelFamily::Product: {
        std::vector<Mat> vals;
        vals.reserve(s.children.size());
        for (const auto& c : s.children) vals.push_back(kernel_matrix(c, X));
        for (std::size_t i = 0; i < s.children.size(); ++i) {
            Mat env = envelope ? *envelope : Mat::Ones(n, n);
            for (std::size_t j = 0; j < s.children.size(); ++j)
                if (j != i) env = env.cwiseProduct(vals[j]);
            grad_hyper_into(s.children[i], X, out, &env);
        }
        break;
    }
    }
}

} // namespace

Vec get_log_hypers(const KernelSpec& spec) {
    Vec out(hyper_count(spec));
    int at = 0;
    collect_log_hypers(spec, out, at);
    return out;
}

void set_log_hypers(KernelSpec& spec, const Eigen::Ref<const Vec>& logh) {
    require(logh.size() == hyper_count(spec), "set_log_hypers: wrong parameter count");
    require(logh.allFinite(), "set_log_hypers: non-finite parameters");
    int at = 0;
    assign_log_hypers(spec, logh, at);
}

std::vector<std::string> hyper_names(const KernelSpec& spec) {
    std::vector<std::string> out;
    collect_names(spec, "", out);
    return out;
}

HyperGrad kernel_grad_hyper(const KernelSpec& spec, const Eigen::Ref<const Mat>& X) {
    require_finite(X, "kernel_grad_hyper: X");
    HyperGrad hg;
    hg.dK.reserve(hyper_count(spec));
    grad_hyper_into(spec, X, hg.dK, nullptr);
    return hg;
}

HyperGrad kernel_grad_hyper_fd(const KernelSpec& spec, const Eigen::Ref<const Mat>& X) {
    HyperGrad hg;
    hg.used_finite_difference = true;
    const Vec logh = get_log_hypers(spec);
    const Vec theta = logh.array().exp();
    for (int k = 0; k < theta.size(); ++k) {
        const double h = 1e-6 * theta(k);
        KernelSpec hi = spec, lo = spec;
        Vec lh = logh;
        lh(k) = std::log(theta(k) + h);
        set_log_hypers(hi, lh);
        lh(k) = std::log(theta(k) - h);
        set_log_hypers(lo, lh);
        hg.dK.push_back((kernel_matrix(hi, X) - kernel_matrix(lo, X)) / (2.0 * h));
    }
    return hg;
}

namespace {

void grad_input_into(const KernelSpec& s, const Eigen::Ref<const Vec>& xstar,
                     const Eigen::Ref<const Mat>& X, Mat& acc, bool& degenerate,
                     const Vec* envelope) {
    // envelope(i) multiplies row i (product rule for Product parents).
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();

    switch (s.family) {
    case KernelFamily::SquaredExponential:
    case KernelFamily::Matern: {
        const bool ard = s.lengthscale.size() > 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = scaled_distance(s, xstar, X.row(i).transpose());
            const Radial re = radial_eval(s, r);
            const double env = envelope ? (*envelope)(i) : 1.0;
            for (Eigen::Index d = 0; d < p; ++d) {
                const double ell = ard ? s.lengthscale(d) : s.lengthscale(0);
                const double diff = X(i, d) - xstar(d);
                double g;
                if (s.family == KernelFamily::SquaredExponential) {
                    g = re.k * diff / (ell * ell);
                } else if (s.nu == 1.5) {
                    g = 3.0 * s.variance * std::exp(-kSqrt3 * r) * diff / (ell * ell);
                } else if (s.nu == 2.5) {
                    g = (5.0 / 3.0) * s.variance * (1.0 + kSqrt5 * r) *
                        std::exp(-kSqrt5 * r) * diff / (ell * ell);
                } else {
                    // nu = 1/2 has a kink at r = 0
                    if (r == 0.0) {
                        degenerate = true;
                        g = 0.0;
                    } else {
                        g = s.variance * std::exp(-r) * diff / (ell * ell * r);
                    }
                }
                acc(i, d) += env * g;
            }
        }
        break;
    }
    case KernelFamily::Linear:
        for (Eigen::Index i = 0; i < n; ++i) {
            const double env = envelope ? (*envelope)(i) : 1.0;
            acc.row(i) += env * s.variance * X.row(i);
        }
        break;
    case KernelFamily::Sum:
        for (const auto& c : s.children) grad_input_into(c, xstar, X, acc, degenerate, envelope);
        break;
    case KernelFamily::Product: {
        std::vector<Vec> vals;
        vals.reserve(s.children.size());
        for (const auto& c : s.children) {
            Vec v(n);
            for (Eigen::Index i = 0; i < n; ++i)
                v(i) = eval_kernel(c, xstar, X.row(i).transpose());
            vals.push_back(std::move(v));
        }
        for (std::size_t i = 0; i < s.children.size(); ++i) {
            Vec env = envelope ? *envelope : Vec::Ones(n);
            for (std::size_t j = 0; j < s.children.size(); ++j)
                if (j != i) env = env.cwiseProduct(vals[j]);
            grad_input_into(s.children[i], xstar, X, acc, degenerate, &env);
        }
        break;
    }
    }
}

} // namespace

InputGrad kernel_grad_input(const KernelSpec& spec, const Eigen::Ref<const Vec>& xstar,
                            const Eigen::Ref<const Mat>& X) {
    require(xstar.size() == X.cols(), "kernel_grad_input: dimension mismatch");
    require_finite(X, "kernel_grad_input: X");
    InputGrad ig;
    ig.grad = Mat::Zero(X.rows(), X.cols());
    grad_input_into(spec, xstar, X, ig.grad, ig.degenerate, nullptr);
    return ig;
}

} // namespace gpxva
