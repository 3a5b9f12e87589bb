#include "gpxva/gp.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>

namespace gpxva {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

Mat AffineMap::forward(const Eigen::Ref<const Mat>& X) const {
    Mat out = X;
    out.rowwise() -= offset.transpose();
    out.array().rowwise() /= scale.transpose().array();
    return out;
}

AffineMap AffineMap::identity(int dim) {
    return {Vec::Zero(dim), Vec::Ones(dim)};
}

AffineMap AffineMap::unit_box(const Eigen::Ref<const Mat>& X) {
    AffineMap m;
    m.offset = X.colwise().minCoeff();
    m.scale = (X.colwise().maxCoeff() - X.colwise().minCoeff());
    for (int d = 0; d < m.scale.size(); ++d)
        if (m.scale(d) <= 0.0) m.scale(d) = 1.0;
    return m;
}

OutputMap OutputMap::centered(const Eigen::Ref<const Vec>& Y) {
    OutputMap m;
    m.offset = Y.mean();
    m.scale = Y.maxCoeff() - Y.minCoeff();
    if (m.scale <= 0.0) m.scale = 1.0;
    return m;
}

namespace detail {

double robust_cholesky(const Mat& A, Mat& L, double jitter0, double max_jitter) {
    const double base = std::max(A.diagonal().mean(), 1e-300);
    double jitter = jitter0 * base;
    const double cap = max_jitter * base;
    while (true) {
        Mat K = A;
        K.diagonal().array() += jitter;
        Eigen::LLT<Mat> llt(K);
        if (llt.info() == Eigen::Success) {
            L = llt.matrixL();
            return jitter;
        }
        if (jitter >= cap)
            throw NumericError("robust_cholesky: ill-conditioned Gram matrix (jitter exhausted)");
        jitter *= 10.0;
    }
}

AdamResult adam_minimize(const Vec& init, const std::function<double(const Vec&, Vec&)>& value_grad,
                         const OptimizerCfg& opt) {
    AdamResult res;
    res.best_value = std::numeric_limits<double>::infinity();

    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int restart = 0; restart < std::max(1, opt.restarts); ++restart) {
        Vec p = init;
        if (restart > 0) {
            NormalRng rng(split_seed(opt.seed, static_cast<std::uint64_t>(restart)));
            for (int i = 0; i < p.size(); ++i) p(i) += opt.restart_spread * rng.next();
        }
        Vec m = Vec::Zero(p.size());
        Vec v = Vec::Zero(p.size());
        for (int it = 0; it <= opt.iterations; ++it) {
            Vec g(p.size());
            double f;
            try {
                f = value_grad(p, g);
            } catch (const NumericError&) {
                break; // dead region; try next restart
            }
            if (std::isfinite(f) && f < res.best_value) {
                res.best_value = f;
                res.best_params = p;
                res.any_success = true;
            }
            if (it == opt.iterations) break;
            const double t = it + 1;
            const double lr = opt.decay
                                  ? opt.learning_rate * (1.0 - static_cast<double>(it) / opt.iterations)
                                  : opt.learning_rate;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v.array() + (1.0 - b2) * g.array().square();
            const double mc = 1.0 - std::pow(b1, t);
            const double vc = 1.0 - std::pow(b2, t);
            p -= (lr * (m / mc).array() / ((v / vc).array().sqrt() + eps)).matrix();
        }
    }
    return res;
}

} // namespace detail

namespace {

struct EvidenceCore {
    Mat L;
    Vec alpha;
    double jitter = 0.0;
    double value = 0.0;
};

EvidenceCore evidence_core(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Vec>& Y,
                           const KernelSpec& kernel, double sigma) {
    require(X.rows() == Y.size(), "log_evidence: row count of X must match Y");
    require(X.rows() >= 1, "log_evidence: empty training set");
    require(sigma >= 0.0 && std::isfinite(sigma), "log_evidence: noise must be >= 0");
    require_finite(X, "log_evidence: X");
    require_finite(Y, "log_evidence: Y");

    EvidenceCore c;
    Mat K = kernel_matrix(kernel, X);
    K.diagonal().array() += sigma * sigma;
    c.jitter = detail::robust_cholesky(K, c.L);
    const Eigen::Index n = X.rows();
    c.alpha = c.L.triangularView<Eigen::Lower>().solve(Y);
    c.L.triangularView<Eigen::Lower>().transpose().solveInPlace(c.alpha);
    const double logdet = 2.0 * c.L.diagonal().array().log().sum();
    c.value = -0.5 * (Y.dot(c.alpha) + logdet + static_cast<double>(n) * kLog2Pi);
    return c;
}

} // namespace

double log_evidence(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Vec>& Y,
                    const KernelSpec& kernel, double sigma) {
    return evidence_core(X, Y, kernel, sigma).value;
}

EvidenceGrad evidence_grad(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Vec>& Y,
                           const KernelSpec& kernel, double sigma, bool include_noise) {
    const EvidenceCore core = evidence_core(X, Y, kernel, sigma);
    const Eigen::Index n = X.rows();

    // W = alpha alpha' - (K + s^2 I)^{-1}
    Mat W = Mat::Identity(n, n);
    core.L.triangularView<Eigen::Lower>().solveInPlace(W);
    core.L.triangularView<Eigen::Lower>().transpose().solveInPlace(W);
    W = (core.alpha * core.alpha.transpose() - W).eval();

    const HyperGrad hg = kernel_grad_hyper(kernel, X);
    const Vec theta = get_log_hypers(kernel).array().exp();

    EvidenceGrad out;
    out.value = core.value;
    out.used_finite_difference = hg.used_finite_difference;
    out.grad.resize(theta.size() + (include_noise ? 1 : 0));
    for (int k = 0; k < theta.size(); ++k) {
        // chain rule into log space: dK/d log(theta) = theta * dK/d theta
        out.grad(k) = 0.5 * theta(k) * W.cwiseProduct(hg.dK[static_cast<std::size_t>(k)]).sum();
    }
    if (include_noise) {
        // dK'/d log sigma = 2 sigma^2 I
        out.grad(theta.size()) = 0.5 * 2.0 * sigma * sigma * W.trace();
    }
    return out;
}

GpModel GpModel::condition(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Vec>& Y,
                           KernelSpec kernel, double sigma, bool rescale) {
    const AffineMap im =
        rescale ? AffineMap::unit_box(X) : AffineMap::identity(static_cast<int>(X.cols()));
    const OutputMap om = rescale ? OutputMap::centered(Y) : OutputMap{};
    return condition_mapped(X, Y, std::move(kernel), sigma, im, om);
}

GpModel GpModel::condition_mapped(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Vec>& Y,
                                  KernelSpec kernel, double sigma, AffineMap in_map,
                                  OutputMap out_map) {
    kernel.validate();
    require(in_map.scale.size() == X.cols(), "GpModel: input map dimension mismatch");
    GpModel m;
    m.kernel_ = std::move(kernel);
    m.sigma_ = sigma;
    m.in_map_ = std::move(in_map);
    m.out_map_ = out_map;
    m.x_raw_ = X;
    m.y_raw_ = Y;
    m.x_scaled_ = m.in_map_.forward(X);
    m.y_scaled_ = (Y.array() - out_map.offset) / out_map.scale;

    const EvidenceCore core = evidence_core(m.x_scaled_, m.y_scaled_, m.kernel_, sigma);
    m.cholL_ = core.L;
    m.alpha_ = core.alpha;
    m.jitter_ = core.jitter;
    m.evidence_ = core.value;
    return m;
}

void GpModel::predict(const Eigen::Ref<const Mat>& Xstar, Vec& mean, Vec& variance) const {
    require(Xstar.cols() == x_raw_.cols(), "predict: dimension mismatch");
    const Mat Xs = in_map_.forward(Xstar);
    const Mat Ks = kernel_matrix(kernel_, Xs, x_scaled_); // m x n
    const Vec mean_s = Ks * alpha_;

    Mat V = Ks.transpose(); // n x m
    cholL_.triangularView<Eigen::Lower>().solveInPlace(V);

    const Eigen::Index mrows = Xs.rows();
    variance.resize(mrows);
    for (Eigen::Index i = 0; i < mrows; ++i) {
        const double prior = eval_kernel(kernel_, Xs.row(i).transpose(), Xs.row(i).transpose());
        variance(i) = std::max(0.0, prior - V.col(i).squaredNorm());
    }
    mean = mean_s.array() * out_map_.scale + out_map_.offset;
    variance *= out_map_.scale * out_map_.scale;
}

Vec GpModel::predict_mean(const Eigen::Ref<const Mat>& Xstar) const {
    require(Xstar.cols() == x_raw_.cols(), "predict: dimension mismatch");
    const Mat Xs = in_map_.forward(Xstar);
    const Vec mean_s = kernel_matrix(kernel_, Xs, x_scaled_) * alpha_;
    return mean_s.array() * out_map_.scale + out_map_.offset;
}

Mat GpModel::predict_gradient(const Eigen::Ref<const Mat>& Xstar) const {
    require(Xstar.cols() == x_raw_.cols(), "predict_gradient: dimension mismatch");
    const Mat Xs = in_map_.forward(Xstar);
    Mat out(Xstar.rows(), Xstar.cols());
    last_grad_degenerate_ = false;
    for (Eigen::Index i = 0; i < Xs.rows(); ++i) {
        const InputGrad ig = kernel_grad_input(kernel_, Xs.row(i).transpose(), x_scaled_);
        last_grad_degenerate_ = last_grad_degenerate_ || ig.degenerate;
        out.row(i) = (ig.grad.transpose() * alpha_).transpose();
    }
    // undo the affine maps: d y / d x = (dy_s/dx_s) * y_scale / x_scale
    out *= out_map_.scale;
    out.array().rowwise() /= in_map_.scale.transpose().array();
    return out;
}

GpModel GpModel::online_update(const Eigen::Ref<const Vec>& x, double y) const {
    require(x.size() == x_raw_.cols(), "online_update: dimension mismatch");
    require(std::isfinite(y) && x.allFinite(), "online_update: non-finite observation");

    const Eigen::Index n = size();
    const Vec xs = ((x - in_map_.offset).array() / in_map_.scale.array()).matrix();
    const double ys = (y - out_map_.offset) / out_map_.scale;

    Vec k_new(n);
    for (Eigen::Index i = 0; i < n; ++i)
        k_new(i) = eval_kernel(kernel_, xs, x_scaled_.row(i).transpose());
    const double c = eval_kernel(kernel_, xs, xs) + sigma_ * sigma_ + jitter_;

    const Vec l = cholL_.triangularView<Eigen::Lower>().solve(k_new);
    const double d2 = c - l.squaredNorm();

    // latent predictive variance at x; zero means the point carries no new
    // information beyond its mean
    const double prior = eval_kernel(kernel_, xs, xs);
    const double var_f = d2 - sigma_ * sigma_ - jitter_;
    if (var_f <= 1e-8 * std::max(prior, 1e-300) || d2 <= 0.0) {
        Vec mean, var;
        predict(x.transpose(), mean, var);
        const double tol = 1e-6 * std::max(1.0, std::abs(y));
        if (std::abs(mean(0) - y) <= tol) return *this;
        throw NumericError("online_update: inconsistent observation at duplicate input");
    }

    GpModel m = *this;
    m.x_raw_.conservativeResize(n + 1, Eigen::NoChange);
    m.x_raw_.row(n) = x.transpose();
    m.y_raw_.conservativeResize(n + 1);
    m.y_raw_(n) = y;
    m.x_scaled_.conservativeResize(n + 1, Eigen::NoChange);
    m.x_scaled_.row(n) = xs.transpose();
    m.y_scaled_.conservativeResize(n + 1);
    m.y_scaled_(n) = ys;

    Mat L = Mat::Zero(n + 1, n + 1);
    L.topLeftCorner(n, n) = cholL_;
    L.row(n).head(n) = l.transpose();
    L(n, n) = std::sqrt(d2);
    m.cholL_ = std::move(L);

    m.alpha_ = m.cholL_.triangularView<Eigen::Lower>().solve(m.y_scaled_);
    m.cholL_.triangularView<Eigen::Lower>().transpose().solveInPlace(m.alpha_);

    const double logdet = 2.0 * m.cholL_.diagonal().array().log().sum();
    m.evidence_ = -0.5 * (m.y_scaled_.dot(m.alpha_) + logdet +
                          static_cast<double>(n + 1) * kLog2Pi);
    return m;
}

GpModel fit(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Vec>& Y, KernelSpec kernel0,
            double sigma0, const OptimizerCfg& opt) {
    require(X.rows() >= 2, "fit: need at least two training rows");
    require(X.rows() == Y.size(), "fit: row count of X must match Y");
    require_finite(Y, "fit: Y");
    kernel0.validate();

    const AffineMap im = AffineMap::unit_box(X);
    const OutputMap om = OutputMap::centered(Y);
    const Mat Xs = im.forward(X);
    const Vec Ys = (Y.array() - om.offset) / om.scale;

    const bool learn_noise = opt.learn_noise;
    double sigma_fixed = sigma0;
    const int nk = hyper_count(kernel0);
    Vec init(nk + (learn_noise ? 1 : 0));
    init.head(nk) = get_log_hypers(kernel0);
    if (learn_noise) init(nk) = std::log(std::max(sigma0, 1e-4));

    KernelSpec work = kernel0;
    auto value_grad = [&](const Vec& p, Vec& g) -> double {
        set_log_hypers(work, p.head(nk));
        const double sigma = learn_noise ? std::exp(p(nk)) : sigma_fixed;
        const EvidenceGrad eg = evidence_grad(Xs, Ys, work, sigma, learn_noise);
        g = -eg.grad;
        return -eg.value;
    };

    const detail::AdamResult res = detail::adam_minimize(init, value_grad, opt);
    if (!res.any_success)
        throw NumericError("fit: evidence evaluation failed for every restart");

    set_log_hypers(work, res.best_params.head(nk));
    const double sigma = learn_noise ? std::exp(res.best_params(nk)) : sigma_fixed;
    return GpModel::condition_mapped(X, Y, work, sigma, im, om);
}

} // namespace gpxva
