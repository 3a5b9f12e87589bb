#include "gpxva/mgp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace gpxva {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Mat make_omega(const Eigen::Ref<const Vec>& b, double omega) {
    Mat O = b * b.transpose();
    O.diagonal().array() += omega * omega;
    return O;
}

// n/2 ln|Omega| + 1/2 tr(Omega^{-1} S), the Omega-dependent part of the
// likelihood, with S = Y' K'^{-1} Y.
double omega_part(const Eigen::Ref<const Vec>& b, double omega, const Mat& S, double n) {
    const Mat O = make_omega(b, omega);
    Eigen::LLT<Mat> llt(O);
    if (llt.info() != Eigen::Success)
        throw NumericError("mgp: task covariance not positive definite");
    const Mat L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    const Mat W = llt.solve(S);
    return 0.5 * n * logdet + 0.5 * W.trace();
}

struct MultiCore {
    Mat L;      // chol of K + sigma^2 I (+jitter)
    Mat alpha;  // (K')^{-1} Y
    Mat B;      // L^{-1} Y
    double jitter = 0.0;
    double logdet_k = 0.0;
};

MultiCore multi_core(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y,
                     const KernelSpec& kernel, double sigma) {
    require(X.rows() == Y.rows(), "mgp: row count of X must match Y");
    require(X.rows() >= 1, "mgp: empty training set");
    require_finite(Y, "mgp: Y");
    MultiCore c;
    Mat K = kernel_matrix(kernel, X);
    K.diagonal().array() += sigma * sigma;
    c.jitter = detail::robust_cholesky(K, c.L);
    c.logdet_k = 2.0 * c.L.diagonal().array().log().sum();
    c.B = c.L.triangularView<Eigen::Lower>().solve(Y);
    c.alpha = c.B;
    c.L.triangularView<Eigen::Lower>().transpose().solveInPlace(c.alpha);
    return c;
}

} // namespace

Mat ml_task_cov(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y,
                const KernelSpec& kernel, double sigma) {
    const MultiCore core = multi_core(X, Y, kernel, sigma);
    return core.B.transpose() * core.B / static_cast<double>(X.rows());
}

double neg_log_marginal_multi(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y,
                              const KernelSpec& kernel, double sigma,
                              const Eigen::Ref<const Vec>& b, double omega) {
    require(b.size() == Y.cols(), "neg_log_marginal_multi: task factor size mismatch");
    const double n = static_cast<double>(X.rows());
    const double d = static_cast<double>(Y.cols());
    const MultiCore core = multi_core(X, Y, kernel, sigma);
    const Mat S = core.B.transpose() * core.B;
    return 0.5 * n * d * kLog2Pi + 0.5 * d * core.logdet_k + omega_part(b, omega, S, n);
}

namespace {

// Columns are centered individually but share one range scale: a common
// scale is an exact reparametrization of the raw-space fit, so the task
// covariance keeps its raw sign structure.
std::vector<OutputMap> column_maps(const Eigen::Ref<const Mat>& Y) {
    double scale = 0.0;
    for (Eigen::Index l = 0; l < Y.cols(); ++l)
        scale = std::max(scale, Y.col(l).maxCoeff() - Y.col(l).minCoeff());
    if (scale <= 0.0) scale = 1.0;
    std::vector<OutputMap> oms;
    oms.reserve(static_cast<std::size_t>(Y.cols()));
    for (Eigen::Index l = 0; l < Y.cols(); ++l) oms.push_back({Y.col(l).mean(), scale});
    return oms;
}

} // namespace

MgpModel MgpModel::condition(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y,
                             KernelSpec kernel, double sigma, Vec b, double omega,
                             bool rescale) {
    AffineMap im =
        rescale ? AffineMap::unit_box(X) : AffineMap::identity(static_cast<int>(X.cols()));
    std::vector<OutputMap> oms;
    if (rescale) {
        oms = column_maps(Y);
    } else {
        oms.assign(static_cast<std::size_t>(Y.cols()), OutputMap{});
    }
    return condition_mapped(X, Y, std::move(kernel), sigma, std::move(b), omega, std::move(im),
                            std::move(oms));
}

MgpModel MgpModel::condition_mapped(const Eigen::Ref<const Mat>& X,
                                    const Eigen::Ref<const Mat>& Y, KernelSpec kernel,
                                    double sigma, Vec b, double omega, AffineMap in_map,
                                    std::vector<OutputMap> out_maps) {
    kernel.validate();
    require(b.size() == Y.cols(), "MgpModel: task factor size mismatch");
    require(omega > 0.0, "MgpModel: task noise must be positive");
    require(out_maps.size() == static_cast<std::size_t>(Y.cols()),
            "MgpModel: one output map per column required");

    MgpModel m;
    m.kernel_ = std::move(kernel);
    m.sigma_ = sigma;
    m.b_ = std::move(b);
    m.omega_ = omega;
    m.in_map_ = std::move(in_map);
    m.out_maps_ = std::move(out_maps);
    m.x_raw_ = X;
    m.y_raw_ = Y;
    m.x_scaled_ = m.in_map_.forward(X);
    m.y_scaled_.resize(Y.rows(), Y.cols());
    for (Eigen::Index l = 0; l < Y.cols(); ++l)
        m.y_scaled_.col(l) = (Y.col(l).array() - m.out_maps_[l].offset) / m.out_maps_[l].scale;

    const MultiCore core = multi_core(m.x_scaled_, m.y_scaled_, m.kernel_, sigma);
    m.cholL_ = core.L;
    m.alpha_ = core.alpha;
    m.jitter_ = core.jitter;
    const Mat S = core.B.transpose() * core.B;
    const double n = static_cast<double>(X.rows());
    const double d = static_cast<double>(Y.cols());
    m.nll_ = 0.5 * n * d * kLog2Pi + 0.5 * d * core.logdet_k + omega_part(m.b_, omega, S, n);
    return m;
}

Mat MgpModel::task_cov_scaled() const { return make_omega(b_, omega_); }

Mat MgpModel::task_cov() const {
    Mat O = make_omega(b_, omega_);
    Vec s(tasks());
    for (int l = 0; l < tasks(); ++l) s(l) = out_maps_[static_cast<std::size_t>(l)].scale;
    return s.asDiagonal() * O * s.asDiagonal();
}

MgpPrediction MgpModel::predict_multi(const Eigen::Ref<const Mat>& Xstar) const {
    require(Xstar.cols() == x_raw_.cols(), "predict_multi: dimension mismatch");
    const Mat Xs = in_map_.forward(Xstar);
    const Mat Ks = kernel_matrix(kernel_, Xs, x_scaled_); // m x n

    MgpPrediction out;
    out.mean = Ks * alpha_; // scaled
    for (Eigen::Index l = 0; l < out.mean.cols(); ++l)
        out.mean.col(l) =
            out.mean.col(l).array() * out_maps_[static_cast<std::size_t>(l)].scale +
            out_maps_[static_cast<std::size_t>(l)].offset;

    Mat V = Ks.transpose(); // n x m
    cholL_.triangularView<Eigen::Lower>().solveInPlace(V);
    Mat Sig = kernel_matrix(kernel_, Xs) - V.transpose() * V;
    Sig = (0.5 * (Sig + Sig.transpose())).eval();
    for (Eigen::Index i = 0; i < Sig.rows(); ++i) Sig(i, i) = std::max(0.0, Sig(i, i));
    out.input_cov = std::move(Sig);
    out.task_cov = task_cov();
    return out;
}

PortfolioPosterior MgpModel::portfolio_posterior(const Eigen::Ref<const Vec>& w,
                                                 const Eigen::Ref<const Mat>& Xstar) const {
    require(w.size() == tasks(), "portfolio_posterior: weight size mismatch");
    require(w.allFinite(), "portfolio_posterior: non-finite weights");
    const MgpPrediction p = predict_multi(Xstar);
    PortfolioPosterior out;
    out.mean = p.mean * w;
    const double task_var = w.dot(p.task_cov * w);
    out.cov = task_var * p.input_cov;
    out.variance = out.cov.diagonal();
    return out;
}

MgpModel fit_multi(const Eigen::Ref<const Mat>& X, const Eigen::Ref<const Mat>& Y,
                   KernelSpec kernel0, const OptimizerCfg& opt) {
    require(Y.cols() >= 2, "fit_multi: need at least two outputs");
    require(X.rows() >= 2, "fit_multi: need at least two training rows");
    kernel0.validate();

    const int d = static_cast<int>(Y.cols());
    const AffineMap im = AffineMap::unit_box(X);
    const std::vector<OutputMap> oms = column_maps(Y);
    const Mat Xs = im.forward(X);
    Mat Ys(Y.rows(), Y.cols());
    for (Eigen::Index l = 0; l < Y.cols(); ++l)
        Ys.col(l) = (Y.col(l).array() - oms[static_cast<std::size_t>(l)].offset) /
                    oms[static_cast<std::size_t>(l)].scale;

    const int nk = hyper_count(kernel0);
    const bool learn_noise = opt.learn_noise;
    const int nsig = learn_noise ? 1 : 0;
    // layout: [log kernel hypers | log sigma? | b (raw) | log omega]
    Vec init(nk + nsig + d + 1);
    init.head(nk) = get_log_hypers(kernel0);
    if (learn_noise) init(nk) = std::log(0.1);
    // seed the task factor from the leading eigenpair of the empirical task
    // covariance so cross-task signs start in the right basin
    const Mat cemp = Ys.transpose() * Ys / static_cast<double>(Ys.rows());
    Eigen::SelfAdjointEigenSolver<Mat> eig(cemp);
    const double lead = eig.eigenvalues()(d - 1);
    Vec b0 = Vec::Constant(d, 0.1);
    if (lead > 1e-10) b0 = std::sqrt(lead) * eig.eigenvectors().col(d - 1);
    init.segment(nk + nsig, d) = b0;
    const double resid =
        std::max((cemp.diagonal() - b0.cwiseProduct(b0)).mean(), 1e-4);
    init(nk + nsig + d) = 0.5 * std::log(resid);

    const double nrows = static_cast<double>(X.rows());
    const double fixed_sigma = 1e-4;
    KernelSpec work = kernel0;

    auto value_grad = [&](const Vec& p, Vec& g) -> double {
        set_log_hypers(work, p.head(nk));
        const double sigma = learn_noise ? std::exp(p(nk)) : fixed_sigma;
        const Vec b = p.segment(nk + nsig, d);
        const double omega = std::exp(p(nk + nsig + d));

        const MultiCore core = multi_core(Xs, Ys, work, sigma);
        const Mat S = core.B.transpose() * core.B;
        const double f = 0.5 * nrows * d * kLog2Pi + 0.5 * d * core.logdet_k +
                         omega_part(b, omega, S, nrows);

        g.resize(p.size());

        // analytic kernel/noise gradients: dL/dtheta = 1/2 tr(G dK'/dtheta),
        // G = d K'^{-1} - K'^{-1} A K'^{-1}, A = Y Omega^{-1} Y'
        const Mat O = make_omega(b, omega);
        const Eigen::LLT<Mat> ollt(O);
        const Mat Yoi = ollt.solve(Ys.transpose()).transpose(); // Y Omega^{-1}
        Mat Kinv = Mat::Identity(Xs.rows(), Xs.rows());
        core.L.triangularView<Eigen::Lower>().solveInPlace(Kinv);
        core.L.triangularView<Eigen::Lower>().transpose().solveInPlace(Kinv);
        const Mat G = double(d) * Kinv - core.alpha * (Yoi.transpose() * Kinv);

        const HyperGrad hg = kernel_grad_hyper(work, Xs);
        const Vec theta = p.head(nk).array().exp();
        for (int k = 0; k < nk; ++k)
            g(k) = 0.5 * theta(k) * G.cwiseProduct(hg.dK[static_cast<std::size_t>(k)]).sum();
        if (learn_noise) g(nk) = 0.5 * 2.0 * sigma * sigma * G.trace();

        // finite differences on (b, log omega)
        for (int k = nk + nsig; k < p.size(); ++k) {
            const double h = 1e-5 * std::max(1.0, std::abs(p(k)));
            Vec ph = p, pl = p;
            ph(k) += h;
            pl(k) -= h;
            const Vec bh = ph.segment(nk + nsig, d), bl = pl.segment(nk + nsig, d);
            const double oh = std::exp(ph(nk + nsig + d)), ol = std::exp(pl(nk + nsig + d));
            g(k) = (omega_part(bh, oh, S, nrows) - omega_part(bl, ol, S, nrows)) / (2.0 * h);
        }
        return f;
    };

    const detail::AdamResult res = detail::adam_minimize(init, value_grad, opt);
    if (!res.any_success)
        throw NumericError("fit_multi: likelihood evaluation failed for every restart");

    set_log_hypers(work, res.best_params.head(nk));
    const double sigma = learn_noise ? std::exp(res.best_params(nk)) : fixed_sigma;
    const Vec b = res.best_params.segment(nk + nsig, d);
    const double omega = std::exp(res.best_params(nk + nsig + d));
    return MgpModel::condition_mapped(X, Y, work, sigma, b, omega, im, oms);
}

} // namespace gpxva
