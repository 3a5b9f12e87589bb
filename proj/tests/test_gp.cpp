#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gpxva/gp.hpp"
#include "gpxva/pricers.hpp"
#include "gpxva/serialize.hpp"
#include "oracles.hpp"

using namespace gpxva;

namespace {

Mat grid1d(double lo, double hi, int n) {
    Mat X(n, 1);
    for (int i = 0; i < n; ++i) X(i, 0) = lo + (hi - lo) * i / (n - 1);
    return X;
}

Mat random_points(int n, int p, std::uint64_t seed) {
    NormalRng rng(seed);
    Mat X(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) X(i, j) = rng.next();
    return X;
}

} // namespace

TEST_CASE("evidence: scalar case") {
    Mat X(1, 1);
    X << 0.0;
    Vec Y(1);
    Y << 0.0;
    // k(x,x)=1, sigma=0, Y=0: -(1/2) log 2pi
    CHECK(log_evidence(X, Y, KernelSpec::se(1.0), 0.0) ==
          doctest::Approx(-0.9189385332046727).epsilon(1e-8));
}

TEST_CASE("evidence: duplicate rows regularized by noise") {
    Mat X(4, 1);
    X << 0.2, 0.2, 0.7, 0.7;
    Vec Y(4);
    Y << 1.0, 1.0, -0.5, -0.5;
    const double v = log_evidence(X, Y, KernelSpec::se(0.5), 0.1);
    CHECK(std::isfinite(v));
}

TEST_CASE("evidence matches the dense-inverse oracle") {
    const std::vector<KernelSpec> specs = {
        KernelSpec::se(0.8), KernelSpec::matern(2.5, 1.1, 1.3),
        KernelSpec::sum({KernelSpec::linear(0.4), KernelSpec::se(0.6)})};
    int seed = 3;
    for (const auto& spec : specs) {
        for (int n : {3, 10, 20}) {
            const Mat X = random_points(n, 2, static_cast<std::uint64_t>(seed++));
            const Vec Y = random_points(n, 1, static_cast<std::uint64_t>(seed++)).col(0);
            const double lib = log_evidence(X, Y, spec, 0.3);
            const double oracle = oracles::dense_log_evidence(X, Y, spec, 0.3);
            CHECK(std::abs(lib - oracle) / std::abs(oracle) < 1e-8);
        }
    }
}

TEST_CASE("evidence gradient matches finite differences") {
    const std::vector<KernelSpec> specs = {
        KernelSpec::se(0.7, 1.2), KernelSpec::matern(1.5, 0.9),
        KernelSpec::product({KernelSpec::se(0.8), KernelSpec::linear(0.7)})};
    int seed = 17;
    for (const auto& spec : specs) {
        const Mat X = random_points(12, 2, static_cast<std::uint64_t>(seed++));
        const Vec Y =
            (X.col(0).array().sin() + 0.5 * X.col(1).array()).matrix() +
            0.05 * random_points(12, 1, static_cast<std::uint64_t>(seed++)).col(0);
        const EvidenceGrad eg = evidence_grad(X, Y, spec, 0.2, true);
        const Vec fd = oracles::fd_evidence_grad(X, Y, spec, 0.2, true);
        for (int k = 0; k < fd.size(); ++k) {
            const double scale = std::max(std::abs(fd(k)), 1e-6);
            CHECK(std::abs(eg.grad(k) - fd(k)) / scale < 1e-4);
        }
    }
}

TEST_CASE("evidence gradient: noise component negative on noise-free data") {
    // smooth consistent targets; adding noise from 0+ lowers the evidence
    const Mat X = grid1d(0.0, 1.0, 12);
    const Vec Y = (6.0 * X.col(0)).array().sin();
    const double s = 1e-3;
    const double up = log_evidence(X, Y, KernelSpec::se(0.3), s * 1.5);
    const double down = log_evidence(X, Y, KernelSpec::se(0.3), s);
    CHECK(up < down); // empirical direction
    const EvidenceGrad eg = evidence_grad(X, Y, KernelSpec::se(0.3), s, true);
    CHECK(eg.grad(eg.grad.size() - 1) < 0.0);
}

TEST_CASE("fit: BS call prices on 50 gridded spots") {
    const Mat X = grid1d(1.0, 300.0, 50);
    Vec Y(50);
    for (int i = 0; i < 50; ++i)
        Y(i) = bs_price(OptionSide::Call, X(i, 0), 100.0, 0.01, 2.0, 0.3).price;
    OptimizerCfg opt;
    opt.seed = 5;
    const GpModel model = fit(X, Y, KernelSpec::se(1.0), 1e-2, opt);
    const Vec pred = model.predict_mean(X);
    const double scale = Y.maxCoeff() - Y.minCoeff();
    CHECK((pred - Y).cwiseAbs().maxCoeff() <= 1e-3 * scale);
}

TEST_CASE("fit: evidence never drops below the initial model") {
    const Mat X = grid1d(0.0, 1.0, 20);
    const Vec Y = (4.0 * X.col(0)).array().cos();
    const KernelSpec k0 = KernelSpec::se(0.5);
    OptimizerCfg opt;
    opt.iterations = 100;
    opt.restarts = 2;
    const GpModel fitted = fit(X, Y, k0, 0.05, opt);
    const GpModel init = GpModel::condition(X, Y, k0, 0.05);
    CHECK(fitted.evidence() >= init.evidence() - 1e-12);
}

TEST_CASE("fit: stationarity at the optimizer output") {
    // noisy targets put the noise optimum in the interior, so the evidence
    // has a genuine stationary point
    const Mat X = grid1d(0.0, 1.0, 30);
    const Vec Y = (3.0 * X.col(0)).array().sin() + 0.2 * X.col(0).array() +
                  0.05 * random_points(30, 1, 8).col(0).array();
    OptimizerCfg opt;
    opt.iterations = 4000;
    opt.learning_rate = 0.02;
    opt.restarts = 2;
    opt.seed = 11;
    opt.decay = true;
    const GpModel model = fit(X, Y, KernelSpec::se(0.5), 0.05, opt);
    // gradient in the scaled domain at the returned hyperparameters
    const AffineMap im = AffineMap::unit_box(X);
    const OutputMap om = OutputMap::centered(Y);
    const Vec Ys = (Y.array() - om.offset) / om.scale;
    const EvidenceGrad eg =
        evidence_grad(im.forward(X), Ys, model.kernel(), model.noise(), true);
    CHECK(eg.grad.norm() <= 1e-4);
}

TEST_CASE("fit: constant targets") {
    const Mat X = grid1d(0.0, 1.0, 10);
    const Vec Y = Vec::Constant(10, 3.7);
    OptimizerCfg opt;
    opt.iterations = 200;
    opt.restarts = 1;
    const GpModel model = fit(X, Y, KernelSpec::se(0.7), 1e-2, opt);
    Vec mean, var;
    model.predict(X, mean, var);
    CHECK((mean.array() - 3.7).abs().maxCoeff() < 1e-8);
    CHECK(var.maxCoeff() < 1e-6);
    const Mat grad = model.predict_gradient(X);
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("predict: noise-free interpolation at training points") {
    const Mat X = grid1d(0.0, 1.0, 9);
    const Vec Y = (2.0 * X.col(0)).array().sin();
    const GpModel model = GpModel::condition(X, Y, KernelSpec::se(0.4), 0.0);
    Vec mean, var;
    model.predict(X, mean, var);
    CHECK((mean - Y).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(var.maxCoeff() <= 1e-8);
}

TEST_CASE("predict: single-point closed form") {
    Mat X(1, 1);
    X << 0.3;
    Vec Y(1);
    Y << 2.0;
    const GpModel model = GpModel::condition(X, Y, KernelSpec::se(1.0), 0.0, /*rescale=*/false);
    Mat Xs(2, 1);
    Xs << 0.3, 1.3;
    Vec mean, var;
    model.predict(Xs, mean, var);
    const double k = std::exp(-0.5); // unit distance
    CHECK(mean(0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(var(0) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(mean(1) == doctest::Approx(k * 2.0).epsilon(1e-6));
    CHECK(var(1) == doctest::Approx(1.0 - k * k).epsilon(1e-6));
}

TEST_CASE("predict: linear+SE extrapolation variance grows with distance") {
    const Mat X = grid1d(0.1, 1.0, 20);
    Vec Y(20);
    for (int i = 0; i < 20; ++i) Y(i) = 2.0 * X(i, 0) + 0.1 * std::sin(8.0 * X(i, 0));
    const KernelSpec k = KernelSpec::sum({KernelSpec::linear(1.0), KernelSpec::se(0.3, 0.5)});
    const GpModel model = GpModel::condition(X, Y, k, 1e-4);
    const Mat Xs = grid1d(1.1, 2.0, 10);
    Vec mean, var;
    model.predict(Xs, mean, var);
    for (int i = 1; i < 10; ++i) CHECK(var(i) > var(i - 1));
}

TEST_CASE("predict_gradient tracks BS delta and vega") {
    // prices against spot -> delta
    {
        const Mat X = grid1d(1.0, 300.0, 50);
        Vec Y(50);
        for (int i = 0; i < 50; ++i)
            Y(i) = bs_price(OptionSide::Call, X(i, 0), 130.0, 0.0002, 2.0, 0.4).price;
        OptimizerCfg opt;
        opt.seed = 21;
        const GpModel model = fit(X, Y, KernelSpec::se(1.0), 1e-2, opt);
        const Mat Xs = grid1d(31.0, 270.0, 60); // central 80% of the domain
        const Mat grad = model.predict_gradient(Xs);
        double err = 0.0;
        for (int i = 0; i < Xs.rows(); ++i) {
            const double delta =
                bs_price(OptionSide::Call, Xs(i, 0), 130.0, 0.0002, 2.0, 0.4).delta;
            err = std::max(err, std::abs(grad(i, 0) - delta));
        }
        CHECK(err <= 2e-2);
    }
    // prices against implied vol -> vega (error relative to the vega scale)
    {
        const Mat X = grid1d(0.05, 1.0, 50);
        Vec Y(50);
        for (int i = 0; i < 50; ++i)
            Y(i) = bs_price(OptionSide::Call, 100.0, 130.0, 0.0002, 2.0, X(i, 0)).price;
        OptimizerCfg opt;
        opt.seed = 22;
        const GpModel model = fit(X, Y, KernelSpec::se(1.0), 1e-2, opt);
        const Mat Xs = grid1d(0.145, 0.905, 60);
        const Mat grad = model.predict_gradient(Xs);
        double err = 0.0, scale = 0.0;
        for (int i = 0; i < Xs.rows(); ++i) {
            const double vega =
                bs_price(OptionSide::Call, 100.0, 130.0, 0.0002, 2.0, Xs(i, 0)).vega;
            err = std::max(err, std::abs(grad(i, 0) - vega));
            scale = std::max(scale, std::abs(vega));
        }
        CHECK(err <= 2e-2 * scale);
    }
}

TEST_CASE("online update equals a full rebuild") {
    for (int n : {5, 15, 30}) {
        const Mat X = random_points(n, 2, static_cast<std::uint64_t>(50 + n));
        const Vec Y = (X.col(0).array() * 1.3).sin() + X.col(1).array();
        const GpModel base = GpModel::condition(X, Y, KernelSpec::se(0.8), 0.05);

        Vec xnew(2);
        xnew << 0.25, -0.4;
        const double ynew = 0.7;
        const GpModel updated = base.online_update(xnew, ynew);

        Mat X2(n + 1, 2);
        X2 << X, xnew.transpose();
        Vec Y2(n + 1);
        Y2 << Y, ynew;
        const GpModel rebuilt = GpModel::condition_mapped(
            X2, Y2, base.kernel(), base.noise(), base.input_map(), base.output_map());

        const Mat Xs = random_points(10, 2, 999);
        Vec m1, v1, m2, v2;
        updated.predict(Xs, m1, v1);
        rebuilt.predict(Xs, m2, v2);
        CHECK((m1 - m2).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((v1 - v2).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("online update: noise-free point is reproduced") {
    // short lengthscale so the midpoint carries real latent variance
    const Mat X = grid1d(0.0, 1.0, 8);
    const Vec Y = X.col(0).array().square();
    const GpModel base = GpModel::condition(X, Y, KernelSpec::se(0.15), 0.0);
    Vec xnew(1);
    xnew << 0.55;
    const GpModel updated = base.online_update(xnew, 2.0);
    Vec mean, var;
    updated.predict(xnew.transpose(), mean, var);
    CHECK(mean(0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(var(0) <= 1e-6);
}

TEST_CASE("online update: redundant point leaves predictions unchanged") {
    const Mat X = grid1d(0.0, 1.0, 8);
    const Vec Y = (3.0 * X.col(0)).array().cos();
    const GpModel base = GpModel::condition(X, Y, KernelSpec::se(0.5), 0.0);
    const GpModel updated = base.online_update(X.row(3).transpose(), Y(3));
    const Mat Xs = grid1d(-0.2, 1.2, 25);
    Vec m1, v1, m2, v2;
    base.predict(Xs, m1, v1);
    updated.predict(Xs, m2, v2);
    CHECK((m1 - m2).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((v1 - v2).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("online update: conflicting duplicate rejected") {
    const Mat X = grid1d(0.0, 1.0, 8);
    const Vec Y = X.col(0);
    const GpModel base = GpModel::condition(X, Y, KernelSpec::se(0.5), 0.0);
    CHECK_THROWS_AS(base.online_update(X.row(3).transpose(), Y(3) + 1.0), NumericError);
}

TEST_CASE("online update never increases predictive variance") {
    const Mat X = random_points(12, 1, 77);
    const Vec Y = X.col(0).array().sin();
    const GpModel base = GpModel::condition(X, Y, KernelSpec::se(0.6), 0.01);
    Vec xnew(1);
    xnew << 0.1;
    const GpModel updated = base.online_update(xnew, 0.12);
    const Mat Xs = grid1d(-2.0, 2.0, 41);
    Vec m1, v1, m2, v2;
    base.predict(Xs, m1, v1);
    updated.predict(Xs, m2, v2);
    for (int i = 0; i < Xs.rows(); ++i) CHECK(v2(i) <= v1(i) + 1e-12);
}

TEST_CASE("rescaled and raw pipelines agree") {
    const Mat X = (random_points(15, 2, 31).array() * 3.0 + 10.0).matrix();
    const Vec Y = 25.0 * (X.col(0).array() * 0.2).sin() + 100.0 + X.col(1).array();

    const AffineMap im = AffineMap::unit_box(X);
    const OutputMap om = OutputMap::centered(Y);
    const double ell = 0.4, var = 1.5, sigma = 0.02;
    const GpModel scaled =
        GpModel::condition_mapped(X, Y, KernelSpec::se(ell, var), sigma, im, om);

    // equivalent raw-space parameters: per-dimension lengthscales stretched
    // by the input scale, variances by the output scale
    Vec ell_raw(2);
    ell_raw << ell * im.scale(0), ell * im.scale(1);
    AffineMap raw_in{im.offset, Vec::Ones(2)};
    OutputMap raw_out{om.offset, 1.0};
    const GpModel raw = GpModel::condition_mapped(
        X, Y, KernelSpec::se_ard(ell_raw, var * om.scale * om.scale), sigma * om.scale, raw_in,
        raw_out);

    const Mat Xs = (random_points(7, 2, 32).array() * 3.0 + 10.0).matrix();
    Vec m1, v1, m2, v2;
    scaled.predict(Xs, m1, v1);
    raw.predict(Xs, m2, v2);
    CHECK((m1 - m2).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((v1 - v2).cwiseAbs().maxCoeff() < 1e-8);
    const Mat g1 = scaled.predict_gradient(Xs);
    const Mat g2 = raw.predict_gradient(Xs);
    CHECK((g1 - g2).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("model invariants: factor and alpha reconstructions") {
    const Mat X = random_points(20, 2, 41);
    const Vec Y = X.col(0).array().sin() - X.col(1).array().cos();
    const GpModel m = GpModel::condition(X, Y, KernelSpec::matern(2.5, 0.7), 0.1);

    const AffineMap& im = m.input_map();
    Mat K = kernel_matrix(m.kernel(), im.forward(X));
    K.diagonal().array() += m.noise() * m.noise() + m.jitter();
    const Mat rec = m.chol_factor() * m.chol_factor().transpose();
    CHECK((rec - K).cwiseAbs().maxCoeff() / K.cwiseAbs().maxCoeff() < 1e-10);

    const Vec ys = (Y.array() - m.output_map().offset) / m.output_map().scale;
    CHECK((K * m.alpha() - ys).cwiseAbs().maxCoeff() /
              std::max(ys.cwiseAbs().maxCoeff(), 1e-12) <
          1e-8);
}

TEST_CASE("serialization round trip predicts identically") {
    const Mat X = random_points(12, 2, 61);
    const Vec Y = X.col(0).array().exp() * 0.1 + X.col(1).array();
    const GpModel m = GpModel::condition(
        X, Y, KernelSpec::sum({KernelSpec::linear(0.2), KernelSpec::se(0.6)}), 0.05);
    const json j = gp_to_json(m);
    const GpModel loaded = gp_from_json(j);
    const Mat Xs = random_points(9, 2, 62);
    Vec m1, v1, m2, v2;
    m.predict(Xs, m1, v1);
    loaded.predict(Xs, m2, v2);
    CHECK((m1 - m2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((v1 - v2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit input validation") {
    Mat X(1, 1);
    X << 0.0;
    Vec Y(1);
    Y << 1.0;
    CHECK_THROWS_AS(fit(X, Y, KernelSpec::se(1.0), 0.1), ValidationError);
    Mat X2 = grid1d(0.0, 1.0, 5);
    Vec bad = Vec::Constant(5, std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_AS(fit(X2, bad, KernelSpec::se(1.0), 0.1), ValidationError);
}
