#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "coinp/forest.hpp"
#include "coinp/learners.hpp"
#include "coinp/mlp.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace coinp;
using coinp::testing::random_linear;

namespace {

// Solves (A^T A) b = A^T y for A = [1, X] by Gaussian elimination with
// partial pivoting. Returns intercept followed by slopes.
std::vector<double> normal_equations(const Matrix& x, const Vector& y)
{
    const auto n = static_cast<std::size_t>(x.rows());
    const auto k = static_cast<std::size_t>(x.cols()) + 1;
    auto a = [&](std::size_t i, std::size_t j) {
        return j == 0 ? 1.0 : x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1));
    };
    std::vector<std::vector<double>> m(k, std::vector<double>(k + 1, 0.0));
    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t i = 0; i < n; ++i)
                m[r][c] += a(i, r) * a(i, c);
        for (std::size_t i = 0; i < n; ++i)
            m[r][k] += a(i, r) * y(static_cast<Eigen::Index>(i));
    }
    for (std::size_t col = 0; col < k; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < k; ++r)
            if (std::fabs(m[r][col]) > std::fabs(m[piv][col]))
                piv = r;
        std::swap(m[col], m[piv]);
        for (std::size_t r = 0; r < k; ++r) {
            if (r == col)
                continue;
            const double f = m[r][col] / m[col][col];
            for (std::size_t c = col; c <= k; ++c)
                m[r][c] -= f * m[col][c];
        }
    }
    std::vector<double> b(k);
    for (std::size_t r = 0; r < k; ++r)
        b[r] = m[r][k] / m[r][r];
    return b;
}

Dataset one_feature(std::vector<double> xs, std::vector<double> ys)
{
    Matrix x(static_cast<Eigen::Index>(xs.size()), 1);
    Vector y(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        x(static_cast<Eigen::Index>(i), 0) = xs[i];
        y(static_cast<Eigen::Index>(i)) = ys[i];
    }
    return {x, y};
}

double mse(const Predictor& f, const Dataset& d) { return empirical_risk(f, d).value; }

double variance(const Vector& v) { return (v.array() - v.mean()).square().mean(); }

} // namespace

TEST_CASE("ols exact line and constant labels")
{
    const auto f = fit_ols(one_feature({0, 1, 2}, {0, 2, 4}));
    CHECK(f->coefficients()(0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(std::fabs(f->intercept()) < 1e-13);
    const double row[] = {5.0};
    CHECK(f->predict(row) == doctest::Approx(10.0));

    const auto c = fit_ols(Dataset(random_linear(6, {1.0, 2.0}, 0.0, 1).features(), Vector::Constant(6, 3.5)));
    const auto probe = random_linear(4, {0.0, 0.0}, 0.0, 2);
    for (double v : c->predict(probe.features()))
        CHECK(v == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("ols agrees with the normal equations")
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto d = random_linear(50, {0.5, -1.5, 2.0}, 0.7, seed);
        const auto f = fit_ols(d);
        const auto oracle = normal_equations(d.features(), d.labels());
        CHECK(std::fabs(f->intercept() - oracle[0]) < 1e-8);
        for (Eigen::Index j = 0; j < 3; ++j)
            CHECK(std::fabs(f->coefficients()(j) - oracle[static_cast<std::size_t>(j) + 1]) < 1e-8);
    }
}

TEST_CASE("ols residuals are orthogonal to the design")
{
    const auto d = random_linear(400, {1.0, 0.3, -0.2, 4.0}, 1.0, 5);
    const auto f = fit_ols(d);
    const Vector r = d.labels() - f->predict(d.features());
    const double n = static_cast<double>(d.rows());
    CHECK(std::fabs(r.sum()) < 1e-8 * n);
    for (Eigen::Index j = 0; j < d.features().cols(); ++j)
        CHECK(std::fabs(d.features().col(j).dot(r)) < 1e-8 * n);
}

TEST_CASE("ols is invariant to training row order")
{
    const auto d = random_linear(60, {1.0, -1.0}, 0.5, 9);
    std::vector<std::size_t> rev(d.rows());
    std::iota(rev.rbegin(), rev.rend(), std::size_t{0});
    const auto a = fit_ols(d);
    const auto b = fit_ols(d.select_rows(rev));
    CHECK((a->coefficients() - b->coefficients()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ols rank deficiency gives the minimum norm solution")
{
    auto base = random_linear(30, {2.0}, 0.0, 3);
    Matrix x(30, 2);
    x.col(0) = base.features().col(0);
    x.col(1) = base.features().col(0);
    const auto f = fit_ols(Dataset(x, base.labels()));
    // the weight 2 is split evenly between the duplicated columns
    CHECK(f->coefficients()(0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(f->coefficients()(1) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(fit_ols(Dataset(Matrix(0, 2), Vector(0))), std::invalid_argument);
}

TEST_CASE("squared loss, pointwise losses and risk")
{
    CHECK(squared_loss(2, 2) == 0.0);
    CHECK(squared_loss(1, 3) == 4.0);
    CHECK(squared_loss(-1, 2) == 9.0);

    const OlsPredictor zero(0.0, Vector::Zero(1));
    const auto d12 = one_feature({7, 8}, {1, 2});
    CHECK(pointwise_losses(zero, d12) == Vector{{1.0, 4.0}});
    const auto d123 = one_feature({7, 8, 9}, {1, 2, 3});
    CHECK(empirical_risk(zero, d123).value == doctest::Approx(14.0 / 3.0).epsilon(1e-15));
    CHECK(empirical_risk(zero, d123).n_holdout == 3);
    const OlsPredictor perfect(0.0, Vector::Ones(1));
    CHECK(empirical_risk(perfect, one_feature({1, 2, 3}, {1, 2, 3})).value == 0.0);

    const auto d = random_linear(37, {1.0, 2.0}, 1.0, 4);
    const auto f = fit_ols(random_linear(50, {1.0, 2.0}, 1.0, 8));
    CHECK(std::fabs(pointwise_losses(*f, d).mean() - empirical_risk(*f, d).value) < 1e-12);
    std::vector<std::size_t> rev(d.rows());
    std::iota(rev.rbegin(), rev.rend(), std::size_t{0});
    CHECK(std::fabs(empirical_risk(*f, d.select_rows(rev)).value - empirical_risk(*f, d).value) < 1e-12);
    CHECK_THROWS_AS(empirical_risk(*f, d.select_rows(std::vector<std::size_t>{})), std::invalid_argument);
    CHECK_THROWS_AS(pointwise_losses(*f, d.select_rows(std::vector<std::size_t>{})), std::invalid_argument);
}

TEST_CASE("single unbootstrapped tree interpolates distinct points")
{
    const auto d = random_linear(80, {1.0, -2.0, 0.5}, 0.5, 21);
    ForestParams p;
    p.n_trees = 1;
    p.bootstrap = false;
    const auto f = fit_forest(d, p, 3);
    const Vector pred = f->predict(d.features());
    CHECK((pred - d.labels()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forest is the mean of its trees and deterministic per seed")
{
    const auto d = random_linear(120, {1.0, 1.0, 0.0}, 0.3, 22);
    ForestParams p;
    p.n_trees = 15;
    p.max_features = 0.5;
    p.min_samples_leaf = 3;
    const auto f = fit_forest(d, p, 77);
    const auto g = fit_forest(d, p, 77);
    const auto h = fit_forest(d, p, 78);
    const auto probe = random_linear(30, {0, 0, 0}, 0.0, 99);
    bool differs = false;
    for (Eigen::Index i = 0; i < probe.features().rows(); ++i) {
        const Eigen::VectorXd row = probe.features().row(i);
        const std::span<const double> r(row.data(), static_cast<std::size_t>(row.size()));
        double sum = 0.0;
        for (const auto& t : f->trees())
            sum += t.predict(r);
        CHECK(f->predict(r) == doctest::Approx(sum / 15.0).epsilon(1e-14));
        CHECK(f->predict(r) == g->predict(r));
        differs = differs || f->predict(r) != h->predict(r);
    }
    CHECK(differs);
}

TEST_CASE("forest tree shape parameters")
{
    const auto d = random_linear(200, {1.0, 2.0}, 0.5, 23);
    ForestParams p;
    p.n_trees = 3;
    p.max_depth = 2;
    const auto shallow = fit_forest(d, p, 1);
    for (const auto& t : shallow->trees()) {
        CHECK(t.depth() <= 2);
        CHECK(t.node_count() <= 7);
    }
    ForestParams leafy;
    leafy.n_trees = 1;
    leafy.bootstrap = false;
    leafy.min_samples_leaf = 200;
    const auto stump = fit_forest(d, leafy, 1);
    CHECK(stump->trees()[0].node_count() == 1);
    const double row[] = {0.0, 0.0};
    CHECK(stump->predict(row) == doctest::Approx(d.labels().mean()).epsilon(1e-12));

    ForestParams bad;
    bad.n_trees = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.max_features = 0.0;
    CHECK_THROWS_AS(ForestLearner(bad, 1), std::invalid_argument);
    bad.max_features = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("forest ignores a pure-noise feature")
{
    // step function of x1 plus noise; x2 is independent noise
    Rng rng(31);
    auto make = [&](std::size_t n) {
        Matrix x(static_cast<Eigen::Index>(n), 2);
        Vector y(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            x(i, 0) = rng.uniform();
            x(i, 1) = rng.uniform();
            y(i) = (x(i, 0) > 0.5 ? 2.0 : 0.0) + 0.5 * rng.normal();
        }
        return Dataset(x, y);
    };
    const auto train = make(600);
    const auto test = make(2000);
    ForestParams p;
    p.n_trees = 50;
    const auto both = fit_forest(train, p, 5);
    const std::size_t first[] = {0};
    const auto alone = fit_forest(train.select_columns(first), p, 5);
    const double gap = std::fabs(mse(*both, test) - mse(*alone, test.select_columns(first)));
    CHECK(gap < 0.2 * variance(test.labels()));
}

TEST_CASE("mlp learns a noise-free line")
{
    Rng rng(41);
    auto make = [&](std::size_t n) {
        Matrix x(static_cast<Eigen::Index>(n), 1);
        Vector y(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            x(i, 0) = 2.0 * rng.uniform() - 1.0;
            y(i) = 3.0 * x(i, 0) + 1.0;
        }
        return Dataset(x, y);
    };
    const auto train = make(500);
    const auto test = make(500);
    const MlpParams params;
    const auto f = fit_mlp(train, params, 7);
    CHECK(mse(*f, test) < 0.05);
    // same inputs, same seed: same predictions
    const auto g = fit_mlp(train, params, 7);
    CHECK(f->predict(test.features()) == g->predict(test.features()));
}

TEST_CASE("mlp with the paper switches still trains")
{
    const auto train = random_linear(300, {1.0, -1.0}, 0.1, 42);
    const auto test = random_linear(300, {1.0, -1.0}, 0.1, 43);
    auto params = MlpParams::paper();
    params.max_epochs = 60;
    params.hidden_layers = {16, 16};
    const auto f = fit_mlp_network(train, params, 2);
    CHECK(f->epochs_run() >= 1);
    CHECK(mse(*f, test) < variance(test.labels()));
}

TEST_CASE("mlp degenerate configurations")
{
    const auto d = random_linear(50, {1.0}, 0.1, 44);
    MlpParams p;
    p.max_epochs = 0;
    CHECK_THROWS_AS(fit_mlp(d, p, 1), std::invalid_argument);
    CHECK_THROWS_AS(MlpLearner(p, 1), std::invalid_argument);
    p = {};
    p.dropout_rate = 1.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = {};
    p.validation_fraction = 0.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = {};
    p.hidden_layers = {4, 0};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    CHECK_THROWS(fit_mlp(random_linear(5, {1.0}, 0.1, 45), MlpParams{}, 1));

    const auto paper = MlpParams::paper();
    CHECK(paper.hidden_layers == std::vector<std::size_t>(5, 100));
    CHECK(paper.batch_norm);
    CHECK(paper.patience == 50);
    CHECK(paper.validation_fraction == 0.1);
}

namespace {

// Max relative error of the analytic gradient against central differences.
// Biases feeding a batch-norm layer have an exactly zero gradient, so the
// denominator is floored at a small fraction of the largest component.
double gradient_error(MlpNetwork& net, const Matrix& x, const Vector& y, std::uint64_t mask_seed)
{
    Vector grad;
    Rng r0(mask_seed);
    net.loss_and_gradient(x, y, grad, &r0);
    const Vector theta = net.parameters();
    const double floor = 1e-5 * grad.cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        const double h = 1e-5 * std::max(1.0, std::fabs(theta(k)));
        Vector tp = theta, tm = theta;
        tp(k) += h;
        tm(k) -= h;
        net.set_parameters(tp);
        Rng rp(mask_seed);
        const double lp = net.loss(x, y, &rp);
        net.set_parameters(tm);
        Rng rm(mask_seed);
        const double lm = net.loss(x, y, &rm);
        const double numeric = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::fabs(numeric), std::fabs(grad(k)), floor});
        worst = std::max(worst, std::fabs(numeric - grad(k)) / denom);
    }
    net.set_parameters(theta);
    return worst;
}

} // namespace

TEST_CASE("mlp gradient matches central differences")
{
    const auto d = random_linear(5, {0.8, -0.4, 0.3}, 0.2, 51);
    SUBCASE("plain, 2 hidden units")
    {
        MlpNetwork net(3, {2}, false, 0.0);
        Rng init(1);
        net.initialize(init);
        CHECK(gradient_error(net, d.features(), d.labels(), 0) < 1e-4);
    }
    SUBCASE("two hidden layers")
    {
        MlpNetwork net(3, {2, 3}, false, 0.0);
        Rng init(2);
        net.initialize(init);
        CHECK(gradient_error(net, d.features(), d.labels(), 0) < 1e-4);
    }
    SUBCASE("batch norm")
    {
        MlpNetwork net(3, {2, 2}, true, 0.0);
        Rng init(3);
        net.initialize(init);
        CHECK(gradient_error(net, d.features(), d.labels(), 0) < 1e-4);
    }
    SUBCASE("dropout with fixed masks")
    {
        MlpNetwork net(3, {2, 2}, false, 0.3);
        Rng init(3);
        net.initialize(init);
        CHECK(gradient_error(net, d.features(), d.labels(), 99) < 1e-4);
    }
    SUBCASE("batch norm and dropout with fixed masks")
    {
        MlpNetwork net(3, {2, 2}, true, 0.3);
        Rng init(3);
        net.initialize(init);
        CHECK(gradient_error(net, d.features(), d.labels(), 99) < 1e-4);
    }
}

TEST_CASE("mean learner and learner factory")
{
    const auto d = random_linear(10, {1.0}, 1.0, 61);
    const auto f = MeanLearner{}.fit(d);
    const double row[] = {123.0};
    CHECK(f->predict(row) == doctest::Approx(d.labels().mean()).epsilon(1e-14));

    CHECK(make_learner({LearnerKind::ols, "", {}, {}}, 1)->name() == "ols");
    CHECK(make_learner({LearnerKind::random_forest, "", {}, {}}, 1)->name() == "random_forest");
    CHECK(make_learner({LearnerKind::mlp, "", {}, {}}, 1)->name() == "mlp");
    CHECK(LearnerSpec{LearnerKind::random_forest, "rf300", {}, {}}.label() == "rf300");
    CHECK(parse_learner_kind("mlp") == LearnerKind::mlp);
    CHECK_THROWS_AS(parse_learner_kind("svm"), std::invalid_argument);
}
