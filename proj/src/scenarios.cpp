#include "coinp/scenarios.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace coinp {

std::string to_string(ScenarioId id)
{
    switch (id) {
    case ScenarioId::dist1: return "dist1";
    case ScenarioId::dist2: return "dist2";
    case ScenarioId::dist3: return "dist3";
    case ScenarioId::dist4: return "dist4";
    }
    return "unknown";
}

ScenarioId parse_scenario(const std::string& name)
{
    if (name == "dist1")
        return ScenarioId::dist1;
    if (name == "dist2")
        return ScenarioId::dist2;
    if (name == "dist3")
        return ScenarioId::dist3;
    if (name == "dist4")
        return ScenarioId::dist4;
    throw std::invalid_argument("unknown scenario '" + name + "' (expected dist1..dist4)");
}

double sample_skew_normal(const SknParams& p, Rng& rng)
{
    if (!(p.scale > 0.0))
        throw std::invalid_argument("skew normal scale must be > 0");
    const double delta = p.shape / std::sqrt(1.0 + p.shape * p.shape);
    const double u0 = rng.normal();
    const double u1 = rng.normal();
    return p.location + p.scale * (delta * std::fabs(u0) + std::sqrt(1.0 - delta * delta) * u1);
}

double sample_beta(double a, double b, Rng& rng)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw std::invalid_argument("beta parameters must be > 0");
    const double ga = rng.gamma(a);
    const double gb = rng.gamma(b);
    return ga / (ga + gb);
}

std::pair<double, double> sample_correlated_normal_pair(double cov01, Rng& rng)
{
    if (!(std::fabs(cov01) < 1.0))
        throw std::invalid_argument("covariance must satisfy |cov01| < 1 for unit variances");
    // lower Cholesky factor of [[1, c], [c, 1]]
    const double u0 = rng.normal();
    const double u1 = rng.normal();
    return {u0, cov01 * u0 + std::sqrt(1.0 - cov01 * cov01) * u1};
}

namespace {

constexpr SknParams kLatent{0.0, 0.1, 2.0};
constexpr SknParams kNoise{-0.3, 1.1, 2.0};

std::array<double, 5> five_betas(double beta_s) { return {0.7, 0.16, 0.39, beta_s, 0.75}; }

// |a|^1.3, cos b, log|a c|, log|c|, sqrt|d|
std::array<double, 5> transform(double a, double b, double c, double d)
{
    return {std::pow(std::fabs(a), 1.3), std::cos(b), std::log(std::fabs(a * c)), std::log(std::fabs(c)),
            std::sqrt(std::fabs(d))};
}

GeneratedData generate_dist1(const ScenarioConfig& cfg, Rng& rng)
{
    const auto beta = five_betas(cfg.beta_s);
    const auto& observed = cfg.options.dist1_observed;
    if (observed.empty())
        throw std::invalid_argument("dist1_observed must list at least one column");
    for (auto j : observed)
        if (j >= 5)
            throw std::invalid_argument("dist1_observed index " + std::to_string(j) + " out of range [0, 5)");
    auto s_pos = std::find(observed.begin(), observed.end(), std::size_t{3});
    if (s_pos == observed.end())
        throw std::invalid_argument("dist1_observed must include column 3 (the tested feature X4)");

    const auto n = static_cast<Eigen::Index>(cfg.n);
    Matrix x(n, 5);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::array<double, 5> z{};
        for (auto& v : z)
            v = sample_skew_normal(kLatent, rng);
        const auto row = transform(z[0], z[1], z[2], z[3]);
        double yi = sample_skew_normal(kNoise, rng);
        for (std::size_t j = 0; j < 5; ++j) {
            x(i, static_cast<Eigen::Index>(j)) = row[j];
            yi += beta[j] * row[j];
        }
        y(i) = yi;
    }
    Dataset full(std::move(x), std::move(y));
    return {full.select_columns(observed), FeatureSet{static_cast<std::size_t>(s_pos - observed.begin())}};
}

GeneratedData generate_dist2(const ScenarioConfig& cfg, Rng& rng)
{
    const auto beta = five_betas(cfg.beta_s);
    const auto n = static_cast<Eigen::Index>(cfg.n);
    Matrix x(n, 5);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::array<double, 5> xi{};
        for (auto& v : xi)
            v = sample_skew_normal(kLatent, rng);
        const auto z = transform(xi[0], xi[1], xi[2], xi[3]);
        double yi = sample_skew_normal(kNoise, rng);
        for (std::size_t j = 0; j < 5; ++j) {
            x(i, static_cast<Eigen::Index>(j)) = xi[j];
            yi += beta[j] * z[j];
        }
        y(i) = yi;
    }
    return {Dataset(std::move(x), std::move(y)), FeatureSet{3}};
}

GeneratedData generate_dist3(const ScenarioConfig& cfg, Rng& rng)
{
    const double noise_sd = cfg.options.dist3_noise_is_variance ? std::sqrt(0.5) : 0.5;
    const auto n = static_cast<Eigen::Index>(cfg.n);
    Matrix x(n, 2);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto [x1, x2] = sample_correlated_normal_pair(0.9, rng);
        x(i, 0) = x1;
        x(i, 1) = x2;
        y(i) = 3.0 * x1 + cfg.beta_s * x2 + noise_sd * rng.normal();
    }
    return {Dataset(std::move(x), std::move(y)), FeatureSet{1}};
}

GeneratedData generate_dist4(const ScenarioConfig& cfg, Rng& rng)
{
    const auto n = static_cast<Eigen::Index>(cfg.n);
    Matrix x(n, 2);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z = -0.5 + rng.normal();
        const double x1 = z + sample_beta(1.0, 1.0, rng);
        const double x2 = z + sample_beta(1.0, 1.0, rng);
        x(i, 0) = x1;
        x(i, 1) = x2;
        y(i) = 3.0 * x1 + cfg.beta_s * x2 + sample_beta(2.0, 2.0, rng);
    }
    return {Dataset(std::move(x), std::move(y)), FeatureSet{1}};
}

} // namespace

GeneratedData generate(const ScenarioConfig& cfg)
{
    if (cfg.n < 1)
        throw std::invalid_argument("scenario needs n >= 1");
    if (!std::isfinite(cfg.beta_s))
        throw std::invalid_argument("beta_s must be finite");
    Rng rng(cfg.seed);
    switch (cfg.id) {
    case ScenarioId::dist1: return generate_dist1(cfg, rng);
    case ScenarioId::dist2: return generate_dist2(cfg, rng);
    case ScenarioId::dist3: return generate_dist3(cfg, rng);
    case ScenarioId::dist4: return generate_dist4(cfg, rng);
    }
    throw std::invalid_argument("unknown scenario id");
}

} // namespace coinp
