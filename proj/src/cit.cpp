#include "coinp/cit.hpp"

#include "coinp/distributions.hpp"
#include "coinp/rng.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

namespace coinp {

std::string to_string(Method m)
{
    switch (m) {
    case Method::coinp: return "coinp";
    case Method::approx_coinp: return "approx_coinp";
    case Method::cpi: return "cpi";
    case Method::approx_cpi: return "approx_cpi";
    }
    return "unknown";
}

Method parse_method(const std::string& name)
{
    if (name == "coinp")
        return Method::coinp;
    if (name == "approx_coinp")
        return Method::approx_coinp;
    if (name == "cpi")
        return Method::cpi;
    if (name == "approx_cpi")
        return Method::approx_cpi;
    throw std::invalid_argument("unknown method '" + name + "' (expected coinp, approx_coinp, cpi or approx_cpi)");
}

void TestConfig::validate() const
{
    if (b < 1)
        throw std::invalid_argument("number of permutations B must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("alpha must lie in (0, 1)");
    if (s.empty())
        throw std::invalid_argument("tested feature set is empty");
}

PermutationPlan draw_permutations(std::uint64_t seed, std::size_t count, std::size_t n_train, std::size_t n_holdout)
{
    PermutationPlan plan;
    plan.train.reserve(count);
    plan.holdout.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        plan.train.push_back(sample_permutation(n_train, derive_seed(seed, 2 * j)));
        plan.holdout.push_back(sample_permutation(n_holdout, derive_seed(seed, 2 * j + 1)));
    }
    return plan;
}

namespace {

void check_inputs(const Dataset& train, const Dataset& holdout, const TestConfig& cfg)
{
    cfg.validate();
    if (train.cols() != holdout.cols())
        throw std::invalid_argument("train and holdout have different column counts");
    cfg.s.validate(train.cols());
    if (holdout.rows() == 0)
        throw std::invalid_argument("holdout dataset is empty");
}

void check_plan(const PermutationPlan& plan, std::size_t needed, const Dataset& train, const Dataset& holdout,
                bool needs_train)
{
    if (plan.holdout.size() < needed || (needs_train && plan.train.size() < needed))
        throw std::invalid_argument("permutation plan has fewer permutations than required");
    for (std::size_t j = 0; j < needed; ++j) {
        if (plan.holdout[j].size() != holdout.rows() || !plan.holdout[j].is_valid())
            throw std::invalid_argument("holdout permutation " + std::to_string(j) + " is invalid");
        if (needs_train && (plan.train[j].size() != train.rows() || !plan.train[j].is_valid()))
            throw std::invalid_argument("train permutation " + std::to_string(j) + " is invalid");
    }
}

PredictorPtr fit_annotated(const Learner& learner, const Dataset& data, const std::string& what)
{
    try {
        return learner.fit(data);
    } catch (const std::exception& e) {
        throw FitError(learner.name() + " fit failed on " + what + ": " + e.what());
    }
}

// Runs body(j) for j in [0, count) on up to `workers` threads. The first
// failure by index is rethrown after all threads finish.
template <typename Body>
void for_each_index(std::size_t count, std::size_t workers, Body body)
{
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t j = 0; j < count; ++j)
            body(j);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t j = next++; j < count; j = next++) {
                try {
                    body(j);
                } catch (...) {
                    errors[j] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

} // namespace

double rank_pvalue(double observed, std::span<const double> permuted, bool smoothed)
{
    if (permuted.empty())
        throw std::invalid_argument("rank p-value needs at least one permuted risk");
    std::size_t count = 0;
    for (double r : permuted) {
        if (!std::isfinite(r))
            throw std::invalid_argument("permuted risks must be finite");
        if (observed >= r)
            ++count;
    }
    const auto b = static_cast<double>(permuted.size());
    if (smoothed)
        return (1.0 + static_cast<double>(count)) / (1.0 + b);
    return static_cast<double>(count) / b;
}

PairedTTest paired_t_pvalue(std::span<const double> d)
{
    const std::size_t m = d.size();
    if (m < 2)
        throw std::invalid_argument("paired t-test needs at least 2 differences");
    const double md = static_cast<double>(m);
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / md;
    double ss = 0.0;
    for (double x : d)
        ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (md - 1.0));
    const std::size_t df = m - 1;
    if (!(sd > 0.0)) {
        if (mean > 0.0)
            return {0.0, std::numeric_limits<double>::infinity(), df};
        return {1.0, mean < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0, df};
    }
    const double t = mean / (sd / std::sqrt(md));
    return {student_t_sf(t, df), t, df};
}

PairedTTest cpi_from_losses(std::span<const double> original_losses, std::span<const double> permuted_losses)
{
    if (original_losses.size() != permuted_losses.size())
        throw std::invalid_argument("loss traces differ in length");
    std::vector<double> d(original_losses.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = permuted_losses[i] - original_losses[i];
    return paired_t_pvalue(d);
}

double coinp_from_losses(std::span<const double> original_losses,
                         const std::vector<std::vector<double>>& permuted_losses, bool smoothed)
{
    auto mean = [](std::span<const double> v) {
        if (v.empty())
            throw std::invalid_argument("empty loss trace");
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    std::vector<double> risks;
    risks.reserve(permuted_losses.size());
    for (const auto& trace : permuted_losses)
        risks.push_back(mean(trace));
    return rank_pvalue(mean(original_losses), risks, smoothed);
}

TestResult coinp_test(const Learner& learner, const Dataset& train, const Dataset& holdout, const TestConfig& cfg)
{
    check_inputs(train, holdout, cfg);
    return coinp_test(learner, train, holdout, cfg, draw_permutations(cfg.seed, cfg.b, train.rows(), holdout.rows()));
}

TestResult coinp_test(const Learner& learner, const Dataset& train, const Dataset& holdout, const TestConfig& cfg,
                      const PermutationPlan& plan)
{
    check_inputs(train, holdout, cfg);
    check_plan(plan, cfg.b, train, holdout, true);

    TestResult result;
    result.method = Method::coinp;
    const auto f = fit_annotated(learner, train, "original data");
    result.observed_risk = empirical_risk(*f, holdout).value;

    std::vector<double> risks(cfg.b);
    for_each_index(cfg.b, cfg.workers, [&](std::size_t j) {
        const auto fj = fit_annotated(learner, permute_columns(train, cfg.s, plan.train[j]),
                                      "permutation " + std::to_string(j + 1));
        risks[j] = empirical_risk(*fj, permute_columns(holdout, cfg.s, plan.holdout[j])).value;
    });
    result.p_value = rank_pvalue(result.observed_risk, risks, cfg.smoothed_pvalue);
    result.permuted_risks = std::move(risks);
    result.fit_count = 1 + cfg.b;
    return result;
}

TestResult approx_coinp_test(const Learner& learner, const Dataset& train, const Dataset& holdout,
                             const TestConfig& cfg)
{
    check_inputs(train, holdout, cfg);
    return approx_coinp_test(learner, train, holdout, cfg,
                             draw_permutations(cfg.seed, cfg.b, train.rows(), holdout.rows()));
}

TestResult approx_coinp_test(const Learner& learner, const Dataset& train, const Dataset& holdout,
                             const TestConfig& cfg, const PermutationPlan& plan)
{
    check_inputs(train, holdout, cfg);
    check_plan(plan, cfg.b, train, holdout, false);

    TestResult result;
    result.method = Method::approx_coinp;
    const auto f = fit_annotated(learner, train, "original data");
    result.observed_risk = empirical_risk(*f, holdout).value;
    std::vector<double> risks(cfg.b);
    for (std::size_t j = 0; j < cfg.b; ++j)
        risks[j] = empirical_risk(*f, permute_columns(holdout, cfg.s, plan.holdout[j])).value;
    result.p_value = rank_pvalue(result.observed_risk, risks, cfg.smoothed_pvalue);
    result.permuted_risks = std::move(risks);
    result.fit_count = 1;
    return result;
}

namespace {

TestResult t_result(Method method, const Vector& original, const Vector& permuted)
{
    if (original.size() < 2)
        throw std::invalid_argument("t-test methods need at least 2 holdout rows");
    const auto t = cpi_from_losses(to_std(original), to_std(permuted));
    TestResult result;
    result.method = method;
    result.observed_risk = original.mean();
    result.p_value = t.p_value;
    result.t_statistic = t.t_statistic;
    result.degrees_of_freedom = t.degrees_of_freedom;
    return result;
}

} // namespace

TestResult cpi_test(const Learner& learner, const Dataset& train, const Dataset& holdout, const TestConfig& cfg)
{
    check_inputs(train, holdout, cfg);
    return cpi_test(learner, train, holdout, cfg, draw_permutations(cfg.seed, 1, train.rows(), holdout.rows()));
}

TestResult cpi_test(const Learner& learner, const Dataset& train, const Dataset& holdout, const TestConfig& cfg,
                    const PermutationPlan& plan)
{
    check_inputs(train, holdout, cfg);
    check_plan(plan, 1, train, holdout, true);
    const auto f = fit_annotated(learner, train, "original data");
    const auto f1 = fit_annotated(learner, permute_columns(train, cfg.s, plan.train[0]), "permutation 1");
    const Vector original = pointwise_losses(*f, holdout);
    const Vector permuted = pointwise_losses(*f1, permute_columns(holdout, cfg.s, plan.holdout[0]));
    auto result = t_result(Method::cpi, original, permuted);
    result.fit_count = 2;
    return result;
}

TestResult approx_cpi_test(const Learner& learner, const Dataset& train, const Dataset& holdout,
                           const TestConfig& cfg)
{
    check_inputs(train, holdout, cfg);
    return approx_cpi_test(learner, train, holdout, cfg, draw_permutations(cfg.seed, 1, train.rows(), holdout.rows()));
}

TestResult approx_cpi_test(const Learner& learner, const Dataset& train, const Dataset& holdout,
                           const TestConfig& cfg, const PermutationPlan& plan)
{
    check_inputs(train, holdout, cfg);
    check_plan(plan, 1, train, holdout, false);
    const auto f = fit_annotated(learner, train, "original data");
    const Vector original = pointwise_losses(*f, holdout);
    const Vector permuted = pointwise_losses(*f, permute_columns(holdout, cfg.s, plan.holdout[0]));
    auto result = t_result(Method::approx_cpi, original, permuted);
    result.fit_count = 1;
    return result;
}

TestResult run_test(Method method, const Learner& learner, const Dataset& train, const Dataset& holdout,
                    const TestConfig& cfg)
{
    switch (method) {
    case Method::coinp: return coinp_test(learner, train, holdout, cfg);
    case Method::approx_coinp: return approx_coinp_test(learner, train, holdout, cfg);
    case Method::cpi: return cpi_test(learner, train, holdout, cfg);
    case Method::approx_cpi: return approx_cpi_test(learner, train, holdout, cfg);
    }
    throw std::invalid_argument("unknown method");
}

} // namespace coinp
