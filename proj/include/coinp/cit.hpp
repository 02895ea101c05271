#pragma once

#include "coinp/dataset.hpp"
#include "coinp/learners.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coinp {

enum class Method { coinp, approx_coinp, cpi, approx_cpi };

std::string to_string(Method m);
Method parse_method(const std::string& name);
inline constexpr bool is_rank_method(Method m) { return m == Method::coinp || m == Method::approx_coinp; }

struct TestConfig {
    FeatureSet s;
    std::size_t b = 100;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    // (1 + count) / (1 + B) instead of count / B
    bool smoothed_pvalue = false;
    // threads for the B refits of coinp; results do not depend on it
    std::size_t workers = 1;

    void validate() const;
};

struct TestResult {
    double p_value = 1.0;
    Method method = Method::coinp;
    double observed_risk = 0.0;
    std::optional<std::vector<double>> permuted_risks; // rank methods
    std::optional<double> t_statistic;                 // t-test methods
    std::optional<std::size_t> degrees_of_freedom;
    std::size_t fit_count = 0;

    [[nodiscard]] bool rejects(double alpha) const noexcept { return p_value <= alpha; }
};

// The row permutations a test applies to the S columns: train[j] and holdout[j]
// are used in iteration j (the t-test methods only use index 0).
struct PermutationPlan {
    std::vector<Permutation> train;
    std::vector<Permutation> holdout;
};

// count independent train and holdout permutations derived from `seed`
PermutationPlan draw_permutations(std::uint64_t seed, std::size_t count, std::size_t n_train, std::size_t n_holdout);

// Conditional independence predictive test: rank of the holdout risk of a(Z)
// among the holdout risks of a(Z^pi_j) on permuted holdouts, j = 1..B.
TestResult coinp_test(const Learner& learner, const Dataset& train, const Dataset& holdout, const TestConfig& cfg);
TestResult coinp_test(const Learner& learner, const Dataset& train, const Dataset& holdout, const TestConfig& cfg,
                      const PermutationPlan& plan);

// As coinp_test but the model is fit once; only the holdout is permuted.
TestResult approx_coinp_test(const Learner& learner, const Dataset& train, const Dataset& holdout,
                             const TestConfig& cfg);
TestResult approx_coinp_test(const Learner& learner, const Dataset& train, const Dataset& holdout,
                             const TestConfig& cfg, const PermutationPlan& plan);

// Paired one-sided t-test on holdout losses of a(Z^pi) on the permuted
// holdout minus those of a(Z) on the original holdout.
TestResult cpi_test(const Learner& learner, const Dataset& train, const Dataset& holdout, const TestConfig& cfg);
TestResult cpi_test(const Learner& learner, const Dataset& train, const Dataset& holdout, const TestConfig& cfg,
                    const PermutationPlan& plan);

// As cpi_test with a single fit reused on the permuted holdout.
TestResult approx_cpi_test(const Learner& learner, const Dataset& train, const Dataset& holdout,
                           const TestConfig& cfg);
TestResult approx_cpi_test(const Learner& learner, const Dataset& train, const Dataset& holdout,
                           const TestConfig& cfg, const PermutationPlan& plan);

TestResult run_test(Method method, const Learner& learner, const Dataset& train, const Dataset& holdout,
                    const TestConfig& cfg);

// |{j : observed >= permuted[j]}| / B, ties counting toward the numerator.
double rank_pvalue(double observed, std::span<const double> permuted, bool smoothed = false);

struct PairedTTest {
    double p_value;
    double t_statistic;
    std::size_t degrees_of_freedom;
};

// One-sided test of mean(d) > 0. With zero sample variance the p-value is 0
// when mean(d) > 0 and 1 otherwise.
PairedTTest paired_t_pvalue(std::span<const double> differences);

// Paired t p-value and rank p-value from precomputed loss traces; used by the
// tests above and handy for studying how each statistic reacts to outliers.
PairedTTest cpi_from_losses(std::span<const double> original_losses, std::span<const double> permuted_losses);
double coinp_from_losses(std::span<const double> original_losses,
                         const std::vector<std::vector<double>>& permuted_losses, bool smoothed = false);

} // namespace coinp
