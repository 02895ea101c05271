#pragma once

#include "coinp/dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace coinp {

// A learner could not produce a usable predictor (diverged training, ...).
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A fitted prediction function. Immutable and safe to share across threads.
class Predictor {
public:
    virtual ~Predictor() = default;

    [[nodiscard]] virtual double predict(std::span<const double> row) const = 0;
    // one prediction per row of x
    [[nodiscard]] virtual Vector predict(const Matrix& x) const;
};

using PredictorPtr = std::shared_ptr<const Predictor>;

// A prediction method: maps a training dataset to a Predictor. Fitting is
// deterministic, so the same learner fit on the same data predicts identically.
class Learner {
public:
    virtual ~Learner() = default;

    [[nodiscard]] virtual PredictorPtr fit(const Dataset& train) const = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

using LearnerPtr = std::shared_ptr<const Learner>;

enum class LearnerKind { ols, random_forest, mlp };

std::string to_string(LearnerKind kind);
LearnerKind parse_learner_kind(const std::string& name);

struct ForestParams {
    std::size_t n_trees = 300;
    double max_features = 1.0;
    std::size_t min_samples_leaf = 1;
    std::optional<std::size_t> max_depth;
    bool bootstrap = true;

    void validate() const;
};

struct MlpParams {
    std::vector<std::size_t> hidden_layers{32, 32};
    double learning_rate = 0.01;
    std::size_t max_epochs = 500;
    std::size_t patience = 50;
    std::size_t batch_size = 32;
    double validation_fraction = 0.1;
    double dropout_rate = 0.0;
    bool batch_norm = false;
    // learning rate is multiplied by lr_decay_factor after this many epochs without improvement
    std::size_t lr_decay_patience = 10;
    double lr_decay_factor = 0.5;

    void validate() const;

    // 5 hidden layers of 100 units with batch norm and dropout
    static MlpParams paper();
};

// ---- linear regression ----------------------------------------------------

class OlsPredictor final : public Predictor {
public:
    OlsPredictor(double intercept, Vector coefficients)
        : intercept_(intercept), coefficients_(std::move(coefficients)) { }

    [[nodiscard]] double predict(std::span<const double> row) const override;
    [[nodiscard]] Vector predict(const Matrix& x) const override;

    [[nodiscard]] double intercept() const noexcept { return intercept_; }
    [[nodiscard]] const Vector& coefficients() const noexcept { return coefficients_; }

private:
    double intercept_;
    Vector coefficients_;
};

// Least squares with intercept via complete orthogonal decomposition; returns
// the minimum-norm solution when the design is rank deficient.
std::shared_ptr<const OlsPredictor> fit_ols(const Dataset& train);

PredictorPtr fit_random_forest(const Dataset& train, const ForestParams& params, std::uint64_t seed);
PredictorPtr fit_mlp(const Dataset& train, const MlpParams& params, std::uint64_t seed);

class OlsLearner final : public Learner {
public:
    [[nodiscard]] PredictorPtr fit(const Dataset& train) const override { return fit_ols(train); }
    [[nodiscard]] std::string name() const override { return "ols"; }
};

class ForestLearner final : public Learner {
public:
    ForestLearner(ForestParams params, std::uint64_t seed);
    [[nodiscard]] PredictorPtr fit(const Dataset& train) const override;
    [[nodiscard]] std::string name() const override { return "random_forest"; }
    [[nodiscard]] const ForestParams& params() const noexcept { return params_; }

private:
    ForestParams params_;
    std::uint64_t seed_;
};

class MlpLearner final : public Learner {
public:
    MlpLearner(MlpParams params, std::uint64_t seed);
    [[nodiscard]] PredictorPtr fit(const Dataset& train) const override;
    [[nodiscard]] std::string name() const override { return "mlp"; }
    [[nodiscard]] const MlpParams& params() const noexcept { return params_; }

private:
    MlpParams params_;
    std::uint64_t seed_;
};

// Predicts the training label mean everywhere; ignores all features.
class MeanLearner final : public Learner {
public:
    [[nodiscard]] PredictorPtr fit(const Dataset& train) const override;
    [[nodiscard]] std::string name() const override { return "mean"; }
};

// Named learner configuration; `name` labels results (defaults to the kind).
struct LearnerSpec {
    LearnerKind kind = LearnerKind::ols;
    std::string name;
    ForestParams forest;
    MlpParams mlp;

    [[nodiscard]] std::string label() const { return name.empty() ? to_string(kind) : name; }
};

LearnerPtr make_learner(const LearnerSpec& spec, std::uint64_t seed);

// ---- losses and risk ------------------------------------------------------

using LossFunction = double (*)(double y, double y_hat);

inline double squared_loss(double y, double y_hat)
{
    const double r = y - y_hat;
    return r * r;
}

struct RiskEstimate {
    double value = 0.0;
    std::size_t n_holdout = 0;
};

Vector pointwise_losses(const Predictor& f, const Dataset& holdout, LossFunction loss = squared_loss);
RiskEstimate empirical_risk(const Predictor& f, const Dataset& holdout, LossFunction loss = squared_loss);

} // namespace coinp
