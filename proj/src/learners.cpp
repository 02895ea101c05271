#include "coinp/learners.hpp"

#include <Eigen/QR>

#include <cmath>

namespace coinp {

Vector Predictor::predict(const Matrix& x) const
{
    Vector out(x.rows());
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            row[static_cast<std::size_t>(j)] = x(i, j);
        out(i) = predict(std::span<const double>(row));
    }
    return out;
}

std::string to_string(LearnerKind kind)
{
    switch (kind) {
    case LearnerKind::ols: return "ols";
    case LearnerKind::random_forest: return "random_forest";
    case LearnerKind::mlp: return "mlp";
    }
    return "unknown";
}

LearnerKind parse_learner_kind(const std::string& name)
{
    if (name == "ols")
        return LearnerKind::ols;
    if (name == "random_forest")
        return LearnerKind::random_forest;
    if (name == "mlp")
        return LearnerKind::mlp;
    throw std::invalid_argument("unknown learner kind '" + name + "' (expected ols, random_forest or mlp)");
}

void ForestParams::validate() const
{
    if (n_trees < 1)
        throw std::invalid_argument("n_trees must be >= 1");
    if (!(max_features > 0.0 && max_features <= 1.0))
        throw std::invalid_argument("max_features must lie in (0, 1]");
    if (min_samples_leaf < 1)
        throw std::invalid_argument("min_samples_leaf must be >= 1");
    if (max_depth && *max_depth < 1)
        throw std::invalid_argument("max_depth must be >= 1");
}

void MlpParams::validate() const
{
    if (hidden_layers.empty())
        throw std::invalid_argument("hidden_layers must not be empty");
    for (auto w : hidden_layers)
        if (w < 1)
            throw std::invalid_argument("hidden layer widths must be >= 1");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("learning_rate must be > 0");
    if (max_epochs < 1)
        throw std::invalid_argument("max_epochs must be >= 1");
    if (batch_size < 1)
        throw std::invalid_argument("batch_size must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw std::invalid_argument("validation_fraction must lie in (0, 1)");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("dropout_rate must lie in [0, 1)");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
        throw std::invalid_argument("lr_decay_factor must lie in (0, 1]");
}

MlpParams MlpParams::paper()
{
    MlpParams p;
    p.hidden_layers = {100, 100, 100, 100, 100};
    p.batch_norm = true;
    p.dropout_rate = 0.5;
    p.learning_rate = 0.002;
    p.max_epochs = 10000;
    return p;
}

double OlsPredictor::predict(std::span<const double> row) const
{
    if (row.size() != static_cast<std::size_t>(coefficients_.size()))
        throw std::invalid_argument("row length does not match fitted model");
    double s = intercept_;
    for (std::size_t j = 0; j < row.size(); ++j)
        s += coefficients_(static_cast<Eigen::Index>(j)) * row[j];
    return s;
}

Vector OlsPredictor::predict(const Matrix& x) const
{
    if (x.cols() != coefficients_.size())
        throw std::invalid_argument("feature count does not match fitted model");
    return (x * coefficients_).array() + intercept_;
}

std::shared_ptr<const OlsPredictor> fit_ols(const Dataset& train)
{
    if (train.rows() == 0)
        throw std::invalid_argument("cannot fit linear regression on an empty dataset");
    const auto n = static_cast<Eigen::Index>(train.rows());
    const auto p = static_cast<Eigen::Index>(train.cols());
    Matrix design(n, p + 1);
    design.col(0).setOnes();
    design.rightCols(p) = train.features();
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design);
    Vector beta = cod.solve(train.labels());
    return std::make_shared<const OlsPredictor>(beta(0), beta.tail(p));
}

ForestLearner::ForestLearner(ForestParams params, std::uint64_t seed)
    : params_(std::move(params)), seed_(seed)
{
    params_.validate();
}

PredictorPtr ForestLearner::fit(const Dataset& train) const
{
    return fit_random_forest(train, params_, seed_);
}

MlpLearner::MlpLearner(MlpParams params, std::uint64_t seed)
    : params_(std::move(params)), seed_(seed)
{
    params_.validate();
}

PredictorPtr MlpLearner::fit(const Dataset& train) const
{
    return fit_mlp(train, params_, seed_);
}

namespace {

class ConstantPredictor final : public Predictor {
public:
    explicit ConstantPredictor(double value) : value_(value) { }
    [[nodiscard]] double predict(std::span<const double>) const override { return value_; }
    [[nodiscard]] Vector predict(const Matrix& x) const override { return Vector::Constant(x.rows(), value_); }

private:
    double value_;
};

} // namespace

PredictorPtr MeanLearner::fit(const Dataset& train) const
{
    if (train.rows() == 0)
        throw std::invalid_argument("cannot fit on an empty dataset");
    return std::make_shared<const ConstantPredictor>(train.labels().mean());
}

LearnerPtr make_learner(const LearnerSpec& spec, std::uint64_t seed)
{
    switch (spec.kind) {
    case LearnerKind::ols: return std::make_shared<const OlsLearner>();
    case LearnerKind::random_forest: return std::make_shared<const ForestLearner>(spec.forest, seed);
    case LearnerKind::mlp: return std::make_shared<const MlpLearner>(spec.mlp, seed);
    }
    throw std::invalid_argument("unknown learner kind");
}

Vector pointwise_losses(const Predictor& f, const Dataset& holdout, LossFunction loss)
{
    if (holdout.rows() == 0)
        throw std::invalid_argument("holdout dataset is empty");
    const Vector pred = f.predict(holdout.features());
    Vector out(pred.size());
    for (Eigen::Index i = 0; i < pred.size(); ++i)
        out(i) = loss(holdout.labels()(i), pred(i));
    return out;
}

RiskEstimate empirical_risk(const Predictor& f, const Dataset& holdout, LossFunction loss)
{
    const Vector losses = pointwise_losses(f, holdout, loss);
    return {losses.mean(), holdout.rows()};
}

} // namespace coinp
