#include "coinp/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace coinp {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;
constexpr double kAdamaxBeta1 = 0.9;
constexpr double kAdamaxBeta2 = 0.999;
constexpr double kAdamaxEps = 1e-8;
constexpr double kGradientClipNorm = 10.0;
constexpr int kMaxDivergences = 5;

double elu(double z) { return z > 0.0 ? z : std::expm1(z); }
double elu_grad(double z) { return z > 0.0 ? 1.0 : std::exp(z); }

} // namespace

MlpNetwork::MlpNetwork(std::size_t n_inputs, std::vector<std::size_t> hidden, bool batch_norm, double dropout_rate)
    : batch_norm_(batch_norm), dropout_rate_(dropout_rate)
{
    std::size_t offset = 0;
    std::size_t in = n_inputs;
    hidden.push_back(1);
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        Layer layer;
        layer.in = in;
        layer.out = hidden[l];
        layer.w = offset;
        offset += layer.in * layer.out;
        layer.b = offset;
        offset += layer.out;
        const bool is_hidden = l + 1 < hidden.size();
        if (is_hidden && batch_norm_) {
            layer.gamma = offset;
            offset += layer.out;
            layer.beta = offset;
            offset += layer.out;
            running_.mean.push_back(Vector::Zero(static_cast<Eigen::Index>(layer.out)));
            running_.var.push_back(Vector::Ones(static_cast<Eigen::Index>(layer.out)));
        }
        layers_.push_back(layer);
        in = layer.out;
    }
    params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
}

void MlpNetwork::initialize(Rng& rng)
{
    params_.setZero();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        const double sd = std::sqrt(2.0 / static_cast<double>(layer.in));
        for (std::size_t k = 0; k < layer.in * layer.out; ++k)
            params_(static_cast<Eigen::Index>(layer.w + k)) = sd * rng.normal();
        if (batch_norm_ && l + 1 < layers_.size())
            params_.segment(static_cast<Eigen::Index>(layer.gamma), static_cast<Eigen::Index>(layer.out)).setOnes();
    }
}

void MlpNetwork::set_parameters(const Vector& params)
{
    if (params.size() != params_.size())
        throw std::invalid_argument("parameter vector has the wrong length");
    params_ = params;
}

double MlpNetwork::forward_backward(const Matrix& x, const Vector& y, Vector* grad, Rng* rng,
                                    bool update_running_stats)
{
    const Eigen::Index n = x.rows();
    const double nd = static_cast<double>(n);
    const std::size_t n_hidden = layers_.size() - 1;

    struct Cache {
        Matrix input;  // activation entering the layer
        Matrix pre;    // affine output (before batch norm)
        Matrix normed; // zhat
        Vector inv_std;
        Matrix act_in; // value fed to the activation
        Matrix mask;   // dropout scaling, empty when dropout is off
    };
    std::vector<Cache> caches(n_hidden);

    Matrix a = x;
    for (std::size_t l = 0; l < n_hidden; ++l) {
        const auto& layer = layers_[l];
        const auto out = static_cast<Eigen::Index>(layer.out);
        Eigen::Map<const RowMajor> w(params_.data() + layer.w, out, static_cast<Eigen::Index>(layer.in));
        Eigen::Map<const Vector> b(params_.data() + layer.b, out);
        auto& c = caches[l];
        c.input = a;
        c.pre = (a * w.transpose()).rowwise() + b.transpose();
        if (batch_norm_) {
            Eigen::Map<const Vector> gamma(params_.data() + layer.gamma, out);
            Eigen::Map<const Vector> beta(params_.data() + layer.beta, out);
            const Vector mean = c.pre.colwise().mean();
            const Matrix centered = c.pre.rowwise() - mean.transpose();
            const Vector var = centered.array().square().colwise().mean();
            c.inv_std = (var.array() + kBatchNormEps).rsqrt();
            c.normed = centered * c.inv_std.asDiagonal();
            c.act_in = (c.normed * gamma.asDiagonal()).rowwise() + beta.transpose();
            if (update_running_stats) {
                const double unbias = n > 1 ? nd / (nd - 1.0) : 1.0;
                running_.mean[l] = (1.0 - kBatchNormMomentum) * running_.mean[l] + kBatchNormMomentum * mean;
                running_.var[l] = (1.0 - kBatchNormMomentum) * running_.var[l] + kBatchNormMomentum * unbias * var;
            }
        } else {
            c.act_in = c.pre;
        }
        a = c.act_in.unaryExpr(&elu);
        if (dropout_rate_ > 0.0) {
            if (rng == nullptr)
                throw std::invalid_argument("dropout requires an rng in training mode");
            const double keep = 1.0 - dropout_rate_;
            c.mask.resize(a.rows(), a.cols());
            for (Eigen::Index j = 0; j < a.cols(); ++j)
                for (Eigen::Index i = 0; i < a.rows(); ++i)
                    c.mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
            a = a.cwiseProduct(c.mask);
        }
    }

    const auto& last = layers_.back();
    Eigen::Map<const RowMajor> w_out(params_.data() + last.w, 1, static_cast<Eigen::Index>(last.in));
    const double b_out = params_(static_cast<Eigen::Index>(last.b));
    const Vector pred = (a * w_out.transpose()).array() + b_out;
    const Vector resid = pred - y;
    const double loss = resid.squaredNorm() / nd;
    if (grad == nullptr)
        return loss;

    grad->setZero(params_.size());
    // d loss / d pred
    Matrix delta = (2.0 / nd) * resid;
    {
        Eigen::Map<RowMajor> gw(grad->data() + last.w, 1, static_cast<Eigen::Index>(last.in));
        gw = delta.transpose() * a;
        (*grad)(static_cast<Eigen::Index>(last.b)) = delta.sum();
        delta = delta * w_out; // n x last.in
    }
    for (std::size_t l = n_hidden; l-- > 0;) {
        const auto& layer = layers_[l];
        const auto out = static_cast<Eigen::Index>(layer.out);
        auto& c = caches[l];
        if (dropout_rate_ > 0.0)
            delta = delta.cwiseProduct(c.mask);
        Matrix d_act = delta.cwiseProduct(c.act_in.unaryExpr(&elu_grad));
        Matrix d_pre;
        if (batch_norm_) {
            Eigen::Map<const Vector> gamma(params_.data() + layer.gamma, out);
            Eigen::Map<Vector> g_gamma(grad->data() + layer.gamma, out);
            Eigen::Map<Vector> g_beta(grad->data() + layer.beta, out);
            g_gamma = d_act.cwiseProduct(c.normed).colwise().sum().transpose();
            g_beta = d_act.colwise().sum().transpose();
            const Matrix d_norm = d_act * gamma.asDiagonal();
            const Vector sum_d = d_norm.colwise().sum();
            const Vector sum_dn = d_norm.cwiseProduct(c.normed).colwise().sum();
            d_pre = ((nd * d_norm).rowwise() - sum_d.transpose() - (c.normed * sum_dn.asDiagonal()))
                    * (c.inv_std / nd).asDiagonal();
        } else {
            d_pre = std::move(d_act);
        }
        Eigen::Map<RowMajor> gw(grad->data() + layer.w, out, static_cast<Eigen::Index>(layer.in));
        Eigen::Map<Vector> gb(grad->data() + layer.b, out);
        gw = d_pre.transpose() * c.input;
        gb = d_pre.colwise().sum().transpose();
        if (l > 0) {
            Eigen::Map<const RowMajor> w(params_.data() + layer.w, out, static_cast<Eigen::Index>(layer.in));
            delta = d_pre * w;
        }
    }
    return loss;
}

double MlpNetwork::loss_and_gradient(const Matrix& x, const Vector& y, Vector& grad, Rng* rng,
                                     bool update_running_stats)
{
    return forward_backward(x, y, &grad, rng, update_running_stats);
}

double MlpNetwork::loss(const Matrix& x, const Vector& y, Rng* rng)
{
    return forward_backward(x, y, nullptr, rng, false);
}

Vector MlpNetwork::predict(const Matrix& x) const
{
    Matrix a = x;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        const auto out = static_cast<Eigen::Index>(layer.out);
        Eigen::Map<const RowMajor> w(params_.data() + layer.w, out, static_cast<Eigen::Index>(layer.in));
        Eigen::Map<const Vector> b(params_.data() + layer.b, out);
        Matrix z = (a * w.transpose()).rowwise() + b.transpose();
        if (batch_norm_) {
            Eigen::Map<const Vector> gamma(params_.data() + layer.gamma, out);
            Eigen::Map<const Vector> beta(params_.data() + layer.beta, out);
            const Vector scale = gamma.array() * (running_.var[l].array() + kBatchNormEps).rsqrt();
            const Vector shift = beta.array() - running_.mean[l].array() * scale.array();
            z = (z * scale.asDiagonal()).rowwise() + shift.transpose();
        }
        a = z.unaryExpr(&elu);
    }
    const auto& last = layers_.back();
    Eigen::Map<const RowMajor> w_out(params_.data() + last.w, 1, static_cast<Eigen::Index>(last.in));
    return (a * w_out.transpose()).array() + params_(static_cast<Eigen::Index>(last.b));
}

MlpPredictor::MlpPredictor(MlpNetwork network, Vector x_mean, Vector x_scale, double y_mean, double y_scale)
    : network_(std::move(network))
    , x_mean_(std::move(x_mean))
    , x_scale_(std::move(x_scale))
    , y_mean_(y_mean)
    , y_scale_(y_scale)
{
}

double MlpPredictor::predict(std::span<const double> row) const
{
    Matrix x(1, static_cast<Eigen::Index>(row.size()));
    for (std::size_t j = 0; j < row.size(); ++j)
        x(0, static_cast<Eigen::Index>(j)) = row[j];
    return predict(x)(0);
}

Vector MlpPredictor::predict(const Matrix& x) const
{
    if (x.cols() != x_mean_.size())
        throw std::invalid_argument("feature count does not match fitted model");
    const Matrix z = (x.rowwise() - x_mean_.transpose()).array().rowwise() / x_scale_.transpose().array();
    return (network_.predict(z).array() * y_scale_ + y_mean_).matrix();
}

std::shared_ptr<const MlpPredictor> fit_mlp_network(const Dataset& train, const MlpParams& params,
                                                    std::uint64_t seed)
{
    params.validate();
    const std::size_t n = train.rows();
    if (n < 10)
        throw std::invalid_argument("mlp needs at least 10 training rows, got " + std::to_string(n));

    // internal standardization with training statistics
    const Vector x_mean = train.features().colwise().mean();
    Vector x_scale = ((train.features().rowwise() - x_mean.transpose()).array().square().colwise().mean())
                         .sqrt()
                         .matrix()
                         .transpose();
    for (auto& s : x_scale)
        if (!(s > 0.0))
            s = 1.0;
    const double y_mean = train.labels().mean();
    double y_scale = std::sqrt((train.labels().array() - y_mean).square().mean());
    if (!(y_scale > 0.0))
        y_scale = 1.0;
    const Matrix xs = (train.features().rowwise() - x_mean.transpose()).array().rowwise()
        / x_scale.transpose().array();
    const Vector ys = (train.labels().array() - y_mean) / y_scale;

    Rng split_rng(derive_seed(seed, 0));
    Rng init_rng(derive_seed(seed, 1));
    Rng batch_rng(derive_seed(seed, 2));
    Rng dropout_rng(derive_seed(seed, 3));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), split_rng.engine());
    const auto n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(params.validation_fraction * static_cast<double>(n))), 1, n - 1);
    std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> fit_rows(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    auto gather = [&](const std::vector<std::size_t>& idx, Matrix& bx, Vector& by) {
        bx.resize(static_cast<Eigen::Index>(idx.size()), xs.cols());
        by.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            bx.row(static_cast<Eigen::Index>(i)) = xs.row(static_cast<Eigen::Index>(idx[i]));
            by(static_cast<Eigen::Index>(i)) = ys(static_cast<Eigen::Index>(idx[i]));
        }
    };
    Matrix x_val;
    Vector y_val;
    gather(val_rows, x_val, y_val);

    MlpNetwork net(train.cols(), params.hidden_layers, params.batch_norm, params.dropout_rate);
    net.initialize(init_rng);

    const auto n_params = static_cast<Eigen::Index>(net.parameter_count());
    Vector m = Vector::Zero(n_params);
    Vector u = Vector::Zero(n_params);
    Vector grad(n_params);
    std::size_t step = 0;
    double lr = params.learning_rate;

    Vector best_params = net.parameters();
    auto best_stats = net.running_stats();
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::size_t since_decay = 0;
    int divergences = 0;
    std::size_t epochs = 0;

    const std::size_t n_fit = fit_rows.size();
    const std::size_t n_batches = (n_fit + params.batch_size - 1) / params.batch_size;
    Matrix bx;
    Vector by;
    std::vector<std::size_t> batch;

    for (std::size_t epoch = 0; epoch < params.max_epochs; ++epoch) {
        ++epochs;
        std::shuffle(fit_rows.begin(), fit_rows.end(), batch_rng.engine());
        bool diverged = false;
        for (std::size_t k = 0; k < n_batches && !diverged; ++k) {
            // even-sized batches so none degenerates to a single row
            const std::size_t lo = k * n_fit / n_batches;
            const std::size_t hi = (k + 1) * n_fit / n_batches;
            batch.assign(fit_rows.begin() + static_cast<std::ptrdiff_t>(lo),
                         fit_rows.begin() + static_cast<std::ptrdiff_t>(hi));
            gather(batch, bx, by);
            const double batch_loss = net.loss_and_gradient(bx, by, grad, &dropout_rng, true);
            if (!std::isfinite(batch_loss) || !grad.allFinite()) {
                diverged = true;
                break;
            }
            const double norm = grad.norm();
            if (norm > kGradientClipNorm)
                grad *= kGradientClipNorm / norm;
            // Adamax
            ++step;
            m = kAdamaxBeta1 * m + (1.0 - kAdamaxBeta1) * grad;
            u = (kAdamaxBeta2 * u).cwiseMax(grad.cwiseAbs());
            const double step_size = lr / (1.0 - std::pow(kAdamaxBeta1, static_cast<double>(step)));
            Vector next = net.parameters() - step_size * (m.array() / (u.array() + kAdamaxEps)).matrix();
            net.set_parameters(next);
        }

        const double val = diverged ? std::numeric_limits<double>::quiet_NaN()
                                    : (net.predict(x_val) - y_val).squaredNorm() / static_cast<double>(n_val);
        if (!std::isfinite(val)) {
            if (++divergences > kMaxDivergences)
                throw FitError("mlp training diverged: non-finite loss after " + std::to_string(kMaxDivergences)
                               + " learning-rate reductions");
            net.set_parameters(best_params);
            net.set_running_stats(best_stats);
            if (!std::isfinite(best_val))
                net.initialize(init_rng);
            m.setZero();
            u.setZero();
            step = 0;
            lr *= 0.5;
            continue;
        }
        if (val < best_val) {
            best_val = val;
            best_params = net.parameters();
            best_stats = net.running_stats();
            since_best = 0;
            since_decay = 0;
        } else {
            ++since_best;
            if (++since_decay >= params.lr_decay_patience) {
                lr *= params.lr_decay_factor;
                since_decay = 0;
            }
            if (since_best >= params.patience)
                break;
        }
    }
    if (!std::isfinite(best_val))
        throw FitError("mlp training produced no finite validation loss");

    net.set_parameters(best_params);
    net.set_running_stats(best_stats);
    auto out = std::make_shared<MlpPredictor>(std::move(net), x_mean, x_scale, y_mean, y_scale);
    out->set_epochs_run(epochs);
    return out;
}

PredictorPtr fit_mlp(const Dataset& train, const MlpParams& params, std::uint64_t seed)
{
    return fit_mlp_network(train, params, seed);
}

} // namespace coinp
