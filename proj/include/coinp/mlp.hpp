#pragma once

#include "coinp/learners.hpp"
#include "coinp/rng.hpp"

#include <cstddef>
#include <vector>

namespace coinp {

// Fully connected ELU network with one linear output unit. Optional batch
// normalization (between each hidden affine map and its activation) and
// inverted dropout after each hidden activation.
//
// All trainable values live in one flat parameter vector so optimizers and
// gradient checks can treat the network as a function of a single vector.
class MlpNetwork {
public:
    MlpNetwork(std::size_t n_inputs, std::vector<std::size_t> hidden, bool batch_norm, double dropout_rate);

    // He-normal weights, zero biases, unit batch-norm scales.
    void initialize(Rng& rng);

    [[nodiscard]] std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(params_.size()); }
    [[nodiscard]] const Vector& parameters() const noexcept { return params_; }
    void set_parameters(const Vector& params);

    // Mean squared error over the batch in training mode (batch statistics,
    // dropout masks drawn from `rng` when dropout is on), writing d loss / d params
    // into `grad`. When `update_running_stats` is set, batch-norm running
    // averages are refreshed from this batch.
    double loss_and_gradient(const Matrix& x, const Vector& y, Vector& grad, Rng* rng,
                             bool update_running_stats = false);

    // Training-mode loss only (same masks as loss_and_gradient for an equal rng state).
    double loss(const Matrix& x, const Vector& y, Rng* rng);

    // Inference mode: running batch-norm statistics, no dropout.
    [[nodiscard]] Vector predict(const Matrix& x) const;

    struct RunningStats {
        std::vector<Vector> mean;
        std::vector<Vector> var;
    };
    [[nodiscard]] const RunningStats& running_stats() const noexcept { return running_; }
    void set_running_stats(RunningStats stats) { running_ = std::move(stats); }

private:
    struct Layer {
        std::size_t in = 0;
        std::size_t out = 0;
        std::size_t w = 0;     // offset of the out x in weight block (row major)
        std::size_t b = 0;     // offset of the bias
        std::size_t gamma = 0; // batch-norm scale (hidden layers with batch_norm)
        std::size_t beta = 0;  // batch-norm shift
    };

    double forward_backward(const Matrix& x, const Vector& y, Vector* grad, Rng* rng, bool update_running_stats);

    std::vector<Layer> layers_; // hidden layers followed by the output layer
    bool batch_norm_;
    double dropout_rate_;
    Vector params_;
    RunningStats running_;
};

class MlpPredictor final : public Predictor {
public:
    MlpPredictor(MlpNetwork network, Vector x_mean, Vector x_scale, double y_mean, double y_scale);

    [[nodiscard]] double predict(std::span<const double> row) const override;
    [[nodiscard]] Vector predict(const Matrix& x) const override;

    [[nodiscard]] std::size_t epochs_run() const noexcept { return epochs_run_; }
    void set_epochs_run(std::size_t e) noexcept { epochs_run_ = e; }

private:
    MlpNetwork network_;
    Vector x_mean_;
    Vector x_scale_;
    double y_mean_;
    double y_scale_;
    std::size_t epochs_run_ = 0;
};

std::shared_ptr<const MlpPredictor> fit_mlp_network(const Dataset& train, const MlpParams& params,
                                                    std::uint64_t seed);

} // namespace coinp
