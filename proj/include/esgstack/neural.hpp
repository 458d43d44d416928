#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "esgstack/matrix.hpp"
#include "esgstack/rng.hpp"
#include "esgstack/types.hpp"

namespace esgstack {

inline constexpr std::size_t kTrunkWidth = 64;  // shared layers
inline constexpr std::size_t kHeadWidth = 32;   // per-aspect hidden layer

// Every trainable tensor of the model, in the fixed block order used by the
// optimizer: w1, b1, gamma, beta, w2, b2, then per aspect (E, S, G) the head
// hidden and output layers. Batch-norm running statistics are state, not
// parameters, and live on the model itself.
struct MlpParams {
    Matrix w1;                   // kTrunkWidth x d_in
    std::vector<double> b1;      // kTrunkWidth
    std::vector<double> gamma;   // kTrunkWidth
    std::vector<double> beta;    // kTrunkWidth
    Matrix w2;                   // kTrunkWidth x kTrunkWidth
    std::vector<double> b2;      // kTrunkWidth
    std::array<Matrix, kNumAspects> head_hidden_w;                // kHeadWidth x kTrunkWidth
    std::array<std::vector<double>, kNumAspects> head_hidden_b;   // kHeadWidth
    std::array<Matrix, kNumAspects> head_out_w;                   // kNumClasses x kHeadWidth
    std::array<std::vector<double>, kNumAspects> head_out_b;      // kNumClasses

    static MlpParams zeros(std::size_t d_in);

    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    std::size_t count() const;
    bool all_finite() const;

    bool operator==(const MlpParams&) const = default;
};

using MlpGradients = MlpParams;

// Activations captured by a train-mode forward pass; backward() consumes
// them. `mask` is the raw 0/1 dropout draw, scaling happens inside.
struct ForwardCache {
    bool valid = false;
    Matrix x;
    Matrix z1;          // pre batch-norm
    std::vector<double> mean, var; // biased batch statistics
    Matrix xhat;        // normalized z1
    Matrix bn_out;      // gamma * xhat + beta
    Matrix mask;        // batch x kTrunkWidth, entries 0 or 1
    Matrix dropped;     // dropout(ReLU(bn_out)), inverted scaling applied
    Matrix z2;
    Matrix h2;          // ReLU(z2)
    std::array<Matrix, kNumAspects> head_z;
    std::array<Matrix, kNumAspects> head_h;
};

// Shared-trunk multi-head MLP: linear -> batch-norm -> ReLU -> dropout ->
// linear -> ReLU, then one 2-layer head per aspect emitting 4 logits.
class MlpModel {
public:
    MlpModel() = default;

    // Kaiming-uniform weights (bound sqrt(6/fan_in), drawn row-major in
    // block order), zero biases, gamma=1, beta=0, running stats (0, 1).
    MlpModel(std::size_t d_in, Rng& rng);

    std::size_t d_in() const { return params.w1.cols(); }

    // Eval mode: running batch-norm statistics, dropout disabled. Pure.
    std::array<Matrix, kNumAspects> forward_eval(const Matrix& x) const;

    // Train mode: batch statistics (batch >= 2), explicit dropout mask with
    // inverted 1/(1-rate) scaling. Updates running stats unless told not to.
    std::array<Matrix, kNumAspects> forward_train(const Matrix& x, const Matrix& mask,
                                                  ForwardCache& cache,
                                                  bool update_running = true);

    // Exact gradient of a loss whose per-logit derivatives are `dlogits`,
    // for the pass recorded in `cache`.
    MlpGradients backward(const ForwardCache& cache,
                          const std::array<Matrix, kNumAspects>& dlogits) const;

    // Bernoulli(1 - dropout_rate) keep mask, drawn row-major.
    Matrix draw_mask(std::size_t batch, Rng& rng) const;

    MlpParams params;
    std::vector<double> running_mean, running_var;
    double dropout_rate = 0.4;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    bool operator==(const MlpModel&) const = default;
};

// Numerically stable row softmax (max subtraction).
Matrix softmax_rows(const Matrix& logits);

// Class index per aspect, extracted from label triplets.
using Targets = std::array<std::vector<std::size_t>, kNumAspects>;
Targets targets_of(const std::vector<LabelTriplet>& labels);
Targets take_targets(const Targets& y, const std::vector<std::size_t>& indices);

// Mean-reduced cross entropy; optionally writes d(loss)/d(logits).
double cross_entropy(const Matrix& logits, const std::vector<std::size_t>& y,
                     Matrix* dlogits = nullptr);

// Sum of the three per-aspect mean cross entropies.
double joint_cross_entropy(const std::array<Matrix, kNumAspects>& logits, const Targets& y,
                           std::array<Matrix, kNumAspects>* dlogits = nullptr);

struct AdamWConfig {
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled weight decay: theta -= lr * (mhat / (sqrt(vhat) + eps) + wd * theta).
class AdamW {
public:
    explicit AdamW(std::size_t total_params, AdamWConfig cfg = {});

    void step(std::vector<std::span<double>> params,
              const std::vector<std::span<const double>>& grads);

    std::uint64_t steps() const { return step_; }

private:
    AdamWConfig cfg_;
    std::vector<double> m_, v_;
    std::uint64_t step_ = 0;
};

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t max_epochs = 200;
    std::size_t patience = 15;
    std::uint64_t seed = 0;
};

struct TrainOutcome {
    MlpModel model;            // weights captured at the best epoch
    std::size_t t_star = 0;    // 1-indexed epoch of minimum validation loss
    std::size_t epochs_run = 0;
    std::size_t optimizer_steps = 0;
    std::vector<double> val_losses; // one per epoch run
};

// Shuffled minibatches each epoch (final short batch kept, a final batch of
// exactly one sample folds into the previous batch), early stopping on the
// eval-mode joint validation loss, ties resolved toward the earliest epoch.
TrainOutcome train_early_stopped(const Matrix& x_train, const Targets& y_train,
                                 const Matrix& x_val, const Targets& y_val,
                                 const TrainConfig& cfg);

struct RetrainOutcome {
    MlpModel model;
    std::size_t optimizer_steps = 0;
};

// Fresh initialization from cfg.seed, exactly t_star epochs, no validation.
RetrainOutcome retrain_fixed_epochs(const Matrix& x, const Targets& y, std::size_t t_star,
                                    const TrainConfig& cfg);

// JSON checkpoint with every parameter and the batch-norm state; loading
// reproduces eval outputs bit for bit.
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

} // namespace esgstack
