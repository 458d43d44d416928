#include "esgstack/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "esgstack/errors.hpp"
#include "esgstack/io.hpp"
#include "json.hpp"

namespace esgstack {

namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> s(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) s[j] += m.at(i, j);
    return s;
}

void add_row_bias(Matrix& m, const std::vector<double>& b) {
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) m.at(i, j) += b[j];
}

Matrix relu(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v = std::max(0.0, v);
    return out;
}

void kaiming_fill(Matrix& w, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
}

} // namespace

MlpParams MlpParams::zeros(std::size_t d_in) {
    MlpParams p;
    p.w1 = Matrix(kTrunkWidth, d_in);
    p.b1.assign(kTrunkWidth, 0.0);
    p.gamma.assign(kTrunkWidth, 0.0);
    p.beta.assign(kTrunkWidth, 0.0);
    p.w2 = Matrix(kTrunkWidth, kTrunkWidth);
    p.b2.assign(kTrunkWidth, 0.0);
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        p.head_hidden_w[a] = Matrix(kHeadWidth, kTrunkWidth);
        p.head_hidden_b[a].assign(kHeadWidth, 0.0);
        p.head_out_w[a] = Matrix(kNumClasses, kHeadWidth);
        p.head_out_b[a].assign(kNumClasses, 0.0);
    }
    return p;
}

std::vector<std::span<double>> MlpParams::blocks() {
    std::vector<std::span<double>> out = {w1.data(), b1, gamma, beta, w2.data(), b2};
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        out.emplace_back(head_hidden_w[a].data());
        out.emplace_back(head_hidden_b[a]);
        out.emplace_back(head_out_w[a].data());
        out.emplace_back(head_out_b[a]);
    }
    return out;
}

std::vector<std::span<const double>> MlpParams::blocks() const {
    std::vector<std::span<const double>> out = {w1.data(), b1, gamma, beta, w2.data(), b2};
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        out.emplace_back(head_hidden_w[a].data());
        out.emplace_back(head_hidden_b[a]);
        out.emplace_back(head_out_w[a].data());
        out.emplace_back(head_out_b[a]);
    }
    return out;
}

std::size_t MlpParams::count() const {
    std::size_t n = 0;
    for (const auto& b : blocks()) n += b.size();
    return n;
}

bool MlpParams::all_finite() const {
    for (const auto& b : blocks())
        for (double v : b)
            if (!std::isfinite(v)) return false;
    return true;
}

MlpModel::MlpModel(std::size_t d_in, Rng& rng) {
    if (d_in == 0) throw validation_error("model needs at least one input feature");
    params = MlpParams::zeros(d_in);
    kaiming_fill(params.w1, rng);
    std::fill(params.gamma.begin(), params.gamma.end(), 1.0);
    kaiming_fill(params.w2, rng);
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        kaiming_fill(params.head_hidden_w[a], rng);
        kaiming_fill(params.head_out_w[a], rng);
    }
    running_mean.assign(kTrunkWidth, 0.0);
    running_var.assign(kTrunkWidth, 1.0);
}

Matrix MlpModel::draw_mask(std::size_t batch, Rng& rng) const {
    Matrix mask(batch, kTrunkWidth);
    for (double& v : mask.data()) v = rng.uniform01() >= dropout_rate ? 1.0 : 0.0;
    return mask;
}

namespace {

std::array<Matrix, kNumAspects> run_heads(const MlpParams& p, const Matrix& h2,
                                          std::array<Matrix, kNumAspects>* head_z,
                                          std::array<Matrix, kNumAspects>* head_h) {
    std::array<Matrix, kNumAspects> logits;
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        Matrix za = multiply_abt(h2, p.head_hidden_w[a]);
        add_row_bias(za, p.head_hidden_b[a]);
        Matrix ha = relu(za);
        logits[a] = multiply_abt(ha, p.head_out_w[a]);
        add_row_bias(logits[a], p.head_out_b[a]);
        if (head_z) (*head_z)[a] = std::move(za);
        if (head_h) (*head_h)[a] = std::move(ha);
    }
    return logits;
}

} // namespace

std::array<Matrix, kNumAspects> MlpModel::forward_eval(const Matrix& x) const {
    if (x.cols() != d_in())
        throw validation_error("forward: input has " + std::to_string(x.cols()) +
                               " features, model expects " + std::to_string(d_in()));
    if (x.rows() == 0) throw validation_error("forward: empty batch");

    Matrix z1 = multiply_abt(x, params.w1);
    add_row_bias(z1, params.b1);
    Matrix h1(z1.rows(), kTrunkWidth);
    for (std::size_t j = 0; j < kTrunkWidth; ++j) {
        const double scale = params.gamma[j] / std::sqrt(running_var[j] + bn_eps);
        const double shift = params.beta[j] - scale * running_mean[j];
        for (std::size_t i = 0; i < z1.rows(); ++i)
            h1.at(i, j) = std::max(0.0, z1.at(i, j) * scale + shift);
    }
    Matrix z2 = multiply_abt(h1, params.w2);
    add_row_bias(z2, params.b2);
    Matrix h2 = relu(z2);
    return run_heads(params, h2, nullptr, nullptr);
}

std::array<Matrix, kNumAspects> MlpModel::forward_train(const Matrix& x, const Matrix& mask,
                                                        ForwardCache& cache,
                                                        bool update_running) {
    const std::size_t batch = x.rows();
    if (x.cols() != d_in())
        throw validation_error("forward: input has " + std::to_string(x.cols()) +
                               " features, model expects " + std::to_string(d_in()));
    if (batch < 2)
        throw validation_error("train-mode forward needs a batch of at least 2, got " +
                               std::to_string(batch));
    if (mask.rows() != batch || mask.cols() != kTrunkWidth)
        throw validation_error("dropout mask shape " + shape_string(mask) +
                               " does not match batch " + std::to_string(batch));
    for (double v : mask.data())
        if (v != 0.0 && v != 1.0)
            throw validation_error("dropout mask entries must be 0 or 1");

    cache = ForwardCache{};
    cache.x = x;
    cache.mask = mask;

    cache.z1 = multiply_abt(x, params.w1);
    add_row_bias(cache.z1, params.b1);

    const double bn = static_cast<double>(batch);
    cache.mean.assign(kTrunkWidth, 0.0);
    cache.var.assign(kTrunkWidth, 0.0);
    for (std::size_t j = 0; j < kTrunkWidth; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < batch; ++i) s += cache.z1.at(i, j);
        cache.mean[j] = s / bn;
        double sq = 0.0;
        for (std::size_t i = 0; i < batch; ++i) {
            const double d = cache.z1.at(i, j) - cache.mean[j];
            sq += d * d;
        }
        cache.var[j] = sq / bn; // biased, used for normalization
    }
    if (update_running) {
        for (std::size_t j = 0; j < kTrunkWidth; ++j) {
            const double unbiased = cache.var[j] * bn / (bn - 1.0);
            running_mean[j] = (1.0 - bn_momentum) * running_mean[j] + bn_momentum * cache.mean[j];
            running_var[j] = (1.0 - bn_momentum) * running_var[j] + bn_momentum * unbiased;
        }
    }

    cache.xhat = Matrix(batch, kTrunkWidth);
    cache.bn_out = Matrix(batch, kTrunkWidth);
    const double keep_scale = 1.0 / (1.0 - dropout_rate);
    cache.dropped = Matrix(batch, kTrunkWidth);
    for (std::size_t j = 0; j < kTrunkWidth; ++j) {
        const double ivar = 1.0 / std::sqrt(cache.var[j] + bn_eps);
        for (std::size_t i = 0; i < batch; ++i) {
            const double xh = (cache.z1.at(i, j) - cache.mean[j]) * ivar;
            cache.xhat.at(i, j) = xh;
            const double y = params.gamma[j] * xh + params.beta[j];
            cache.bn_out.at(i, j) = y;
            cache.dropped.at(i, j) = std::max(0.0, y) * mask.at(i, j) * keep_scale;
        }
    }

    cache.z2 = multiply_abt(cache.dropped, params.w2);
    add_row_bias(cache.z2, params.b2);
    cache.h2 = relu(cache.z2);
    auto logits = run_heads(params, cache.h2, &cache.head_z, &cache.head_h);
    cache.valid = true;
    return logits;
}

MlpGradients MlpModel::backward(const ForwardCache& cache,
                                const std::array<Matrix, kNumAspects>& dlogits) const {
    if (!cache.valid)
        throw validation_error("backward called without a cached train-mode forward");
    const std::size_t batch = cache.x.rows();
    MlpGradients g = MlpParams::zeros(d_in());

    Matrix dh2(batch, kTrunkWidth);
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        if (dlogits[a].rows() != batch || dlogits[a].cols() != kNumClasses)
            throw validation_error("backward: logit gradient shape mismatch");
        g.head_out_w[a] = multiply_atb(dlogits[a], cache.head_h[a]);
        g.head_out_b[a] = column_sums(dlogits[a]);
        Matrix dha = multiply(dlogits[a], params.head_out_w[a]);
        Matrix dza(batch, kHeadWidth);
        for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < kHeadWidth; ++j)
                dza.at(i, j) = cache.head_z[a].at(i, j) > 0.0 ? dha.at(i, j) : 0.0;
        g.head_hidden_w[a] = multiply_atb(dza, cache.h2);
        g.head_hidden_b[a] = column_sums(dza);
        Matrix contribution = multiply(dza, params.head_hidden_w[a]);
        for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < kTrunkWidth; ++j)
                dh2.at(i, j) += contribution.at(i, j);
    }

    Matrix dz2(batch, kTrunkWidth);
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < kTrunkWidth; ++j)
            dz2.at(i, j) = cache.z2.at(i, j) > 0.0 ? dh2.at(i, j) : 0.0;
    g.w2 = multiply_atb(dz2, cache.dropped);
    g.b2 = column_sums(dz2);
    Matrix ddropped = multiply(dz2, params.w2);

    // dropout then ReLU, walking back to the batch-norm output
    const double keep_scale = 1.0 / (1.0 - dropout_rate);
    Matrix dbn(batch, kTrunkWidth);
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < kTrunkWidth; ++j) {
            const double dh1 = ddropped.at(i, j) * cache.mask.at(i, j) * keep_scale;
            dbn.at(i, j) = cache.bn_out.at(i, j) > 0.0 ? dh1 : 0.0;
        }

    // batch-norm backward, per unit
    const double bn = static_cast<double>(batch);
    Matrix dz1(batch, kTrunkWidth);
    for (std::size_t j = 0; j < kTrunkWidth; ++j) {
        const double ivar = 1.0 / std::sqrt(cache.var[j] + bn_eps);
        double dgamma = 0.0, dbeta = 0.0, dxhat_sum = 0.0, dvar = 0.0, centered_sum = 0.0;
        for (std::size_t i = 0; i < batch; ++i) {
            const double dy = dbn.at(i, j);
            dgamma += dy * cache.xhat.at(i, j);
            dbeta += dy;
            const double dxhat = dy * params.gamma[j];
            const double centered = cache.z1.at(i, j) - cache.mean[j];
            dxhat_sum += dxhat;
            dvar += dxhat * centered;
            centered_sum += centered;
        }
        dvar *= -0.5 * ivar * ivar * ivar;
        const double dmu = -ivar * dxhat_sum + dvar * (-2.0 / bn) * centered_sum;
        for (std::size_t i = 0; i < batch; ++i) {
            const double dxhat = dbn.at(i, j) * params.gamma[j];
            const double centered = cache.z1.at(i, j) - cache.mean[j];
            dz1.at(i, j) = dxhat * ivar + dvar * 2.0 * centered / bn + dmu / bn;
        }
        g.gamma[j] = dgamma;
        g.beta[j] = dbeta;
    }

    g.w1 = multiply_atb(dz1, cache.x);
    g.b1 = column_sums(dz1);
    return g;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            out.at(i, j) = std::exp(logits.at(i, j) - mx);
            denom += out.at(i, j);
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) out.at(i, j) /= denom;
    }
    return out;
}

Targets targets_of(const std::vector<LabelTriplet>& labels) {
    Targets y;
    for (const auto& l : labels)
        for (Aspect a : kAllAspects)
            y[static_cast<std::size_t>(a)].push_back(
                static_cast<std::size_t>(l.aspect(a)));
    return y;
}

Targets take_targets(const Targets& y, const std::vector<std::size_t>& indices) {
    Targets out;
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        out[a].reserve(indices.size());
        for (std::size_t i : indices) out[a].push_back(y[a].at(i));
    }
    return out;
}

double cross_entropy(const Matrix& logits, const std::vector<std::size_t>& y, Matrix* dlogits) {
    const std::size_t batch = logits.rows();
    if (y.size() != batch)
        throw validation_error("cross_entropy: " + std::to_string(batch) + " logit rows vs " +
                               std::to_string(y.size()) + " labels");
    if (batch == 0) throw validation_error("cross_entropy: empty batch");

    double total = 0.0;
    Matrix probs = softmax_rows(logits);
    for (std::size_t i = 0; i < batch; ++i) {
        if (y[i] >= logits.cols())
            throw validation_error("cross_entropy: class index out of range");
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits.at(i, j));
        double lse = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) lse += std::exp(logits.at(i, j) - mx);
        total += mx + std::log(lse) - logits.at(i, y[i]);
    }
    const double loss = total / static_cast<double>(batch);
    if (dlogits) {
        *dlogits = probs;
        for (std::size_t i = 0; i < batch; ++i) {
            dlogits->at(i, y[i]) -= 1.0;
            for (std::size_t j = 0; j < logits.cols(); ++j)
                dlogits->at(i, j) /= static_cast<double>(batch);
        }
    }
    return loss;
}

double joint_cross_entropy(const std::array<Matrix, kNumAspects>& logits, const Targets& y,
                           std::array<Matrix, kNumAspects>* dlogits) {
    double total = 0.0;
    for (std::size_t a = 0; a < kNumAspects; ++a)
        total += cross_entropy(logits[a], y[a], dlogits ? &(*dlogits)[a] : nullptr);
    return total;
}

AdamW::AdamW(std::size_t total_params, AdamWConfig cfg)
    : cfg_(cfg), m_(total_params, 0.0), v_(total_params, 0.0) {}

void AdamW::step(std::vector<std::span<double>> params,
                 const std::vector<std::span<const double>>& grads) {
    if (params.size() != grads.size())
        throw validation_error("optimizer: parameter and gradient block counts differ");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    std::size_t off = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != grads[b].size())
            throw validation_error("optimizer: block shape mismatch");
        for (std::size_t k = 0; k < params[b].size(); ++k, ++off) {
            if (off >= m_.size()) throw validation_error("optimizer: more parameters than state");
            const double g = grads[b][k];
            if (!std::isfinite(g)) throw numeric_error("optimizer: non-finite gradient");
            m_[off] = cfg_.beta1 * m_[off] + (1.0 - cfg_.beta1) * g;
            v_[off] = cfg_.beta2 * v_[off] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m_[off] / bc1;
            const double vhat = v_[off] / bc2;
            double& theta = params[b][k];
            theta -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * theta);
        }
    }
    if (off != m_.size()) throw validation_error("optimizer: fewer parameters than state");
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    // a lone trailing sample cannot form batch statistics
    if (batches.size() >= 2 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }
    return batches;
}

void check_training_inputs(const Matrix& x, const Targets& y, const TrainConfig& cfg) {
    if (x.rows() < 2) throw validation_error("training needs at least 2 samples");
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        if (y[a].size() != x.rows())
            throw validation_error("training labels misaligned with features");
        for (std::size_t v : y[a])
            if (v >= kNumClasses) throw validation_error("training label out of range");
    }
    if (cfg.batch_size < 2) throw validation_error("batch_size must be at least 2");
    if (cfg.patience < 1) throw validation_error("patience must be at least 1");
    if (cfg.max_epochs < 1) throw validation_error("max_epochs must be at least 1");
}

void run_epoch(MlpModel& model, AdamW& opt, const Matrix& x, const Targets& y,
               std::size_t batch_size, Rng& rng, std::size_t& steps) {
    const auto order = rng.permutation(x.rows());
    for (const auto& batch : make_batches(order, batch_size)) {
        const Matrix xb = take_rows(x, batch);
        const Targets yb = take_targets(y, batch);
        const Matrix mask = model.draw_mask(batch.size(), rng);
        ForwardCache cache;
        const auto logits = model.forward_train(xb, mask, cache, true);
        std::array<Matrix, kNumAspects> dlogits;
        joint_cross_entropy(logits, yb, &dlogits);
        const MlpGradients grads = model.backward(cache, dlogits);
        opt.step(model.params.blocks(), grads.blocks());
        ++steps;
    }
}

} // namespace

TrainOutcome train_early_stopped(const Matrix& x_train, const Targets& y_train,
                                 const Matrix& x_val, const Targets& y_val,
                                 const TrainConfig& cfg) {
    check_training_inputs(x_train, y_train, cfg);
    if (x_val.rows() == 0) throw validation_error("validation set is empty");
    if (x_val.cols() != x_train.cols())
        throw validation_error("validation features have a different width");
    for (std::size_t a = 0; a < kNumAspects; ++a)
        if (y_val[a].size() != x_val.rows())
            throw validation_error("validation labels misaligned with features");

    Rng rng(cfg.seed);
    MlpModel model(x_train.cols(), rng);
    AdamW opt(model.params.count());

    TrainOutcome out;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    MlpModel best_model = model;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        run_epoch(model, opt, x_train, y_train, cfg.batch_size, rng, out.optimizer_steps);
        const double val_loss = joint_cross_entropy(model.forward_eval(x_val), y_val);
        out.val_losses.push_back(val_loss);
        out.epochs_run = epoch;
        if (val_loss < best) {
            best = val_loss;
            best_epoch = epoch;
            best_model = model;
        }
        if (epoch - best_epoch >= cfg.patience) break;
    }

    out.model = std::move(best_model);
    out.t_star = best_epoch;
    return out;
}

RetrainOutcome retrain_fixed_epochs(const Matrix& x, const Targets& y, std::size_t t_star,
                                    const TrainConfig& cfg) {
    if (t_star < 1) throw validation_error("retraining needs at least 1 epoch");
    check_training_inputs(x, y, cfg);

    Rng rng(cfg.seed);
    RetrainOutcome out;
    MlpModel model(x.cols(), rng);
    AdamW opt(model.params.count());
    for (std::size_t epoch = 1; epoch <= t_star; ++epoch)
        run_epoch(model, opt, x, y, cfg.batch_size, rng, out.optimizer_steps);
    out.model = std::move(model);
    return out;
}

namespace {

ordered_json matrix_to_json(const Matrix& m) {
    return ordered_json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const ordered_json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

constexpr const char* kModelFormat = "esgstack-mlp/1";

} // namespace

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    ordered_json j;
    j["format"] = kModelFormat;
    j["d_in"] = model.d_in();
    j["dropout_rate"] = model.dropout_rate;
    j["bn"] = ordered_json{{"momentum", model.bn_momentum},
                           {"eps", model.bn_eps},
                           {"running_mean", model.running_mean},
                           {"running_var", model.running_var}};
    ordered_json p;
    p["w1"] = matrix_to_json(model.params.w1);
    p["b1"] = model.params.b1;
    p["gamma"] = model.params.gamma;
    p["beta"] = model.params.beta;
    p["w2"] = matrix_to_json(model.params.w2);
    p["b2"] = model.params.b2;
    ordered_json heads = ordered_json::array();
    for (std::size_t a = 0; a < kNumAspects; ++a) {
        heads.push_back(ordered_json{{"hidden_w", matrix_to_json(model.params.head_hidden_w[a])},
                                     {"hidden_b", model.params.head_hidden_b[a]},
                                     {"out_w", matrix_to_json(model.params.head_out_w[a])},
                                     {"out_b", model.params.head_out_b[a]}});
    }
    p["heads"] = std::move(heads);
    j["params"] = std::move(p);
    write_text_file(path, j.dump(2) + "\n");
}

MlpModel load_model(const std::filesystem::path& path) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_text_file(path));
    } catch (const std::exception& e) {
        throw validation_error("model checkpoint " + path.string() + ": bad JSON: " + e.what());
    }
    if (!j.contains("format") || j["format"] != kModelFormat)
        throw validation_error("model checkpoint " + path.string() +
                               ": unsupported or missing format tag");
    try {
        MlpModel model;
        model.dropout_rate = j.at("dropout_rate").get<double>();
        model.bn_momentum = j.at("bn").at("momentum").get<double>();
        model.bn_eps = j.at("bn").at("eps").get<double>();
        model.running_mean = j.at("bn").at("running_mean").get<std::vector<double>>();
        model.running_var = j.at("bn").at("running_var").get<std::vector<double>>();
        const auto& p = j.at("params");
        model.params.w1 = matrix_from_json(p.at("w1"));
        model.params.b1 = p.at("b1").get<std::vector<double>>();
        model.params.gamma = p.at("gamma").get<std::vector<double>>();
        model.params.beta = p.at("beta").get<std::vector<double>>();
        model.params.w2 = matrix_from_json(p.at("w2"));
        model.params.b2 = p.at("b2").get<std::vector<double>>();
        const auto& heads = p.at("heads");
        if (heads.size() != kNumAspects)
            throw validation_error("expected 3 heads");
        for (std::size_t a = 0; a < kNumAspects; ++a) {
            model.params.head_hidden_w[a] = matrix_from_json(heads[a].at("hidden_w"));
            model.params.head_hidden_b[a] = heads[a].at("hidden_b").get<std::vector<double>>();
            model.params.head_out_w[a] = matrix_from_json(heads[a].at("out_w"));
            model.params.head_out_b[a] = heads[a].at("out_b").get<std::vector<double>>();
        }
        const std::size_t d_in = model.params.w1.cols();
        const MlpParams shape = MlpParams::zeros(d_in);
        const auto want = shape.blocks();
        const auto got = static_cast<const MlpParams&>(model.params).blocks();
        for (std::size_t b = 0; b < want.size(); ++b)
            if (want[b].size() != got[b].size())
                throw validation_error("parameter block " + std::to_string(b) +
                                       " has the wrong shape");
        if (model.running_mean.size() != kTrunkWidth || model.running_var.size() != kTrunkWidth)
            throw validation_error("batch-norm state has the wrong width");
        for (double v : model.running_var)
            if (v < 0.0) throw validation_error("negative running variance");
        return model;
    } catch (const validation_error&) {
        throw;
    } catch (const std::exception& e) {
        throw validation_error("model checkpoint " + path.string() + ": " + e.what());
    }
}

} // namespace esgstack
