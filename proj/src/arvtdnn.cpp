#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "rfat/error.hpp"
#include "rfat/twin.hpp"

namespace rfat {

namespace {

Eigen::MatrixXd targets_matrix(std::span<const cplx> y) {
    Eigen::MatrixXd t(2, static_cast<Eigen::Index>(y.size()));
    for (std::size_t n = 0; n < y.size(); ++n) {
        t(0, static_cast<Eigen::Index>(n)) = y[n].real();
        t(1, static_cast<Eigen::Index>(n)) = y[n].imag();
    }
    return t;
}

// Returns the activations of every layer; acts[0] is the input.
std::vector<Eigen::MatrixXd> forward_pass(const ArvtdnnModel& model, const Eigen::MatrixXd& features) {
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(model.layers.size() + 1);
    acts.push_back(features);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        Eigen::MatrixXd z = layer.weights * acts.back();
        z.colwise() += layer.bias;
        if (l + 1 < model.layers.size()) z = z.array().tanh().matrix();
        acts.push_back(std::move(z));
    }
    return acts;
}

double pooled_nmse_db(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& outputs) {
    const double ref = targets.squaredNorm();
    if (ref == 0.0) throw ParameterError("nmse: all-zero reference");
    const double err = (outputs - targets).squaredNorm();
    if (err == 0.0) return -120.0;
    return std::max(10.0 * std::log10(err / ref), -120.0);
}

struct AdamState {
    std::vector<DenseLayer> m;
    std::vector<DenseLayer> v;
};

AdamState zero_like(const std::vector<DenseLayer>& layers) {
    AdamState s;
    for (const auto& l : layers) {
        s.m.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::VectorXd::Zero(l.bias.size())});
        s.v.push_back(s.m.back());
    }
    return s;
}

}  // namespace

void ArvtdnnModel::validate() const {
    if (memory_depth < 0) throw ParameterError("ArvtdnnModel: memory depth must be >= 0");
    if (envelope_order < 1) throw ParameterError("ArvtdnnModel: envelope order must be >= 1");
    if (layers.size() != hidden_sizes.size() + 1) throw ParameterError("ArvtdnnModel: layer count mismatch");
    Eigen::Index width = input_width();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const Eigen::Index rows = l < hidden_sizes.size() ? hidden_sizes[l] : 2;
        if (layer.weights.cols() != width) {
            throw ParameterError("ArvtdnnModel: layer " + std::to_string(l) + " expects " +
                                 std::to_string(layer.weights.cols()) + " inputs, got " + std::to_string(width));
        }
        if (layer.weights.rows() != rows || layer.bias.size() != rows) {
            throw ParameterError("ArvtdnnModel: layer " + std::to_string(l) + " has wrong output size");
        }
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
            throw ParameterError("ArvtdnnModel: non-finite weights in layer " + std::to_string(l));
        }
        width = rows;
    }
}

std::size_t ArvtdnnModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

ArvtdnnModel ArvtdnnModel::initialized(int memory_depth, int envelope_order, std::vector<int> hidden_sizes,
                                       std::uint64_t seed) {
    ArvtdnnModel model;
    model.memory_depth = memory_depth;
    model.envelope_order = envelope_order;
    model.hidden_sizes = std::move(hidden_sizes);
    std::mt19937_64 rng(seed);
    int fan_in = model.input_width();
    for (std::size_t l = 0; l <= model.hidden_sizes.size(); ++l) {
        const int fan_out = l < model.hidden_sizes.size() ? model.hidden_sizes[l] : 2;
        if (fan_out < 1) throw ParameterError("ArvtdnnModel: hidden sizes must be positive");
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = dist(rng);
        }
        model.layers.push_back(std::move(layer));
        fan_in = fan_out;
    }
    model.training.seed = seed;
    model.validate();
    return model;
}

std::vector<double> arvtdnn_features(std::span<const cplx> window, int memory_depth, int envelope_order) {
    if (memory_depth < 0 || window.size() != static_cast<std::size_t>(memory_depth + 1)) {
        throw ParameterError("arvtdnn_features: window length must be M + 1");
    }
    if (envelope_order < 1) throw ParameterError("arvtdnn_features: envelope order must be >= 1");
    std::vector<double> f;
    f.reserve(window.size() * static_cast<std::size_t>(2 + envelope_order));
    for (const auto& v : window) {
        f.push_back(v.real());
        f.push_back(v.imag());
    }
    for (const auto& v : window) {
        const double env = std::abs(v);
        double p = env;
        for (int k = 1; k <= envelope_order; ++k, p *= env) f.push_back(p);
    }
    return f;
}

Eigen::MatrixXd arvtdnn_feature_matrix(std::span<const cplx> x, int memory_depth, int envelope_order) {
    const int taps = memory_depth + 1;
    const int width = taps * (2 + envelope_order);
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(width, static_cast<Eigen::Index>(x.size()));
    std::vector<double> env(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) env[n] = std::abs(x[n]);
    for (std::size_t n = 0; n < x.size(); ++n) {
        const auto col = static_cast<Eigen::Index>(n);
        for (int m = 0; m < taps && static_cast<std::size_t>(m) <= n; ++m) {
            const cplx v = x[n - static_cast<std::size_t>(m)];
            f(2 * m, col) = v.real();
            f(2 * m + 1, col) = v.imag();
            const double e = env[n - static_cast<std::size_t>(m)];
            double p = e;
            const int base = 2 * taps + m * envelope_order;
            for (int k = 0; k < envelope_order; ++k, p *= e) f(base + k, col) = p;
        }
    }
    return f;
}

CVec arvtdnn_forward(const ArvtdnnModel& model, std::span<const cplx> x) {
    model.validate();
    for (const auto& v : x) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            throw ParameterError("arvtdnn_forward: non-finite input sample");
        }
    }
    const auto features = arvtdnn_feature_matrix(x, model.memory_depth, model.envelope_order);
    const auto acts = forward_pass(model, features);
    const auto& out = acts.back();
    CVec y(x.size());
    for (std::size_t n = 0; n < y.size(); ++n) {
        y[n] = {out(0, static_cast<Eigen::Index>(n)), out(1, static_cast<Eigen::Index>(n))};
    }
    return y;
}

double arvtdnn_loss_and_gradient(const ArvtdnnModel& model, const Eigen::MatrixXd& features,
                                 const Eigen::MatrixXd& targets, std::vector<DenseLayer>& gradient) {
    const auto acts = forward_pass(model, features);
    const double batch = static_cast<double>(features.cols());
    Eigen::MatrixXd delta = acts.back() - targets;
    const double loss = delta.squaredNorm() / batch;
    delta *= 2.0 / batch;

    gradient.resize(model.layers.size());
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        gradient[l].weights = delta * acts[l].transpose();
        gradient[l].bias = delta.rowwise().sum();
        if (l > 0) {
            delta = (model.layers[l].weights.transpose() * delta).cwiseProduct(
                (1.0 - acts[l].array().square()).matrix());
        }
    }
    return loss;
}

TrainResult arvtdnn_train(std::span<const FramePair> pairs, int memory_depth, int envelope_order,
                          std::vector<int> hidden_sizes, const TrainingSettings& settings, std::uint64_t seed) {
    if (pairs.empty()) throw ParameterError("arvtdnn_train: need at least one frame pair");
    if (settings.epochs < 2) throw ParameterError("arvtdnn_train: need at least two epochs");
    if (settings.batch_size < 1) throw ParameterError("arvtdnn_train: batch size must be positive");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].input.size() != pairs[i].target.size() || pairs[i].input.empty()) {
            throw ParameterError("arvtdnn_train: frame pair " + std::to_string(i) + " is misaligned");
        }
    }

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_val = pairs.size() >= 2
                            ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(
                                                           settings.validation_fraction * pairs.size())))
                            : 0;
    n_val = std::min(n_val, pairs.size() - 1);

    const auto stack = [&](std::size_t first, std::size_t last, Eigen::MatrixXd& f, Eigen::MatrixXd& t) {
        Eigen::Index cols = 0;
        for (std::size_t i = first; i < last; ++i) cols += static_cast<Eigen::Index>(pairs[order[i]].input.size());
        const int width = (memory_depth + 1) * (2 + envelope_order);
        f.resize(width, cols);
        t.resize(2, cols);
        Eigen::Index at = 0;
        for (std::size_t i = first; i < last; ++i) {
            const auto& p = pairs[order[i]];
            const auto n = static_cast<Eigen::Index>(p.input.size());
            f.middleCols(at, n) = arvtdnn_feature_matrix(p.input, memory_depth, envelope_order);
            t.middleCols(at, n) = targets_matrix(p.target);
            at += n;
        }
    };
    Eigen::MatrixXd train_f, train_t, val_f, val_t;
    stack(0, pairs.size() - n_val, train_f, train_t);
    if (n_val > 0) {
        stack(pairs.size() - n_val, pairs.size(), val_f, val_t);
    } else {
        val_f = train_f;
        val_t = train_t;
    }

    TrainResult result;
    result.model = ArvtdnnModel::initialized(memory_depth, envelope_order, std::move(hidden_sizes), seed);
    auto& model = result.model;
    auto& report = result.report;
    ArvtdnnModel best = model;
    double best_nmse = std::numeric_limits<double>::infinity();
    int stagnant = 0;

    AdamState adam = zero_like(model.layers);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    std::vector<Eigen::Index> columns(static_cast<std::size_t>(train_f.cols()));
    std::iota(columns.begin(), columns.end(), Eigen::Index{0});
    std::vector<DenseLayer> grad;
    Eigen::MatrixXd batch_f, batch_t;

    for (int epoch = 0; epoch < settings.epochs; ++epoch) {
        std::shuffle(columns.begin(), columns.end(), rng);
        const double lr = settings.learning_rate / (1.0 + settings.lr_decay * epoch);
        double loss_sum = 0.0;
        Eigen::Index seen = 0;
        for (std::size_t start = 0; start < columns.size(); start += static_cast<std::size_t>(settings.batch_size)) {
            const std::size_t stop = std::min(columns.size(), start + static_cast<std::size_t>(settings.batch_size));
            const auto n = static_cast<Eigen::Index>(stop - start);
            batch_f.resize(train_f.rows(), n);
            batch_t.resize(2, n);
            for (Eigen::Index j = 0; j < n; ++j) {
                const Eigen::Index c = columns[start + static_cast<std::size_t>(j)];
                batch_f.col(j) = train_f.col(c);
                batch_t.col(j) = train_t.col(c);
            }
            const double loss = arvtdnn_loss_and_gradient(model, batch_f, batch_t, grad);
            if (!std::isfinite(loss)) {
                throw TrainingError("arvtdnn_train: loss became non-finite at epoch " + std::to_string(epoch + 1));
            }
            loss_sum += loss * static_cast<double>(n);
            seen += n;

            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                auto& m = adam.m[l];
                auto& v = adam.v[l];
                m.weights = beta1 * m.weights + (1.0 - beta1) * grad[l].weights;
                v.weights = beta2 * v.weights + (1.0 - beta2) * grad[l].weights.cwiseAbs2();
                m.bias = beta1 * m.bias + (1.0 - beta1) * grad[l].bias;
                v.bias = beta2 * v.bias + (1.0 - beta2) * grad[l].bias.cwiseAbs2();
                model.layers[l].weights.array() -=
                    lr * (m.weights.array() / c1) / ((v.weights.array() / c2).sqrt() + eps);
                model.layers[l].bias.array() -= lr * (m.bias.array() / c1) / ((v.bias.array() / c2).sqrt() + eps);
            }
        }
        const double epoch_loss = loss_sum / static_cast<double>(seen);
        if (!std::isfinite(epoch_loss)) {
            throw TrainingError("arvtdnn_train: loss became non-finite at epoch " + std::to_string(epoch + 1));
        }
        report.epoch_loss.push_back(epoch_loss);

        const double val_nmse = pooled_nmse_db(val_t, forward_pass(model, val_f).back());
        report.validation_nmse_db.push_back(val_nmse);
        if (val_nmse < best_nmse) {
            best_nmse = val_nmse;
            best = model;
            report.best_epoch = epoch + 1;
            stagnant = 0;
        } else if (++stagnant >= settings.patience) {
            break;
        }
    }

    if (!(report.epoch_loss.back() < report.epoch_loss.front())) {
        throw TrainingError("arvtdnn_train: final epoch loss did not improve on the first epoch");
    }
    best.training.seed = seed;
    best.training.epochs = static_cast<int>(report.epoch_loss.size());
    best.training.final_nmse_db = best_nmse;
    report.final_nmse_db = best_nmse;
    model = std::move(best);
    return result;
}

double nmse_db(std::span<const cplx> reference, std::span<const cplx> estimate) {
    if (reference.size() != estimate.size()) throw ParameterError("nmse_db: length mismatch");
    if (reference.empty()) throw ParameterError("nmse_db: empty input");
    double ref = 0.0, err = 0.0;
    for (std::size_t n = 0; n < reference.size(); ++n) {
        ref += std::norm(reference[n]);
        err += std::norm(estimate[n] - reference[n]);
    }
    if (ref == 0.0) throw ParameterError("nmse_db: all-zero reference");
    if (err == 0.0) return -120.0;
    return std::max(10.0 * std::log10(err / ref), -120.0);
}

std::vector<FramePair> make_if_amp_training_set(int n_frames, double min_drive_dbfs, double max_drive_dbfs,
                                                std::span<const MemoryPolyTerm> truth, std::uint64_t seed) {
    if (n_frames < 1) throw ParameterError("make_if_amp_training_set: need at least one frame");
    if (!(min_drive_dbfs <= max_drive_dbfs)) throw ParameterError("make_if_amp_training_set: bad drive range");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<FramePair> pairs;
    pairs.reserve(static_cast<std::size_t>(n_frames));
    for (int i = 0; i < n_frames; ++i) {
        const IqFrame frame = generate_qam_frame(256, 16, 8, 0.25, rng());
        const double fs = frame.sample_rate_hz;
        const double shift = (unit(rng) * 2.0 - 1.0) * 25e3;
        const double bw = 50e3 + unit(rng) * 350e3;
        const double dc_rel = 0.8 * unit(rng);
        // Drive levels are spread evenly over the range so every frame set covers it.
        const double drive = n_frames == 1 ? max_drive_dbfs
                                           : min_drive_dbfs + (max_drive_dbfs - min_drive_dbfs) * i / (n_frames - 1.0);
        const double w = 2.0 * std::numbers::pi * shift / fs;
        CVec x(frame.samples.size());
        for (std::size_t n = 0; n < x.size(); ++n) x[n] = frame.samples[n] * std::polar(1.0, w * static_cast<double>(n)) + dc_rel;
        const CVec floor = complex_noise(x.size(), -40.0, rng());
        for (std::size_t n = 0; n < x.size(); ++n) x[n] += floor[n];
        x = filter_apply(x, bw, fs);
        const double p = std::pow(10.0, measure_power_dbfs(x) / 10.0);
        const double scale = std::sqrt(std::pow(10.0, drive / 10.0) / p);
        for (auto& v : x) v *= scale;
        FramePair pair;
        pair.target = memory_polynomial(x, truth);
        pair.input = std::move(x);
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

}  // namespace rfat
