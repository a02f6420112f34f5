#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

#include "rfat/dataset.hpp"
#include "rfat/error.hpp"

namespace rfat {

namespace {

constexpr double kJitterSteps[] = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& x, const std::vector<double>& ls, double sf2) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = sf2;
        for (Eigen::Index j = 0; j < i; ++j) {
            double d2 = 0.0;
            for (Eigen::Index d = 0; d < x.cols(); ++d) {
                const double u = (x(i, d) - x(j, d)) / ls[static_cast<std::size_t>(d)];
                d2 += u * u;
            }
            k(i, j) = k(j, i) = sf2 * std::exp(-0.5 * d2);
        }
    }
    return k;
}

struct Factor {
    Eigen::MatrixXd lower;
    double jitter = 0.0;
};

std::optional<Factor> factorize(const Eigen::MatrixXd& k, double noise_variance, double scale) {
    const Eigen::Index n = k.rows();
    for (double j : kJitterSteps) {
        Eigen::MatrixXd a = k;
        a.diagonal().array() += noise_variance + j * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) continue;
        Eigen::MatrixXd l = llt.matrixL();
        bool ok = true;
        for (Eigen::Index i = 0; i < n && ok; ++i) ok = std::isfinite(l(i, i)) && l(i, i) > 0.0;
        if (ok) return Factor{std::move(l), j * scale};
    }
    return std::nullopt;
}

double lml_from_factor(const Factor& f, const Eigen::VectorXd& y) {
    const Eigen::VectorXd v = f.lower.triangularView<Eigen::Lower>().solve(y);
    const double log_det = 2.0 * f.lower.diagonal().array().log().sum();
    return -0.5 * v.squaredNorm() - 0.5 * log_det - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

Eigen::VectorXd gp_input(const HardwareConfig& config, double input_power_dbfs) {
    Eigen::VectorXd x(kGpDims);
    for (std::size_t i = 0; i < kAllParams.size(); ++i) {
        const Param p = kAllParams[i];
        x(static_cast<Eigen::Index>(i)) = HardwareConfig::range(p).normalize(config.get(p));
    }
    x(kGpDims - 1) = Scenario::power_range().normalize(input_power_dbfs);
    return x;
}

double gp_log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                  const std::vector<double>& length_scales, double signal_variance,
                                  double noise_variance) {
    const auto f = factorize(kernel_matrix(inputs, length_scales, signal_variance), noise_variance, signal_variance);
    if (!f) return -std::numeric_limits<double>::infinity();
    return lml_from_factor(*f, targets.array() - targets.mean());
}

GpSurrogate gp_fit_points(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const GpOptions& options) {
    const Eigen::Index n = inputs.rows();
    if (n < 2 || targets.size() != n) throw ParameterError("gp_fit: need at least 2 points with one target each");
    if (!inputs.allFinite() || !targets.allFinite()) throw ParameterError("gp_fit: non-finite training data");

    GpSurrogate gp;
    gp.inputs = inputs;
    gp.targets = targets;
    gp.prior_mean = targets.mean();
    const Eigen::VectorXd y = targets.array() - gp.prior_mean;
    const double var = y.squaredNorm() / static_cast<double>(n);
    gp.signal_variance = var > 0.0 ? var : 1.0;
    gp.noise_variance = options.noise_variance.value_or(options.noise_ratio * gp.signal_variance);

    const auto d = static_cast<std::size_t>(inputs.cols());
    if (options.length_scales) {
        if (options.length_scales->size() != d) throw ParameterError("gp_fit: length_scales size mismatch");
        gp.length_scales = *options.length_scales;
    } else {
        if (options.length_grid.empty()) throw ParameterError("gp_fit: empty length-scale grid");
        gp.length_scales.assign(d, options.length_grid[options.length_grid.size() / 2]);
        double best = gp_log_marginal_likelihood(inputs, targets, gp.length_scales, gp.signal_variance,
                                                 gp.noise_variance);
        for (int sweep = 0; sweep < options.sweeps; ++sweep) {
            for (std::size_t dim = 0; dim < d; ++dim) {
                auto trial = gp.length_scales;
                for (double l : options.length_grid) {
                    trial[dim] = l;
                    const double v = gp_log_marginal_likelihood(inputs, targets, trial, gp.signal_variance,
                                                                gp.noise_variance);
                    if (v > best) {
                        best = v;
                        gp.length_scales[dim] = l;
                    }
                }
            }
        }
    }
    for (double l : gp.length_scales) {
        if (!(l > 0.0)) throw ParameterError("gp_fit: length scales must be positive");
    }

    auto f = factorize(kernel_matrix(inputs, gp.length_scales, gp.signal_variance), gp.noise_variance,
                       gp.signal_variance);
    if (!f) throw FitError("gp_fit: kernel matrix is singular after jitter escalation");
    gp.chol_lower = std::move(f->lower);
    gp.jitter = f->jitter;
    const Eigen::VectorXd v = gp.chol_lower.triangularView<Eigen::Lower>().solve(y);
    gp.alpha = gp.chol_lower.transpose().triangularView<Eigen::Upper>().solve(v);
    return gp;
}

GpSurrogate gp_fit(std::span<const DatasetRecord> records, const GpOptions& options) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), kGpDims);
    Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        x.row(r) = gp_input(records[i].config, records[i].scenario.input_power_dbfs).transpose();
        y(r) = std::log10(std::max(records[i].evm_percent, 1e-6));
    }
    return gp_fit_points(x, y, options);
}

GpPrediction gp_posterior(const GpSurrogate& gp, const Eigen::VectorXd& x) {
    if (x.size() != gp.inputs.cols()) throw ParameterError("gp_posterior: input dimension mismatch");
    const Eigen::Index n = gp.inputs.rows();
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double d2 = 0.0;
        for (Eigen::Index d = 0; d < x.size(); ++d) {
            const double u = (x(d) - gp.inputs(i, d)) / gp.length_scales[static_cast<std::size_t>(d)];
            d2 += u * u;
        }
        ks(i) = gp.signal_variance * std::exp(-0.5 * d2);
    }
    const Eigen::VectorXd v = gp.chol_lower.triangularView<Eigen::Lower>().solve(ks);
    return {gp.prior_mean + ks.dot(gp.alpha), std::max(0.0, gp.signal_variance - v.squaredNorm())};
}

double expected_improvement(double mean, double variance, double best) {
    const double sigma = std::sqrt(std::max(variance, 0.0));
    const double gain = best - mean;
    if (sigma == 0.0) return std::max(0.0, gain);
    const double z = gain / sigma;
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return std::max(0.0, gain * cdf + sigma * pdf);
}

BoTrace bo_minimize(const std::function<double(const HardwareConfig&)>& objective, const Eigen::MatrixXd& prior_inputs,
                    const Eigen::VectorXd& prior_values, double input_power_dbfs, int n_init, int n_bo,
                    std::uint64_t seed, const BoOptions& options) {
    if (n_init < 2 || n_bo < 0) throw ParameterError("bo_run: need n_init >= 2 and n_bo >= 0");
    if (options.candidate_pool < 1) throw ParameterError("bo_run: candidate pool must be positive");
    if (prior_inputs.rows() != prior_values.size()) throw ParameterError("bo_run: prior inputs/values mismatch");

    BoTrace trace;
    const auto add = [&](const HardwareConfig& c) {
        const double v = objective(c);
        trace.configs.push_back(c);
        trace.values.push_back(v);
        if (trace.values.size() == 1 || v < trace.values[trace.best_index]) trace.best_index = trace.values.size() - 1;
    };
    for (int i = 0; i < n_init; ++i) add(random_config(record_seed(seed, static_cast<std::uint64_t>(i))));

    const Eigen::Index np = prior_inputs.rows();
    for (int step = 0; step < n_bo; ++step) {
        const auto n_own = static_cast<Eigen::Index>(trace.configs.size());
        Eigen::MatrixXd x(np + n_own, kGpDims);
        Eigen::VectorXd y(np + n_own);
        if (np > 0) {
            x.topRows(np) = prior_inputs;
            y.head(np) = prior_values;
        }
        for (Eigen::Index i = 0; i < n_own; ++i) {
            x.row(np + i) = gp_input(trace.configs[static_cast<std::size_t>(i)], input_power_dbfs).transpose();
            y(np + i) = trace.values[static_cast<std::size_t>(i)];
        }

        const std::uint64_t step_seed = record_seed(seed ^ 0xb0b0b0b0ULL, static_cast<std::uint64_t>(step));
        std::mt19937_64 rng(step_seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const auto draw = [&] {
            HardwareConfig c;
            for (Param p : kAllParams) c.set(p, HardwareConfig::range(p).denormalize(unit(rng)));
            return c;
        };

        std::optional<GpSurrogate> gp;
        try {
            gp = gp_fit_points(x, y, options.gp);
        } catch (const FitError& e) {
            spdlog::warn("bo step {}: {}; proposing at random", step, e.what());
        }
        if (!gp) {
            add(draw());
            continue;
        }
        const double best = trace.values[trace.best_index];
        HardwareConfig chosen;
        double chosen_ei = -1.0;
        for (int c = 0; c < options.candidate_pool; ++c) {
            const HardwareConfig cand = draw();
            const auto post = gp_posterior(*gp, gp_input(cand, input_power_dbfs));
            const double ei = expected_improvement(post.mean, post.variance, best);
            if (ei > chosen_ei) {
                chosen_ei = ei;
                chosen = cand;
            }
        }
        add(chosen);
    }
    return trace;
}

BoResult bo_run(const Executor& executor, const IqFrame& stimulus, const Scenario& fixed_scenario, int n_init,
                int n_bo, std::uint64_t seed, std::span<const DatasetRecord> prior, const BoOptions& options) {
    fixed_scenario.validate();
    const BucketKey bucket = bucket_of(fixed_scenario);
    std::vector<const DatasetRecord*> same;
    for (const auto& r : prior) {
        if (bucket_of(r.scenario) == bucket) same.push_back(&r);
    }
    Eigen::MatrixXd px(static_cast<Eigen::Index>(same.size()), kGpDims);
    Eigen::VectorXd py(static_cast<Eigen::Index>(same.size()));
    for (std::size_t i = 0; i < same.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        px.row(r) = gp_input(same[i]->config, same[i]->scenario.input_power_dbfs).transpose();
        py(r) = std::log10(std::max(same[i]->evm_percent, 1e-6));
    }

    BoResult result;
    std::uint64_t index = 0;
    const auto objective = [&](const HardwareConfig& c) {
        const auto source = index < static_cast<std::uint64_t>(n_init) ? RecordSource::Random : RecordSource::Bo;
        result.records.push_back(
            evaluate_config(executor, stimulus, fixed_scenario, c, source, record_seed(seed, index)));
        ++index;
        return std::log10(std::max(result.records.back().evm_percent, 1e-6));
    };
    const BoTrace trace = bo_minimize(objective, px, py, fixed_scenario.input_power_dbfs, n_init, n_bo, seed, options);

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < result.records.size(); ++i) {
        best = std::min(best, result.records[i].evm_percent);
        if (i + 1 >= static_cast<std::size_t>(n_init)) result.incumbent_trace.push_back(best);
    }
    result.best_config = result.records[trace.best_index].config;
    result.best_evm_percent = result.records[trace.best_index].evm_percent;
    return result;
}

}  // namespace rfat
