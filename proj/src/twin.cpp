#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "rfat/error.hpp"
#include "rfat/twin.hpp"

namespace rfat {

bool FilterTwin::stable() const {
    for (const auto& p : tf.poles()) {
        if (!(std::abs(p) < 1.0)) return false;
    }
    return true;
}

FilterTwin build_filter_twin(double bw_hz, double sample_rate_hz, int order) {
    return FilterTwin{design_butterworth_lowpass(bw_hz, sample_rate_hz, order), bw_hz, sample_rate_hz};
}

ChainOutput twin_run_chain(const TwinChain& twin, const IqFrame& stimulus, const HardwareConfig& config,
                           const Scenario& assumed_scenario) {
    const IfStage stage = std::visit(
        [](const auto& model) -> IfStage {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, ArvtdnnModel>) {
                return [&model](std::span<const cplx> u) { return arvtdnn_forward(model, u); };
            } else {
                return [&model](std::span<const cplx> u) { return memory_polynomial(u, model); };
            }
        },
        twin.if_amp);
    return run_receiver_pipeline(stimulus, config, assumed_scenario, twin.constants, stage);
}

ValidationData export_validation_data(const ArvtdnnModel& model, std::span<const MemoryPolyTerm> truth,
                                      const IqFrame& drive) {
    const CVec truth_out = memory_polynomial(drive.samples, truth);
    const CVec twin_out = arvtdnn_forward(model, drive.samples);
    constexpr int kWindow = 256;
    const double fs = drive.sample_rate_hz;
    const auto in_spec = stft(drive.samples, kWindow, kWindow / 2, fs);
    const auto in_psd = in_spec.mean_power();
    const auto truth_psd = stft(truth_out, kWindow, kWindow / 2, fs).mean_power();
    const auto twin_psd = stft(twin_out, kWindow, kWindow / 2, fs).mean_power();
    const auto db = [](double p) { return p > 0.0 ? std::max(10.0 * std::log10(p), kPowerFloorDb) : kPowerFloorDb; };

    ValidationData data;
    for (int i = 0; i < kWindow; ++i) {
        const auto k = static_cast<std::size_t>(i);
        data.psd.push_back({in_spec.bin_frequency_hz(i), db(in_psd[k]), db(truth_psd[k]), db(twin_psd[k])});
    }
    data.amam.reserve(drive.samples.size());
    for (std::size_t n = 0; n < drive.samples.size(); ++n) {
        data.amam.push_back({std::abs(drive.samples[n]), std::abs(truth_out[n]), std::abs(twin_out[n])});
    }
    return data;
}

void write_psd_csv(const ValidationData& data, std::uint64_t seed, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "# schema_version=1 seed=" << seed << '\n';
    out << std::setprecision(17) << "freq_hz,input_db,truth_db,twin_db\n";
    for (const auto& r : data.psd) out << r.freq_hz << ',' << r.input_db << ',' << r.truth_db << ',' << r.twin_db << '\n';
}

void write_amam_csv(const ValidationData& data, std::uint64_t seed, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "# schema_version=1 seed=" << seed << '\n';
    out << std::setprecision(17) << "in_env,truth_out_env,twin_out_env\n";
    for (const auto& r : data.amam) out << r.in_env << ',' << r.truth_out_env << ',' << r.twin_out_env << '\n';
}

double compression_1db_drive(std::span<const MemoryPolyTerm> terms) {
    const auto gain = [&](double a) {
        cplx g{};
        for (const auto& t : terms) {
            if (t.lag == 0) g += t.coeff * std::pow(a, t.order - 1);
        }
        return std::abs(g);
    };
    const double target = std::pow(10.0, -1.0 / 20.0) * gain(0.0);
    double lo = 0.0;
    double hi = 0.0;
    // Bracket the first crossing by scanning upward.
    for (double a = 0.01; a <= 10.0; a += 0.01) {
        if (gain(a) <= target) {
            hi = a;
            break;
        }
        lo = a;
    }
    if (hi == 0.0) throw ParameterError("compression_1db_drive: polynomial never compresses by 1 dB");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gain(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double amam_gain_gap_db(std::span<const AmAmRow> rows, double min_env, double max_env, int n_bins) {
    if (n_bins < 1 || !(max_env > min_env)) throw ParameterError("amam_gain_gap_db: bad binning");
    std::vector<double> truth_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> twin_sum(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<int> count(static_cast<std::size_t>(n_bins), 0);
    const double width = (max_env - min_env) / n_bins;
    for (const auto& r : rows) {
        if (!(r.in_env > min_env) || r.in_env > max_env) continue;
        const auto b = static_cast<std::size_t>(std::min(n_bins - 1, static_cast<int>((r.in_env - min_env) / width)));
        truth_sum[b] += r.truth_out_env / r.in_env;
        twin_sum[b] += r.twin_out_env / r.in_env;
        ++count[b];
    }
    double worst = 0.0;
    for (std::size_t b = 0; b < count.size(); ++b) {
        if (count[b] == 0) continue;
        worst = std::max(worst, std::abs(20.0 * std::log10(twin_sum[b] / truth_sum[b])));
    }
    return worst;
}

}  // namespace rfat
