#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>

#include <spdlog/spdlog.h>

#include "rfat/agents.hpp"
#include "rfat/error.hpp"

namespace rfat {

ScenarioEstimate estimate_scenario(const FeatureVector& f, const ChainConstants& constants,
                                   double occupied_bandwidth_hz) {
    ScenarioEstimate est;
    est.input_power_dbfs = f.p_lna_dbfs - constants.lna_gain_db(f.current_config.lna_vdd);

    const auto n = static_cast<int>(f.spectrum_db.size());
    double observed = 0.0;
    if (n >= 3 && f.spectrum_bin_hz > 0.0) {
        std::vector<double> p(f.spectrum_db.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = f.spectrum_db[i] <= kPowerFloorDb ? 0.0 : std::pow(10.0, f.spectrum_db[i] / 10.0);
        }
        const int half = std::clamp(static_cast<int>(std::lround(0.5 * occupied_bandwidth_hz / f.spectrum_bin_hz)), 0,
                                    (n - 3) / 2);
        std::vector<double> window(static_cast<std::size_t>(n), 0.0);
        for (int c = half; c < n - half; ++c) {
            double s = 0.0;
            for (int i = c - half; i <= c + half; ++i) s += p[static_cast<std::size_t>(i)];
            window[static_cast<std::size_t>(c)] = s;
        }
        int best = half;
        for (int c = half; c < n - half; ++c) {
            if (window[static_cast<std::size_t>(c)] > window[static_cast<std::size_t>(best)]) best = c;
        }
        if (window[static_cast<std::size_t>(best)] > 0.0) {
            double delta = 0.0;
            if (best > half && best < n - half - 1) {
                const double a = window[static_cast<std::size_t>(best - 1)];
                const double b = window[static_cast<std::size_t>(best)];
                const double c = window[static_cast<std::size_t>(best + 1)];
                const double denom = a - 2.0 * b + c;
                if (denom < 0.0) delta = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
            }
            observed = (best - n / 2 + 1 + delta) * f.spectrum_bin_hz;
        }
    }
    // The mixer shifts the band by (cfo - lo), so add the LO offset back.
    est.cfo_hz = observed + f.current_config.lo_freq_offset_hz;
    return est;
}

Scenario to_scenario(const ScenarioEstimate& est, std::uint64_t eval_seed) {
    Scenario s;
    s.input_power_dbfs = Scenario::power_range().clamp(std::isfinite(est.input_power_dbfs) ? est.input_power_dbfs : -50.0);
    s.carrier_offset_hz = Scenario::cfo_range().clamp(std::isfinite(est.cfo_hz) ? est.cfo_hz : 0.0);
    s.noise_seed = eval_seed;
    return s;
}

CoordinateResult coordinate(const std::vector<std::vector<Candidate>>& proposals, const Executor& twin,
                            const IqFrame& stimulus, const Scenario& scenario_est, const HardwareConfig& incumbent,
                            int budget) {
    if (budget < 1) throw ParameterError("coordinate: budget must be >= 1");
    if (proposals.size() != kComponentOrder.size()) throw ParameterError("coordinate: need one proposal list per agent");
    incumbent.validate();

    CoordinateResult result;
    std::map<std::array<double, 5>, double> cache;
    const auto evaluate = [&](const HardwareConfig& c) -> std::optional<double> {
        std::array<double, 5> key{};
        for (std::size_t i = 0; i < kAllParams.size(); ++i) key[i] = c.get(kAllParams[i]);
        if (const auto it = cache.find(key); it != cache.end()) return it->second;
        if (result.evaluations >= budget) return std::nullopt;
        ++result.evaluations;
        const double evm = twin(stimulus, c, scenario_est).evm_percent;
        cache.emplace(key, evm);
        return evm;
    };

    HardwareConfig working = incumbent;
    double working_evm = *evaluate(incumbent);
    result.incumbent_evm_percent = working_evm;

    for (int pass = 0; pass < 2 && !result.budget_exhausted; ++pass) {
        for (std::size_t a = 0; a < kComponentOrder.size() && !result.budget_exhausted; ++a) {
            HardwareConfig best = working;
            double best_evm = working_evm;
            for (const auto& cand : proposals[a]) {
                HardwareConfig trial = working;
                apply_candidate(kComponentOrder[a], cand, trial);
                const auto evm = evaluate(trial);
                if (!evm) {
                    result.budget_exhausted = true;
                    spdlog::debug("coordinate: budget of {} twin runs exhausted", budget);
                    break;
                }
                if (*evm < best_evm) {
                    best_evm = *evm;
                    best = trial;
                }
            }
            working = best;
            working_evm = best_evm;
        }
    }
    result.config = working;
    result.predicted_evm_percent = working_evm;
    return result;
}

ControlTrace control_loop(const Executor& chain, const Executor& twin, const std::vector<Agent>& agents,
                          std::span<const Scenario> schedule, const IqFrame& stimulus, const LoopOptions& options) {
    std::vector<const Agent*> ordered;
    for (ComponentId c : kComponentOrder) {
        const auto it = std::find_if(agents.begin(), agents.end(), [c](const Agent& a) { return a.component == c; });
        if (it == agents.end()) throw StateError("control_loop: no agent for " + std::string(component_name(c)));
        ordered.push_back(&*it);
    }
    options.initial_config.validate();

    ControlTrace trace;
    HardwareConfig current = options.initial_config;
    for (std::size_t t = 0; t < schedule.size(); ++t) {
        const Scenario& truth = schedule[t];
        const ChainOutput before = chain(stimulus, current, truth);
        const FeatureVector f = observe(before, current);
        const ScenarioEstimate est = estimate_scenario(f, options.constants);

        std::vector<std::vector<Candidate>> proposals;
        for (const Agent* a : ordered) proposals.push_back(agent_propose(*a, est));
        const Scenario assumed = to_scenario(est, options.eval_seed);
        const CoordinateResult choice = coordinate(proposals, twin, stimulus, assumed, current, options.budget);

        choice.config.validate();
        current = choice.config;
        const ChainOutput after = chain(stimulus, current, truth);

        ControlStep s;
        s.step = static_cast<int>(t);
        s.true_scenario = truth;
        s.estimate = est;
        s.config = current;
        s.evm_measured_percent = after.evm_percent;
        s.evm_predicted_percent = choice.predicted_evm_percent;
        spdlog::info("step {}: est {:.1f} dBFS / {:.0f} Hz, evm {:.2f}% (twin {:.2f}%)", t, est.input_power_dbfs,
                     est.cfo_hz, s.evm_measured_percent, s.evm_predicted_percent);
        trace.steps.push_back(s);
    }
    return trace;
}

std::vector<double> fixed_config_evm(const Executor& chain, const HardwareConfig& config,
                                     std::span<const Scenario> schedule, const IqFrame& stimulus) {
    std::vector<double> out;
    for (const auto& s : schedule) out.push_back(chain(stimulus, config, s).evm_percent);
    return out;
}

void write_trace_csv(const ControlTrace& trace, std::uint64_t seed, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "# schema_version=1 seed=" << seed << '\n';
    out << "step,true_power_dbfs,true_cfo_hz,est_power_dbfs,est_cfo_hz,lna_vdd,lo_freq_offset_hz,lo_amplitude,"
           "filter_bw_hz,if_gain_db,evm_measured_pct,evm_predicted_pct\n";
    out << std::setprecision(17);
    for (const auto& s : trace.steps) {
        out << s.step << ',' << s.true_scenario.input_power_dbfs << ',' << s.true_scenario.carrier_offset_hz << ','
            << s.estimate.input_power_dbfs << ',' << s.estimate.cfo_hz << ',' << s.config.lna_vdd << ','
            << s.config.lo_freq_offset_hz << ',' << s.config.lo_amplitude << ',' << s.config.filter_bw_hz << ','
            << s.config.if_gain_db << ',' << s.evm_measured_percent << ',' << s.evm_predicted_percent << '\n';
    }
}

}  // namespace rfat
