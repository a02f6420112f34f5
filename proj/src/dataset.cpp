#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <thread>

#include "rfat/dataset.hpp"
#include "rfat/error.hpp"

namespace rfat {

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

HardwareConfig draw_config(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    HardwareConfig c;
    for (Param p : kAllParams) c.set(p, HardwareConfig::range(p).denormalize(unit(rng)));
    return c;
}

}  // namespace

std::string_view source_name(RecordSource s) { return s == RecordSource::Bo ? "bo" : "random"; }

void DatasetRecord::validate() const {
    scenario.validate();
    config.validate();
    if (!(evm_percent >= 0.0) || !std::isfinite(evm_percent)) {
        throw ParameterError("evm_percent = " + std::to_string(evm_percent) + " must be finite and >= 0");
    }
    for (double v : features.numeric()) {
        if (!std::isfinite(v)) throw ParameterError("features: non-finite entry");
    }
}

Executor chain_executor(ChainConstants constants) {
    return [constants = std::move(constants)](const IqFrame& s, const HardwareConfig& c, const Scenario& sc) {
        return run_chain(s, c, sc, constants);
    };
}

Executor twin_executor(TwinChain twin) {
    return [twin = std::move(twin)](const IqFrame& s, const HardwareConfig& c, const Scenario& sc) {
        return twin_run_chain(twin, s, c, sc);
    };
}

std::uint64_t record_seed(std::uint64_t seed, std::uint64_t index) { return mix(mix(seed) + index); }

HardwareConfig random_config(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return draw_config(rng);
}

std::vector<std::pair<Scenario, HardwareConfig>> sample_random_configs(int n, std::uint64_t seed) {
    if (n < 1) throw ParameterError("sample_random_configs: n must be >= 1");
    std::vector<std::pair<Scenario, HardwareConfig>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::uint64_t s = record_seed(seed, static_cast<std::uint64_t>(i));
        std::mt19937_64 rng(s);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        Scenario sc;
        sc.input_power_dbfs = Scenario::power_range().denormalize(unit(rng));
        sc.carrier_offset_hz = Scenario::cfo_range().denormalize(unit(rng));
        sc.noise_seed = s;
        out.emplace_back(sc, draw_config(rng));
    }
    return out;
}

DatasetRecord evaluate_config(const Executor& executor, const IqFrame& stimulus, const Scenario& scenario,
                              const HardwareConfig& config, RecordSource source, std::uint64_t seed) {
    const ChainOutput out = executor(stimulus, config, scenario);
    DatasetRecord r;
    r.scenario = scenario;
    r.config = config;
    r.features = observe(out, config);
    r.evm_percent = out.evm_percent;
    r.source = source;
    r.seed = seed;
    return r;
}

std::vector<DatasetRecord> generate_random_records(const Executor& executor, const IqFrame& stimulus, int n,
                                                   std::uint64_t seed, int threads) {
    const auto draws = sample_random_configs(n, seed);
    std::vector<DatasetRecord> records(draws.size());
    const auto work = [&](std::size_t begin, std::size_t step) {
        for (std::size_t i = begin; i < draws.size(); i += step) {
            records[i] = evaluate_config(executor, stimulus, draws[i].first, draws[i].second, RecordSource::Random,
                                         draws[i].first.noise_seed);
        }
    };
    const auto t = static_cast<std::size_t>(std::max(1, threads));
    if (t == 1) {
        work(0, 1);
        return records;
    }
    std::vector<std::exception_ptr> errors(t);
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < t; ++k) {
        pool.emplace_back([&, k] {
            try {
                work(k, t);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return records;
}

int bucket_power_bins() {
    return static_cast<int>(std::lround(Scenario::power_range().width() / kBucketPowerDb));
}

int bucket_cfo_bins() { return static_cast<int>(std::lround(Scenario::cfo_range().width() / kBucketCfoHz)); }

BucketKey bucket_of(double input_power_dbfs, double carrier_offset_hz) {
    const auto bin = [](double v, double lo, double width, int n) {
        return std::clamp(static_cast<int>(std::floor((v - lo) / width)), 0, n - 1);
    };
    return {bin(input_power_dbfs, Scenario::power_range().lo, kBucketPowerDb, bucket_power_bins()),
            bin(carrier_offset_hz, Scenario::cfo_range().lo, kBucketCfoHz, bucket_cfo_bins())};
}

Scenario bucket_center(BucketKey key, std::uint64_t noise_seed) {
    Scenario s;
    s.input_power_dbfs = Scenario::power_range().lo + (key.power_bin + 0.5) * kBucketPowerDb;
    s.carrier_offset_hz = Scenario::cfo_range().lo + (key.cfo_bin + 0.5) * kBucketCfoHz;
    s.noise_seed = noise_seed;
    return s;
}

std::vector<BucketKey> all_buckets() {
    std::vector<BucketKey> out;
    for (int p = 0; p < bucket_power_bins(); ++p) {
        for (int c = 0; c < bucket_cfo_bins(); ++c) out.push_back({p, c});
    }
    return out;
}

}  // namespace rfat
