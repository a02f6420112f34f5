#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rfat/chain.hpp"
#include "rfat/twin.hpp"

namespace rfat {

struct WaveformSettings {
    int n_symbols = 1024;
    int constellation_order = 16;
    int sps = 8;
    double rolloff = 0.25;
    double symbol_rate_hz = 125e3;
    std::uint64_t stimulus_seed = 7;
};

struct TwinSettings {
    int memory_depth = 3;
    int envelope_order = 3;
    std::vector<int> hidden_sizes{32, 16};
    TrainingSettings training;
    int train_frames = 48;
    double min_drive_dbfs = -30.0;
    double max_drive_dbfs = 0.0;
    double eval_drive_dbfs = -6.0;
};

struct DatasetSettings {
    int n_random = 800;
    int n_init = 8;
    int n_bo = 16;
    int candidate_pool = 2048;
    int threads = 1;
};

struct LoopSettings {
    std::vector<double> powers_dbfs;
    std::vector<double> cfos_hz;
    int budget = 30;
    HardwareConfig initial_config;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "out";
    WaveformSettings waveform;
    ChainConstants chain;
    TwinSettings twin;
    DatasetSettings dataset;
    LoopSettings loop = default_loop();

    /// Throws ParameterError naming the offending key.
    void validate() const;
    static LoopSettings default_loop();
    /// Loop scenarios with noise seeds derived from `seed`.
    std::vector<Scenario> schedule() const;
    IqFrame stimulus() const;
};

/// Parses the TOML subset used by config files: [section] headers,
/// `key = value` lines with numbers, booleans, quoted strings or flat
/// arrays, and `#` comments. Unknown sections and keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace rfat
