#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "rfat/chain.hpp"
#include "rfat/features.hpp"
#include "rfat/twin.hpp"

namespace rfat {

enum class RecordSource { Random, Bo };

std::string_view source_name(RecordSource s);

/// One operating point of the training library.
struct DatasetRecord {
    Scenario scenario;
    HardwareConfig config;
    FeatureVector features;
    double evm_percent = 0.0;
    RecordSource source = RecordSource::Random;
    std::uint64_t seed = 0;

    /// Throws ParameterError naming the offending field.
    void validate() const;
};

/// Runs a receiver (chain or twin) on a stimulus.
using Executor = std::function<ChainOutput(const IqFrame&, const HardwareConfig&, const Scenario&)>;

Executor chain_executor(ChainConstants constants = {});
Executor twin_executor(TwinChain twin);

/// Seed of the i-th record derived from a run seed.
std::uint64_t record_seed(std::uint64_t seed, std::uint64_t index);

/// Uniform draws of every scenario and configuration field within range.
std::vector<std::pair<Scenario, HardwareConfig>> sample_random_configs(int n, std::uint64_t seed);

HardwareConfig random_config(std::uint64_t seed);

DatasetRecord evaluate_config(const Executor& executor, const IqFrame& stimulus, const Scenario& scenario,
                              const HardwareConfig& config, RecordSource source = RecordSource::Random,
                              std::uint64_t seed = 0);

/// Stage-1 records from `sample_random_configs(n, seed)`. Record i carries
/// seed `record_seed(seed, i)`, which is also its scenario noise seed, so the
/// output does not depend on `threads`.
std::vector<DatasetRecord> generate_random_records(const Executor& executor, const IqFrame& stimulus, int n,
                                                   std::uint64_t seed, int threads = 1);

// ---------------------------------------------------------------------------
// Scenario buckets
// ---------------------------------------------------------------------------

inline constexpr double kBucketPowerDb = 5.0;
inline constexpr double kBucketCfoHz = 10e3;

struct BucketKey {
    int power_bin = 0;
    int cfo_bin = 0;
    auto operator<=>(const BucketKey&) const = default;
};

int bucket_power_bins();
int bucket_cfo_bins();
BucketKey bucket_of(double input_power_dbfs, double carrier_offset_hz);
inline BucketKey bucket_of(const Scenario& s) { return bucket_of(s.input_power_dbfs, s.carrier_offset_hz); }
Scenario bucket_center(BucketKey key, std::uint64_t noise_seed = 0);
std::vector<BucketKey> all_buckets();

// ---------------------------------------------------------------------------
// Gaussian-process surrogate
// ---------------------------------------------------------------------------

inline constexpr int kGpDims = 6;

/// Config fields in range order followed by the input power, each mapped to [0, 1].
Eigen::VectorXd gp_input(const HardwareConfig& config, double input_power_dbfs);

struct GpOptions {
    std::vector<double> length_grid{0.03, 0.1, 0.3, 1.0, 3.0};
    int sweeps = 2;
    double noise_ratio = 1e-4;
    /// Overrides noise_ratio * target variance.
    std::optional<double> noise_variance;
    /// Skips the grid search.
    std::optional<std::vector<double>> length_scales;
};

struct GpSurrogate {
    Eigen::MatrixXd inputs;  // n x d
    Eigen::VectorXd targets;
    double prior_mean = 0.0;
    double signal_variance = 1.0;
    std::vector<double> length_scales;
    double noise_variance = 0.0;
    double jitter = 0.0;
    Eigen::MatrixXd chol_lower;
    Eigen::VectorXd alpha;

    int dims() const { return static_cast<int>(inputs.cols()); }
};

struct GpPrediction {
    double mean = 0.0;
    double variance = 0.0;
};

double gp_log_marginal_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                                  const std::vector<double>& length_scales, double signal_variance,
                                  double noise_variance);

/// Fit on raw normalized inputs. Throws FitError if the kernel matrix stays
/// singular after jitter escalation.
GpSurrogate gp_fit_points(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, const GpOptions& options = {});

/// Fit on log10(EVM%) of the records.
GpSurrogate gp_fit(std::span<const DatasetRecord> records, const GpOptions& options = {});

GpPrediction gp_posterior(const GpSurrogate& gp, const Eigen::VectorXd& x);

double expected_improvement(double mean, double variance, double best);

// ---------------------------------------------------------------------------
// Bayesian optimization
// ---------------------------------------------------------------------------

struct BoOptions {
    int candidate_pool = 2048;
    GpOptions gp;
};

struct BoResult {
    std::vector<DatasetRecord> records;
    HardwareConfig best_config;
    double best_evm_percent = 0.0;
    /// Incumbent EVM after the initial design and after each BO step.
    std::vector<double> incumbent_trace;
};

/// Evaluates at `fixed_scenario` throughout. `prior` records in the same
/// scenario bucket join the GP training set but never become the incumbent.
BoResult bo_run(const Executor& executor, const IqFrame& stimulus, const Scenario& fixed_scenario, int n_init,
                int n_bo, std::uint64_t seed, std::span<const DatasetRecord> prior = {}, const BoOptions& options = {});

/// Generic form on the normalized config cube, used by bo_run. `objective`
/// maps a configuration to the value minimized (log10 EVM for bo_run).
struct BoTrace {
    std::vector<HardwareConfig> configs;
    std::vector<double> values;
    std::size_t best_index = 0;
};

BoTrace bo_minimize(const std::function<double(const HardwareConfig&)>& objective, const Eigen::MatrixXd& prior_inputs,
                    const Eigen::VectorXd& prior_values, double input_power_dbfs, int n_init, int n_bo,
                    std::uint64_t seed, const BoOptions& options = {});

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline constexpr int kDatasetSchemaVersion = 1;

std::string record_to_json_line(const DatasetRecord& record);
/// `line_number` is reported in LoadError messages.
DatasetRecord record_from_json_line(const std::string& line, std::size_t line_number = 0);

void save_dataset(std::span<const DatasetRecord> records, const std::filesystem::path& path);
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);

}  // namespace rfat
