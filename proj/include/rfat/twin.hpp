#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rfat/butterworth.hpp"
#include "rfat/chain.hpp"
#include "rfat/signal.hpp"

namespace rfat {

// ---------------------------------------------------------------------------
// ARVTDNN amplifier surrogate
// ---------------------------------------------------------------------------

struct DenseLayer {
    Eigen::MatrixXd weights;  // rows = outputs, cols = inputs
    Eigen::VectorXd bias;
};

struct TrainingMetadata {
    std::uint64_t seed = 0;
    int epochs = 0;
    double final_nmse_db = 0.0;
};

/// Augmented real-valued time-delay network. Input per sample is the I/Q of
/// the current and M past samples followed by envelope powers |x|^1..|x|^K of
/// each tap; hidden layers use tanh, the 2-wide output (I, Q) is linear.
struct ArvtdnnModel {
    int memory_depth = 3;
    int envelope_order = 3;
    std::vector<int> hidden_sizes{32, 16};
    std::vector<DenseLayer> layers;
    TrainingMetadata training;

    int input_width() const { return (memory_depth + 1) * (2 + envelope_order); }
    /// Throws ParameterError on width mismatch or non-finite weights.
    void validate() const;
    std::size_t parameter_count() const;

    /// Glorot-uniform weights, zero biases.
    static ArvtdnnModel initialized(int memory_depth, int envelope_order, std::vector<int> hidden_sizes,
                                    std::uint64_t seed);
};

/// Feature vector for one time step. `window[m]` is x(n - m), m = 0..M.
std::vector<double> arvtdnn_features(std::span<const cplx> window, int memory_depth, int envelope_order);

/// Feature matrix (input_width x N) for a whole sequence, zero pre-history.
Eigen::MatrixXd arvtdnn_feature_matrix(std::span<const cplx> x, int memory_depth, int envelope_order);

CVec arvtdnn_forward(const ArvtdnnModel& model, std::span<const cplx> x);

/// Mean squared complex error over the columns of `features` and its
/// gradient with respect to every layer's weights and biases.
double arvtdnn_loss_and_gradient(const ArvtdnnModel& model, const Eigen::MatrixXd& features,
                                 const Eigen::MatrixXd& targets, std::vector<DenseLayer>& gradient);

struct FramePair {
    CVec input;
    CVec target;
};

struct TrainingSettings {
    int epochs = 300;
    int batch_size = 256;
    double learning_rate = 3e-3;
    /// Step size at epoch e is learning_rate / (1 + lr_decay * e).
    double lr_decay = 0.01;
    double validation_fraction = 0.2;
    int patience = 20;
};

struct TrainingReport {
    std::vector<double> epoch_loss;           // training-set loss after each epoch
    std::vector<double> validation_nmse_db;   // per epoch
    int best_epoch = 0;
    double final_nmse_db = 0.0;               // validation NMSE of the returned weights
};

struct TrainResult {
    ArvtdnnModel model;
    TrainingReport report;
};

TrainResult arvtdnn_train(std::span<const FramePair> pairs, int memory_depth, int envelope_order,
                          std::vector<int> hidden_sizes, const TrainingSettings& settings, std::uint64_t seed);

/// 10 log10(sum |estimate - reference|^2 / sum |reference|^2), clamped at -120 dB.
double nmse_db(std::span<const cplx> reference, std::span<const cplx> estimate);

void save_model(const ArvtdnnModel& model, const std::filesystem::path& path);
ArvtdnnModel load_model(const std::filesystem::path& path);
std::string model_to_json(const ArvtdnnModel& model);
ArvtdnnModel model_from_json(const std::string& text);

/// IF-amplifier training frames: band-limited QAM drive, randomly frequency
/// shifted with a small DC offset and noise floor, drive power drawn from
/// [min_drive_dbfs, max_drive_dbfs]. Targets come from the memory polynomial.
std::vector<FramePair> make_if_amp_training_set(int n_frames, double min_drive_dbfs, double max_drive_dbfs,
                                                std::span<const MemoryPolyTerm> truth, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Symbolic filter model
// ---------------------------------------------------------------------------

struct FilterTwin {
    TransferFunction tf;
    double bw_hz = 0.0;
    double sample_rate_hz = 0.0;

    cplx response(double freq_hz) const { return tf.response(freq_hz, sample_rate_hz); }
    double response_db(double freq_hz) const { return tf.response_db(freq_hz, sample_rate_hz); }
    bool stable() const;
};

FilterTwin build_filter_twin(double bw_hz, double sample_rate_hz, int order = 4);

// ---------------------------------------------------------------------------
// Composed digital twin
// ---------------------------------------------------------------------------

/// IF amplifier forward model: a trained network, or a symbolic memory
/// polynomial (used to substitute the ground truth in tests).
using IfAmpTwin = std::variant<ArvtdnnModel, std::vector<MemoryPolyTerm>>;

/// LNA, mixer and ADC reuse the chain's symbolic formulas with their noise
/// represented at expected power; the filter is rebuilt from the shared
/// design routine for each configuration.
struct TwinChain {
    ChainConstants constants;
    IfAmpTwin if_amp;
};

ChainOutput twin_run_chain(const TwinChain& twin, const IqFrame& stimulus, const HardwareConfig& config,
                           const Scenario& assumed_scenario);

struct PsdRow {
    double freq_hz;
    double input_db;
    double truth_db;
    double twin_db;
};

struct AmAmRow {
    double in_env;
    double truth_out_env;
    double twin_out_env;
};

struct ValidationData {
    std::vector<PsdRow> psd;
    std::vector<AmAmRow> amam;
};

/// PSD (Welch-averaged STFT, 256-point) and per-sample AM/AM of the drive
/// through the ground truth and through the network.
ValidationData export_validation_data(const ArvtdnnModel& model, std::span<const MemoryPolyTerm> truth,
                                      const IqFrame& drive);

/// Both start with a `# schema_version=1 seed=N` comment line.
void write_psd_csv(const ValidationData& data, std::uint64_t seed, const std::filesystem::path& path);
void write_amam_csv(const ValidationData& data, std::uint64_t seed, const std::filesystem::path& path);

/// Input envelope where the memoryless part of the polynomial has compressed
/// by 1 dB (bisection).
double compression_1db_drive(std::span<const MemoryPolyTerm> terms);

/// Largest binned mean envelope-gain gap between twin and truth, in dB, over
/// `n_bins` equal-width input-envelope bins covering (min_env, max_env].
double amam_gain_gap_db(std::span<const AmAmRow> rows, double min_env, double max_env, int n_bins);

}  // namespace rfat
