#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rfat/chain.hpp"
#include "rfat/dataset.hpp"
#include "rfat/features.hpp"

namespace rfat {

enum class ComponentId { Lna, Mixer, Filter, IfAmp };

/// Signal-flow order, also the coordination order.
inline constexpr std::array<ComponentId, 4> kComponentOrder = {ComponentId::Lna, ComponentId::Mixer,
                                                               ComponentId::Filter, ComponentId::IfAmp};

std::string_view component_name(ComponentId c);
ComponentId component_from_name(std::string_view name);

/// The configuration fields a component owns. The mixer owns two.
std::vector<Param> component_params(ComponentId c);

/// One value for each of a component's parameters, in component_params order.
using Candidate = std::vector<double>;

Candidate extract_candidate(ComponentId c, const HardwareConfig& config);
void apply_candidate(ComponentId c, const Candidate& value, HardwareConfig& config);

struct ScenarioEstimate {
    double input_power_dbfs = 0.0;
    double cfo_hz = 0.0;
};

/// Input power from the LNA probe minus the LNA gain at the current supply;
/// carrier offset from the peak of a sliding occupied-band power window over
/// the averaged spectrum (parabolic interpolation) plus the current LO offset.
ScenarioEstimate estimate_scenario(const FeatureVector& f, const ChainConstants& constants = {},
                                   double occupied_bandwidth_hz = 156.25e3);

/// Estimated scenario clamped into the legal ranges, with a fixed noise seed
/// for twin evaluation.
Scenario to_scenario(const ScenarioEstimate& est, std::uint64_t eval_seed);

inline constexpr int kCandidateCount = 3;
inline constexpr int kPolicyNeighbors = 3;
inline constexpr double kPolicyDistanceFloor = 1e-9;
inline constexpr std::size_t kPolicyRankingDepth = 10;

/// Per-bucket rankings of one component's values by the lowest EVM seen with them.
struct ComponentPolicy {
    ComponentId component = ComponentId::Lna;
    std::map<BucketKey, std::vector<Candidate>> rankings;

    /// Weighted merge of the nearest buckets' rankings; a candidate scores
    /// sum_b w_b / (1 + rank_b). Best first.
    std::vector<Candidate> query(const ScenarioEstimate& est) const;
};

ComponentPolicy policy_train(std::span<const DatasetRecord> records, ComponentId component);

struct Agent {
    ComponentId component = ComponentId::Lna;
    std::optional<ComponentPolicy> policy;
};

/// At least kCandidateCount values, all in range. The mixer's list leads
/// with the LO offset set to the carrier estimate.
std::vector<Candidate> agent_propose(const Agent& agent, const ScenarioEstimate& est);

std::vector<Agent> train_agents(std::span<const DatasetRecord> records);

std::string policies_to_json(const std::vector<Agent>& agents, std::uint64_t seed);
std::vector<Agent> policies_from_json(const std::string& text);
void save_policies(const std::vector<Agent>& agents, std::uint64_t seed, const std::filesystem::path& path);
std::vector<Agent> load_policies(const std::filesystem::path& path);

struct CoordinateResult {
    HardwareConfig config;
    double predicted_evm_percent = 0.0;
    double incumbent_evm_percent = 0.0;
    int evaluations = 0;
    bool budget_exhausted = false;
};

/// Greedy two-pass coordinate refinement from the incumbent. `proposals` is
/// indexed like kComponentOrder. Every executor run counts against `budget`.
CoordinateResult coordinate(const std::vector<std::vector<Candidate>>& proposals, const Executor& twin,
                            const IqFrame& stimulus, const Scenario& scenario_est, const HardwareConfig& incumbent,
                            int budget);

struct ControlStep {
    int step = 0;
    Scenario true_scenario;
    ScenarioEstimate estimate;
    HardwareConfig config;
    double evm_measured_percent = 0.0;
    double evm_predicted_percent = 0.0;
};

struct ControlTrace {
    std::vector<ControlStep> steps;
};

struct LoopOptions {
    int budget = 30;
    HardwareConfig initial_config;
    std::uint64_t eval_seed = 1;
    ChainConstants constants;
};

ControlTrace control_loop(const Executor& chain, const Executor& twin, const std::vector<Agent>& agents,
                          std::span<const Scenario> schedule, const IqFrame& stimulus, const LoopOptions& options = {});

/// Fixed-config baseline over the same schedule, for comparison.
std::vector<double> fixed_config_evm(const Executor& chain, const HardwareConfig& config,
                                     std::span<const Scenario> schedule, const IqFrame& stimulus);

void write_trace_csv(const ControlTrace& trace, std::uint64_t seed, const std::filesystem::path& path);

}  // namespace rfat
