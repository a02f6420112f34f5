#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "rfat/agents.hpp"
#include "rfat/error.hpp"

using namespace rfat;

namespace {

const IqFrame& stimulus() {
    static const IqFrame s = generate_qam_frame(256, 16, 8, 0.25, 7);
    return s;
}

const std::vector<DatasetRecord>& chain_records() {
    static const std::vector<DatasetRecord> r = generate_random_records(chain_executor(), stimulus(), 80, 31);
    return r;
}

const std::vector<Agent>& chain_agents() {
    static const std::vector<Agent> a = train_agents(chain_records());
    return a;
}

DatasetRecord record_at(double power, double cfo, HardwareConfig c, double evm) {
    DatasetRecord r;
    r.scenario = {power, cfo, 0};
    r.config = c;
    r.features = FeatureVector::from_numeric(std::vector<double>(11, -50.0), c);
    r.evm_percent = evm;
    return r;
}

bool in_range(ComponentId c, const Candidate& v) {
    const auto params = component_params(c);
    if (v.size() != params.size()) return false;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!HardwareConfig::range(params[i]).contains(v[i])) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("build_features shape and floor propagation") {
    const Spectrogram zero = stft(CVec(1024, cplx{}), kFeatureWindow, kFeatureHop, 1e6);
    const HardwareConfig c;
    const auto f = build_features(ProbeReadings{}, zero, 12.5, c);
    const auto v = f.numeric();
    REQUIRE(v.size() == 2 + 8 + 1);
    for (std::size_t i = 0; i < 10; ++i) CHECK(v[i] == kPowerFloorDb);
    CHECK(v[10] == 12.5);
    CHECK(f.current_config.if_gain_db == c.if_gain_db);

    const IqFrame frame = generate_qam_frame(256, 16, 8, 0.25, 1);
    const Spectrogram spec = stft(frame.samples, kFeatureWindow, kFeatureHop, 1e6);
    const auto a = build_features({-20.0, -10.0}, spec, 3.0, c);
    const auto b = build_features({-20.0, -10.0}, spec, 3.0, c);
    CHECK(a.numeric() == b.numeric());
    CHECK(a.spectrum_db == b.spectrum_db);
    CHECK(a.numeric()[0] == -20.0);
    CHECK(a.numeric()[1] == -10.0);

    CHECK_THROWS_AS(build_features({std::nan(""), -10.0}, spec, 3.0, c), ParameterError);
    CHECK_THROWS_AS(build_features({-20.0, -10.0}, spec, INFINITY, c), ParameterError);
    CHECK_THROWS_AS(FeatureVector::from_numeric({1.0, 2.0}, c), ParameterError);
}

TEST_CASE("scenario estimate recovers input power with noise off") {
    ChainConstants k;
    k.noise_enabled = false;
    for (double power : {-50.0, -45.0, -40.0, -35.0}) {
        for (double vdd : {0.6, 0.9, 1.2}) {
            HardwareConfig c;
            c.lna_vdd = vdd;
            const auto out = run_chain(stimulus(), c, Scenario{power, 0.0, 1}, k);
            const auto est = estimate_scenario(observe(out, c), k);
            CHECK(std::abs(est.input_power_dbfs - power) <= 0.5);
        }
    }
}

TEST_CASE("scenario estimate recovers the carrier offset") {
    const IqFrame stim = generate_qam_frame(1024, 16, 8, 0.25, 7);
    for (double cfo : {0.0, 10e3, -15e3, 5e3}) {
        for (double lo : {0.0, 4e3}) {
            HardwareConfig c;
            c.lo_freq_offset_hz = lo;
            c.filter_bw_hz = 300e3;
            const auto out = run_chain(stim, c, Scenario{-30.0, cfo, 3});
            const auto est = estimate_scenario(observe(out, c));
            CHECK(std::abs(est.cfo_hz - cfo) <= 2e3);
        }
    }
    const auto s = to_scenario({-300.0, 1e9}, 5);
    CHECK(s.input_power_dbfs == Scenario::power_range().lo);
    CHECK(s.carrier_offset_hz == Scenario::cfo_range().hi);
    CHECK(s.noise_seed == 5);
}

TEST_CASE("components and candidates") {
    CHECK(component_params(ComponentId::Mixer).size() == 2);
    for (ComponentId c : kComponentOrder) CHECK(component_from_name(component_name(c)) == c);
    CHECK_THROWS_AS(component_from_name("adc"), ParameterError);
    HardwareConfig c;
    apply_candidate(ComponentId::Mixer, {1e3, 0.4}, c);
    CHECK(c.lo_freq_offset_hz == 1e3);
    CHECK(c.lo_amplitude == 0.4);
    CHECK(extract_candidate(ComponentId::Mixer, c) == Candidate{1e3, 0.4});
    CHECK_THROWS_AS(apply_candidate(ComponentId::Lna, {1.0, 2.0}, c), ParameterError);
}

TEST_CASE("policy ranks the unique argmin first") {
    HardwareConfig best, other;
    best.if_gain_db = 4.0;
    other.if_gain_db = 20.0;
    best.lna_vdd = 1.1;
    other.lna_vdd = 0.6;
    const std::vector<DatasetRecord> recs{
        record_at(-42.0, 3e3, other, 9.0), record_at(-42.0, 3e3, best, 2.0), record_at(-42.0, 3e3, other, 5.0),
        record_at(-12.0, -13e3, other, 1.0)};
    const auto p = policy_train(recs, ComponentId::IfAmp);
    const auto key = bucket_of(-42.0, 3e3);
    REQUIRE(p.rankings.at(key).size() == 2);
    CHECK(p.rankings.at(key)[0] == Candidate{4.0});
    CHECK(policy_train(recs, ComponentId::Lna).rankings.at(key)[0] == Candidate{1.1});

    CHECK_THROWS_AS(policy_train(std::vector<DatasetRecord>{}, ComponentId::Lna), TrainingError);
    const std::vector<DatasetRecord> one_bucket{recs[0], recs[1]};
    CHECK_THROWS_AS(policy_train(one_bucket, ComponentId::Lna), TrainingError);
}

TEST_CASE("query at a bucket center returns that bucket's ranking") {
    for (const Agent& a : chain_agents()) {
        for (const auto& [key, ranking] : a.policy->rankings) {
            const Scenario c = bucket_center(key);
            CHECK(a.policy->query({c.input_power_dbfs, c.carrier_offset_hz}) == ranking);
        }
    }
}

TEST_CASE("proposals are ranked, in range and deterministic") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> power(-60.0, 5.0);
    std::uniform_real_distribution<double> cfo(-30e3, 30e3);
    for (int i = 0; i < 10000; ++i) {
        const ScenarioEstimate est{power(rng), cfo(rng)};
        for (const Agent& a : chain_agents()) {
            const auto list = agent_propose(a, est);
            CHECK(list.size() >= static_cast<std::size_t>(kCandidateCount));
            for (const auto& v : list) CHECK(in_range(a.component, v));
            if (i % 1000 == 0) CHECK(list == agent_propose(a, est));
        }
    }
    const Agent& mixer = chain_agents()[1];
    REQUIRE(mixer.component == ComponentId::Mixer);
    CHECK(agent_propose(mixer, {-30.0, 7e3})[0][0] == 7e3);
    CHECK_THROWS_AS(agent_propose(Agent{ComponentId::Lna, std::nullopt}, {-30.0, 0.0}), StateError);
}

TEST_CASE("policy learns to lower if gain at high input power") {
    // Synthetic truth: the best gain falls linearly with input power.
    std::vector<DatasetRecord> recs;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double power : {-47.5, -42.5, -12.5, -7.5}) {
        const double ideal = 26.0 - (power + 50.0) * 0.7;
        for (int i = 0; i < 30; ++i) {
            HardwareConfig c;
            c.if_gain_db = HardwareConfig::range(Param::IfGain).denormalize(u(rng));
            recs.push_back(record_at(power, 0.0, c, 1.0 + std::abs(c.if_gain_db - ideal)));
        }
    }
    const Agent agent{ComponentId::IfAmp, policy_train(recs, ComponentId::IfAmp)};
    const double high = agent_propose(agent, {-10.0, 0.0})[0][0];
    const double low = agent_propose(agent, {-45.0, 0.0})[0][0];
    CHECK(high < low);
    CHECK(agent_propose(agent, {-10.0, 0.0}) == agent_propose(agent, {-10.0, 0.0}));
}

TEST_CASE("policy file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "rfat_policy.json";
    save_policies(chain_agents(), 31, path);
    const auto back = load_policies(path);
    REQUIRE(back.size() == chain_agents().size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].component == chain_agents()[i].component);
        CHECK(back[i].policy->rankings == chain_agents()[i].policy->rankings);
    }
    { std::ofstream(path) << "{\"schema_version\":1,\"agents\":[{\"component\":\"lna\",\"buckets\":"
                             "[{\"power_bin\":0,\"cfo_bin\":0,\"ranking\":[[7.0]]}]}]}"; }
    CHECK_THROWS_AS(load_policies(path), LoadError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_policies(path), LoadError);
}

TEST_CASE("coordinate picks the single-agent argmin when others are fixed") {
    const auto exec = chain_executor();
    const Scenario s{-35.0, 2e3, 4};
    HardwareConfig inc;
    inc.lo_freq_offset_hz = 2e3;
    std::vector<std::vector<Candidate>> proposals;
    for (ComponentId c : kComponentOrder) proposals.push_back({extract_candidate(c, inc)});
    proposals[3] = {{-6.0}, {2.0}, {10.0}, {18.0}, {26.0}};
    const auto r = coordinate(proposals, exec, stimulus(), s, inc, 30);

    double best = exec(stimulus(), inc, s).evm_percent;
    HardwareConfig expected = inc;
    for (const auto& v : proposals[3]) {
        HardwareConfig c = inc;
        c.if_gain_db = v[0];
        const double e = exec(stimulus(), c, s).evm_percent;
        if (e < best) {
            best = e;
            expected = c;
        }
    }
    CHECK(r.predicted_evm_percent == best);
    CHECK(r.config.if_gain_db == expected.if_gain_db);
    CHECK(r.evaluations == 5);  // the incumbent already has if_gain_db = 10
    CHECK_FALSE(r.budget_exhausted);
    CHECK_THROWS_AS(coordinate(proposals, exec, stimulus(), s, inc, 0), ParameterError);
}

TEST_CASE("coordinate respects the budget and never worsens the incumbent") {
    const auto exec = chain_executor();
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 6; ++trial) {
        const auto [s, inc] = sample_random_configs(1, rng())[0];
        const ScenarioEstimate est{s.input_power_dbfs, s.carrier_offset_hz};
        std::vector<std::vector<Candidate>> proposals;
        for (const Agent& a : chain_agents()) proposals.push_back(agent_propose(a, est));
        for (int budget : {1, 4, 9, 30}) {
            const auto r = coordinate(proposals, exec, stimulus(), s, inc, budget);
            CHECK(r.evaluations <= budget);
            CHECK(r.predicted_evm_percent <= r.incumbent_evm_percent);
            CHECK(r.incumbent_evm_percent == exec(stimulus(), inc, s).evm_percent);
            // With the chain as the twin, prediction and truth coincide.
            CHECK(exec(stimulus(), r.config, s).evm_percent <= exec(stimulus(), inc, s).evm_percent);
            CHECK_NOTHROW(r.config.validate());
        }
        CHECK(coordinate(proposals, exec, stimulus(), s, inc, 1).budget_exhausted);
    }
}

TEST_CASE("coordinate is close to brute force over the top-3 product") {
    const auto exec = chain_executor();
    const std::vector<Scenario> scenarios{
        {-45.0, -15e3, 1}, {-35.0, 5e3, 2}, {-25.0, 12e3, 3}, {-15.0, -4e3, 4}, {-8.0, 18e3, 5}};
    for (const auto& s : scenarios) {
        const ScenarioEstimate est{s.input_power_dbfs, s.carrier_offset_hz};
        std::vector<std::vector<Candidate>> top;
        for (const Agent& a : chain_agents()) {
            auto list = agent_propose(a, est);
            list.resize(3);
            top.push_back(list);
        }
        double brute = 1e300;
        for (int i = 0; i < 81; ++i) {
            HardwareConfig c;
            int code = i;
            for (std::size_t a = 0; a < 4; ++a) {
                apply_candidate(kComponentOrder[a], top[a][static_cast<std::size_t>(code % 3)], c);
                code /= 3;
            }
            brute = std::min(brute, exec(stimulus(), c, s).evm_percent);
        }
        const auto r = coordinate(top, exec, stimulus(), s, HardwareConfig{}, 30);
        CHECK(r.predicted_evm_percent <= 1.10 * brute);
    }
}

TEST_CASE("control loop trace, safety under a dead step and CSV export") {
    const auto chain = chain_executor();
    std::vector<Scenario> schedule;
    for (int i = 0; i < 4; ++i) schedule.push_back({-40.0 + 10.0 * i, 5e3 * i, static_cast<std::uint64_t>(100 + i)});

    const auto trace = control_loop(chain, chain, chain_agents(), schedule, stimulus());
    REQUIRE(trace.steps.size() == schedule.size());
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        CHECK(trace.steps[i].step == static_cast<int>(i));
        CHECK(trace.steps[i].evm_measured_percent >= 0.0);
        CHECK(trace.steps[i].evm_predicted_percent >= 0.0);
        CHECK_NOTHROW(trace.steps[i].config.validate());
    }
    const auto again = control_loop(chain, chain, chain_agents(), schedule, stimulus());
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        CHECK(again.steps[i].evm_measured_percent == trace.steps[i].evm_measured_percent);
    }

    // The chain goes silent for step 1.
    const Executor dead = [&](const IqFrame& f, const HardwareConfig& c, const Scenario& s) {
        ChainOutput out = chain(f, c, s);
        if (s.noise_seed == 101) {
            std::fill(out.adc_frame.samples.begin(), out.adc_frame.samples.end(), cplx{});
            out.probes = ProbeReadings{};
        }
        return out;
    };
    const auto survived = control_loop(dead, chain, chain_agents(), schedule, stimulus());
    REQUIRE(survived.steps.size() == schedule.size());
    for (const auto& s : survived.steps) CHECK_NOTHROW(s.config.validate());

    const auto path = std::filesystem::temp_directory_path() / "rfat_trace.csv";
    write_trace_csv(trace, 9, path);
    std::ifstream in(path);
    std::string comment, header, row;
    std::getline(in, comment);
    std::getline(in, header);
    CHECK(comment == "# schema_version=1 seed=9");
    CHECK(header ==
          "step,true_power_dbfs,true_cfo_hz,est_power_dbfs,est_cfo_hz,lna_vdd,lo_freq_offset_hz,lo_amplitude,"
          "filter_bw_hz,if_gain_db,evm_measured_pct,evm_predicted_pct");
    int rows = 0;
    while (std::getline(in, row)) ++rows;
    CHECK(rows == 4);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(control_loop(chain, chain, {chain_agents()[0]}, schedule, stimulus()), StateError);
    const auto fixed = fixed_config_evm(chain, HardwareConfig{}, schedule, stimulus());
    CHECK(fixed.size() == schedule.size());
}
