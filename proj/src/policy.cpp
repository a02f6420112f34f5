#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "rfat/agents.hpp"
#include "rfat/error.hpp"

namespace rfat {

namespace {

using nlohmann::json;

constexpr int kPolicySchemaVersion = 1;

}  // namespace

std::string_view component_name(ComponentId c) {
    switch (c) {
        case ComponentId::Lna: return "lna";
        case ComponentId::Mixer: return "mixer";
        case ComponentId::Filter: return "filter";
        case ComponentId::IfAmp: return "if_amp";
    }
    return "?";
}

ComponentId component_from_name(std::string_view name) {
    for (ComponentId c : kComponentOrder) {
        if (component_name(c) == name) return c;
    }
    throw ParameterError("unknown component '" + std::string(name) + "'");
}

std::vector<Param> component_params(ComponentId c) {
    switch (c) {
        case ComponentId::Lna: return {Param::LnaVdd};
        case ComponentId::Mixer: return {Param::LoFreqOffset, Param::LoAmplitude};
        case ComponentId::Filter: return {Param::FilterBw};
        case ComponentId::IfAmp: return {Param::IfGain};
    }
    throw ParameterError("unknown component");
}

Candidate extract_candidate(ComponentId c, const HardwareConfig& config) {
    Candidate v;
    for (Param p : component_params(c)) v.push_back(config.get(p));
    return v;
}

void apply_candidate(ComponentId c, const Candidate& value, HardwareConfig& config) {
    const auto params = component_params(c);
    if (value.size() != params.size()) throw ParameterError("candidate width does not match component");
    for (std::size_t i = 0; i < params.size(); ++i) config.set(params[i], value[i]);
}

ComponentPolicy policy_train(std::span<const DatasetRecord> records, ComponentId component) {
    if (records.empty()) throw TrainingError("policy_train: empty dataset");
    std::map<BucketKey, std::vector<const DatasetRecord*>> by_bucket;
    for (const auto& r : records) by_bucket[bucket_of(r.scenario)].push_back(&r);
    if (by_bucket.size() < 2) throw TrainingError("policy_train: dataset covers fewer than 2 scenario buckets");

    ComponentPolicy policy;
    policy.component = component;
    for (auto& [key, recs] : by_bucket) {
        std::stable_sort(recs.begin(), recs.end(),
                         [](const DatasetRecord* a, const DatasetRecord* b) { return a->evm_percent < b->evm_percent; });
        auto& ranking = policy.rankings[key];
        for (const DatasetRecord* r : recs) {
            Candidate v = extract_candidate(component, r->config);
            if (std::find(ranking.begin(), ranking.end(), v) == ranking.end()) ranking.push_back(std::move(v));
            if (ranking.size() >= kPolicyRankingDepth) break;
        }
    }
    return policy;
}

std::vector<Candidate> ComponentPolicy::query(const ScenarioEstimate& est) const {
    if (rankings.empty()) throw StateError("policy has no trained buckets");
    const double p = Scenario::power_range().clamp(std::isfinite(est.input_power_dbfs) ? est.input_power_dbfs : -50.0);
    const double c = Scenario::cfo_range().clamp(std::isfinite(est.cfo_hz) ? est.cfo_hz : 0.0);

    std::vector<std::pair<double, BucketKey>> dist;
    for (const auto& [key, ranking] : rankings) {
        const Scenario center = bucket_center(key);
        const double dp = (p - center.input_power_dbfs) / kBucketPowerDb;
        const double dc = (c - center.carrier_offset_hz) / kBucketCfoHz;
        dist.emplace_back(std::sqrt(dp * dp + dc * dc), key);
    }
    std::sort(dist.begin(), dist.end());
    dist.resize(std::min<std::size_t>(dist.size(), kPolicyNeighbors));
    if (dist.front().first <= kPolicyDistanceFloor) dist.resize(1);

    std::vector<std::pair<Candidate, double>> scored;
    for (const auto& [d, key] : dist) {
        const double w = 1.0 / std::max(d, kPolicyDistanceFloor);
        const auto& ranking = rankings.at(key);
        for (std::size_t r = 0; r < ranking.size(); ++r) {
            const double s = w / (1.0 + static_cast<double>(r));
            auto it = std::find_if(scored.begin(), scored.end(), [&](const auto& e) { return e.first == ranking[r]; });
            if (it == scored.end()) {
                scored.emplace_back(ranking[r], s);
            } else {
                it->second += s;
            }
        }
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<Candidate> out;
    for (auto& [v, s] : scored) out.push_back(std::move(v));
    return out;
}

std::vector<Candidate> agent_propose(const Agent& agent, const ScenarioEstimate& est) {
    if (!agent.policy) throw StateError("agent " + std::string(component_name(agent.component)) + " has no trained policy");
    const auto params = component_params(agent.component);
    std::vector<Candidate> ranked = agent.policy->query(est);
    if (ranked.size() > kCandidateCount) ranked.resize(kCandidateCount);

    std::vector<Candidate> out;
    const auto add = [&](Candidate v) {
        for (std::size_t i = 0; i < params.size(); ++i) v[i] = HardwareConfig::range(params[i]).clamp(v[i]);
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(std::move(v));
    };
    if (agent.component == ComponentId::Mixer) {
        const double amp = ranked.empty() ? HardwareConfig::range(Param::LoAmplitude).mid() : ranked.front()[1];
        add({std::isfinite(est.cfo_hz) ? est.cfo_hz : 0.0, amp});
    }
    for (auto& v : ranked) add(std::move(v));
    for (double u : {0.5, 0.25, 0.75, 0.0, 1.0}) {
        if (out.size() >= kCandidateCount) break;
        Candidate v;
        for (Param p : params) v.push_back(HardwareConfig::range(p).denormalize(u));
        add(std::move(v));
    }
    return out;
}

std::vector<Agent> train_agents(std::span<const DatasetRecord> records) {
    std::vector<Agent> agents;
    for (ComponentId c : kComponentOrder) agents.push_back({c, policy_train(records, c)});
    return agents;
}

std::string policies_to_json(const std::vector<Agent>& agents, std::uint64_t seed) {
    json doc;
    doc["schema_version"] = kPolicySchemaVersion;
    doc["seed"] = seed;
    json list = json::array();
    for (const auto& a : agents) {
        if (!a.policy) throw StateError("cannot save an untrained agent");
        json buckets = json::array();
        for (const auto& [key, ranking] : a.policy->rankings) {
            buckets.push_back({{"power_bin", key.power_bin}, {"cfo_bin", key.cfo_bin}, {"ranking", ranking}});
        }
        list.push_back({{"component", component_name(a.component)}, {"buckets", std::move(buckets)}});
    }
    doc["agents"] = std::move(list);
    return doc.dump(1);
}

std::vector<Agent> policies_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        if (doc.at("schema_version").get<int>() != kPolicySchemaVersion) throw LoadError("unsupported policy schema_version");
        std::vector<Agent> agents;
        for (const auto& ja : doc.at("agents")) {
            Agent a;
            a.component = component_from_name(ja.at("component").get<std::string>());
            ComponentPolicy p;
            p.component = a.component;
            const auto params = component_params(a.component);
            for (const auto& jb : ja.at("buckets")) {
                const BucketKey key{jb.at("power_bin").get<int>(), jb.at("cfo_bin").get<int>()};
                auto ranking = jb.at("ranking").get<std::vector<Candidate>>();
                for (const auto& v : ranking) {
                    if (v.size() != params.size()) throw LoadError("policy candidate has wrong width");
                    for (std::size_t i = 0; i < v.size(); ++i) {
                        if (!HardwareConfig::range(params[i]).contains(v[i])) {
                            throw LoadError("policy candidate " + std::string(param_name(params[i])) + " out of range");
                        }
                    }
                }
                p.rankings[key] = std::move(ranking);
            }
            a.policy = std::move(p);
            agents.push_back(std::move(a));
        }
        return agents;
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed policy file: ") + e.what());
    } catch (const ParameterError& e) {
        throw LoadError(std::string("invalid policy file: ") + e.what());
    }
}

void save_policies(const std::vector<Agent>& agents, std::uint64_t seed, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write policy file " + path.string());
    out << policies_to_json(agents, seed) << '\n';
}

std::vector<Agent> load_policies(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open policy file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return policies_from_json(ss.str());
}

}  // namespace rfat
