#include "rfat/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "rfat/agents.hpp"
#include "rfat/config.hpp"
#include "rfat/dataset.hpp"
#include "rfat/error.hpp"
#include "rfat/log.hpp"
#include "rfat/twin.hpp"

namespace rfat {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kArtifactSchemaVersion = 1;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> budget;
    std::string model;
    std::string policy;
    std::string dataset;
};

struct Context {
    RunConfig cfg;
    fs::path out_dir;
    std::ostream& out;
};

Context make_context(const Flags& flags, std::ostream& out) {
    RunConfig cfg = flags.config.empty() ? RunConfig{} : load_config(flags.config);
    if (flags.seed) cfg.seed = *flags.seed;
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    return {cfg, cfg.out_dir, out};
}

fs::path artifact(const std::string& flag, const fs::path& out_dir, const char* default_name, const char* what) {
    fs::path p = flag.empty() ? out_dir / default_name : fs::path(flag);
    if (!fs::exists(p)) throw LoadError("missing " + std::string(what) + ": " + p.string());
    return p;
}

std::string csv_header(std::uint64_t seed) {
    return "# schema_version=" + std::to_string(kArtifactSchemaVersion) + " seed=" + std::to_string(seed) + "\n";
}

json config_json(const HardwareConfig& c) {
    json j;
    for (Param p : kAllParams) j[std::string(param_name(p))] = c.get(p);
    return j;
}

json scenario_json(const Scenario& s) {
    return {{"input_power_dbfs", s.input_power_dbfs},
            {"carrier_offset_hz", s.carrier_offset_hz},
            {"noise_seed", s.noise_seed}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot write " + path.string());
    f << text;
}

void warn_unused_budget(const Flags& flags, const char* command) {
    if (flags.budget) spdlog::warn("--budget has no effect on {}", command);
}

Executor executor_for(const Context& ctx, const std::string& model_flag) {
    if (model_flag.empty()) return chain_executor(ctx.cfg.chain);
    const fs::path p = artifact(model_flag, ctx.out_dir, "model.json", "model file");
    return twin_executor(TwinChain{ctx.cfg.chain, load_model(p)});
}

void cmd_simulate(const Flags& flags, std::ostream& out) {
    warn_unused_budget(flags, "simulate");
    const Context ctx = make_context(flags, out);
    const Scenario scenario = ctx.cfg.schedule().front();
    const HardwareConfig& config = ctx.cfg.loop.initial_config;
    const ChainOutput result = run_chain(ctx.cfg.stimulus(), config, scenario, ctx.cfg.chain);
    const FeatureVector f = observe(result, config);
    const ScenarioEstimate est = estimate_scenario(f, ctx.cfg.chain);

    json doc;
    doc["schema_version"] = kArtifactSchemaVersion;
    doc["seed"] = ctx.cfg.seed;
    doc["scenario"] = scenario_json(scenario);
    doc["config"] = config_json(config);
    doc["probes"] = {{"p_lna_dbfs", result.probes.p_lna_dbfs}, {"p_if_dbfs", result.probes.p_if_dbfs}};
    doc["features"] = f.numeric();
    doc["evm_percent"] = result.evm_percent;
    doc["estimate"] = {{"input_power_dbfs", est.input_power_dbfs}, {"cfo_hz", est.cfo_hz}};
    write_text(ctx.out_dir / "simulate.json", doc.dump(1) + "\n");

    std::ostringstream csv;
    csv << csv_header(ctx.cfg.seed) << "freq_hz,power_db\n" << std::setprecision(17);
    for (std::size_t i = 0; i < f.spectrum_db.size(); ++i) {
        csv << (static_cast<double>(i) - static_cast<double>(f.spectrum_db.size() / 2) + 1.0) * f.spectrum_bin_hz << ','
            << f.spectrum_db[i] << '\n';
    }
    write_text(ctx.out_dir / "spectrum.csv", csv.str());
    out << "evm_percent " << result.evm_percent << "\n";
}

std::vector<DatasetRecord> bucket_search(const Context& ctx, const Executor& executor, const IqFrame& stimulus,
                                         int n_bo, std::span<const DatasetRecord> prior) {
    std::vector<DatasetRecord> records;
    BoOptions options;
    options.candidate_pool = ctx.cfg.dataset.candidate_pool;
    const auto buckets = all_buckets();
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        const Scenario center = bucket_center(buckets[b], record_seed(ctx.cfg.seed ^ 0xb5c3ULL, b));
        BoResult r = bo_run(executor, stimulus, center, ctx.cfg.dataset.n_init, n_bo,
                            record_seed(ctx.cfg.seed ^ 0xb0ULL, b), prior, options);
        spdlog::info("bucket {}/{} ({:.1f} dBFS, {:.0f} Hz): best EVM {:.3f}%", b + 1, buckets.size(),
                     center.input_power_dbfs, center.carrier_offset_hz, r.best_evm_percent);
        records.insert(records.end(), std::make_move_iterator(r.records.begin()),
                       std::make_move_iterator(r.records.end()));
    }
    return records;
}

void cmd_gen_data(const Flags& flags, std::ostream& out) {
    const Context ctx = make_context(flags, out);
    const Executor executor = executor_for(ctx, flags.model);
    const IqFrame stimulus = ctx.cfg.stimulus();
    const int n_bo = flags.budget.value_or(ctx.cfg.dataset.n_bo);
    if (n_bo < 0) throw ParameterError("--budget must be >= 0");

    auto records = generate_random_records(executor, stimulus, ctx.cfg.dataset.n_random, ctx.cfg.seed,
                                           ctx.cfg.dataset.threads);
    auto bo = bucket_search(ctx, executor, stimulus, n_bo, records);
    records.insert(records.end(), std::make_move_iterator(bo.begin()), std::make_move_iterator(bo.end()));
    save_dataset(records, ctx.out_dir / "dataset.jsonl");
    out << "wrote " << records.size() << " records to " << (ctx.out_dir / "dataset.jsonl").string() << "\n";
}

void cmd_optimize(const Flags& flags, std::ostream& out) {
    const Context ctx = make_context(flags, out);
    const Executor executor = executor_for(ctx, flags.model);
    const int n_bo = flags.budget.value_or(ctx.cfg.dataset.n_bo);
    if (n_bo < 0) throw ParameterError("--budget must be >= 0");
    const auto records = bucket_search(ctx, executor, ctx.cfg.stimulus(), n_bo, {});
    save_dataset(records, ctx.out_dir / "optimize.jsonl");

    std::ostringstream csv;
    csv << csv_header(ctx.cfg.seed)
        << "power_bin,cfo_bin,input_power_dbfs,carrier_offset_hz,lna_vdd,lo_freq_offset_hz,lo_amplitude,"
           "filter_bw_hz,if_gain_db,evm_percent\n"
        << std::setprecision(17);
    const std::size_t per_bucket = static_cast<std::size_t>(ctx.cfg.dataset.n_init + n_bo);
    for (std::size_t b = 0; b * per_bucket < records.size(); ++b) {
        const auto first = records.begin() + static_cast<std::ptrdiff_t>(b * per_bucket);
        const auto best = std::min_element(first, first + static_cast<std::ptrdiff_t>(per_bucket),
                                           [](const auto& a, const auto& c) { return a.evm_percent < c.evm_percent; });
        const BucketKey key = bucket_of(best->scenario);
        csv << key.power_bin << ',' << key.cfo_bin << ',' << best->scenario.input_power_dbfs << ','
            << best->scenario.carrier_offset_hz;
        for (Param p : kAllParams) csv << ',' << best->config.get(p);
        csv << ',' << best->evm_percent << '\n';
    }
    write_text(ctx.out_dir / "best_configs.csv", csv.str());
    out << "optimized " << records.size() / per_bucket << " buckets\n";
}

void cmd_train_twin(const Flags& flags, std::ostream& out) {
    const Context ctx = make_context(flags, out);
    TrainingSettings settings = ctx.cfg.twin.training;
    if (flags.budget) settings.epochs = *flags.budget;
    const auto& tw = ctx.cfg.twin;
    const auto pairs = make_if_amp_training_set(tw.train_frames, tw.min_drive_dbfs, tw.max_drive_dbfs,
                                                ctx.cfg.chain.if_amp_terms, ctx.cfg.seed);
    const TrainResult result =
        arvtdnn_train(pairs, tw.memory_depth, tw.envelope_order, tw.hidden_sizes, settings, ctx.cfg.seed);
    save_model(result.model, ctx.out_dir / "model.json");

    std::ostringstream csv;
    csv << csv_header(ctx.cfg.seed) << "epoch,train_loss,validation_nmse_db\n" << std::setprecision(17);
    for (std::size_t e = 0; e < result.report.epoch_loss.size(); ++e) {
        csv << e << ',' << result.report.epoch_loss[e] << ',' << result.report.validation_nmse_db[e] << '\n';
    }
    write_text(ctx.out_dir / "training.csv", csv.str());
    out << "validation NMSE " << result.report.final_nmse_db << " dB\n";
}

void cmd_eval_twin(const Flags& flags, std::ostream& out) {
    warn_unused_budget(flags, "eval-twin");
    const Context ctx = make_context(flags, out);
    const ArvtdnnModel model = load_model(artifact(flags.model, ctx.out_dir, "model.json", "model file"));
    IqFrame drive = ctx.cfg.stimulus();
    drive.samples = make_if_amp_training_set(1, ctx.cfg.twin.eval_drive_dbfs, ctx.cfg.twin.eval_drive_dbfs,
                                             ctx.cfg.chain.if_amp_terms, ctx.cfg.seed ^ 0xe7a1ULL)
                        .front()
                        .input;
    const ValidationData data = export_validation_data(model, ctx.cfg.chain.if_amp_terms, drive);
    write_psd_csv(data, ctx.cfg.seed, ctx.out_dir / "psd.csv");
    write_amam_csv(data, ctx.cfg.seed, ctx.out_dir / "amam.csv");
    const double nmse = nmse_db(memory_polynomial(drive.samples, ctx.cfg.chain.if_amp_terms),
                                arvtdnn_forward(model, drive.samples));
    json doc{{"schema_version", kArtifactSchemaVersion}, {"seed", ctx.cfg.seed}, {"nmse_db", nmse}};
    write_text(ctx.out_dir / "eval.json", doc.dump(1) + "\n");
    out << "held-out NMSE " << nmse << " dB\n";
}

void cmd_train_policy(const Flags& flags, std::ostream& out) {
    warn_unused_budget(flags, "train-policy");
    const Context ctx = make_context(flags, out);
    const auto records = load_dataset(artifact(flags.dataset, ctx.out_dir, "dataset.jsonl", "dataset file"));
    const auto agents = train_agents(records);
    save_policies(agents, ctx.cfg.seed, ctx.out_dir / "policy.json");
    out << "trained " << agents.size() << " agent policies from " << records.size() << " records\n";
}

void cmd_run_loop(const Flags& flags, std::ostream& out) {
    const Context ctx = make_context(flags, out);
    const fs::path policy_path = artifact(flags.policy, ctx.out_dir, "policy.json", "policy file");
    const fs::path model_path = artifact(flags.model, ctx.out_dir, "model.json", "model file");
    const auto agents = load_policies(policy_path);
    const Executor twin = twin_executor(TwinChain{ctx.cfg.chain, load_model(model_path)});
    const Executor chain = chain_executor(ctx.cfg.chain);

    LoopOptions options;
    options.budget = flags.budget.value_or(ctx.cfg.loop.budget);
    if (options.budget < 1) throw ParameterError("--budget must be >= 1");
    options.initial_config = ctx.cfg.loop.initial_config;
    options.eval_seed = record_seed(ctx.cfg.seed ^ 0xe5a1ULL, 0);
    options.constants = ctx.cfg.chain;
    const auto schedule = ctx.cfg.schedule();
    const ControlTrace trace = control_loop(chain, twin, agents, schedule, ctx.cfg.stimulus(), options);
    write_trace_csv(trace, ctx.cfg.seed, ctx.out_dir / "trace.csv");
    out << "ran " << trace.steps.size() << " steps; final EVM " << trace.steps.back().evm_measured_percent << "%\n";
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    init_logging();
    CLI::App app{"Digital-twin receiver simulator and multi-agent configuration control", "rfat"};
    app.require_subcommand(1);
    Flags flags;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "Config file (TOML subset)");
        sub->add_option("--seed", flags.seed, "Global seed");
        sub->add_option("--out", flags.out, "Output directory");
        sub->add_option("--budget", flags.budget, "Evaluation budget");
        return sub;
    };
    auto* simulate = add_common(app.add_subcommand("simulate", "One chain run at the first loop scenario"));
    auto* gen_data = add_common(app.add_subcommand("gen-data", "Random plus BO dataset generation"));
    gen_data->add_option("--model", flags.model, "Evaluate on the twin with this model instead of the chain");
    auto* train_twin = add_common(app.add_subcommand("train-twin", "Train the IF-amplifier network"));
    auto* eval_twin = add_common(app.add_subcommand("eval-twin", "Emit PSD and AM/AM tables for a trained model"));
    eval_twin->add_option("--model", flags.model, "Model file (default OUT/model.json)");
    auto* optimize = add_common(app.add_subcommand("optimize", "Bayesian optimization per scenario bucket"));
    optimize->add_option("--model", flags.model, "Evaluate on the twin with this model instead of the chain");
    auto* train_policy = add_common(app.add_subcommand("train-policy", "Train agent policies from a dataset"));
    train_policy->add_option("--dataset", flags.dataset, "Dataset file (default OUT/dataset.jsonl)");
    auto* run_loop = add_common(app.add_subcommand("run-loop", "Closed-loop control over the configured schedule"));
    run_loop->add_option("--model", flags.model, "Model file (default OUT/model.json)");
    run_loop->add_option("--policy", flags.policy, "Policy file (default OUT/policy.json)");

    std::vector<std::string> storage{"rfat"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (simulate->parsed()) cmd_simulate(flags, out);
        if (gen_data->parsed()) cmd_gen_data(flags, out);
        if (train_twin->parsed()) cmd_train_twin(flags, out);
        if (eval_twin->parsed()) cmd_eval_twin(flags, out);
        if (optimize->parsed()) cmd_optimize(flags, out);
        if (train_policy->parsed()) cmd_train_policy(flags, out);
        if (run_loop->parsed()) cmd_run_loop(flags, out);
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const LoadError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace rfat
