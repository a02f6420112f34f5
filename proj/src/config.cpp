#include "rfat/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

#include "rfat/dataset.hpp"
#include "rfat/error.hpp"

namespace rfat {

namespace {

using Value = std::variant<double, bool, std::string, std::vector<double>>;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) throw ParameterError(where + ": invalid number '" + s + "'");
    return v;
}

Value parse_value(const std::string& raw, const std::string& where) {
    if (raw.empty()) throw ParameterError(where + ": missing value");
    if (raw == "true") return true;
    if (raw == "false") return false;
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"') throw ParameterError(where + ": unterminated string");
        return raw.substr(1, raw.size() - 2);
    }
    if (raw.front() == '[') {
        if (raw.back() != ']') throw ParameterError(where + ": unterminated array");
        std::vector<double> out;
        std::stringstream ss(raw.substr(1, raw.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            out.push_back(parse_number(item, where));
        }
        return out;
    }
    return parse_number(raw, where);
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

class Binder {
public:
    using Setter = std::function<void(const Value&, const std::string&)>;

    void real(const std::string& key, double& target) {
        setters_[key] = [&target](const Value& v, const std::string& where) { target = as_number(v, where); };
    }
    void integer(const std::string& key, int& target) {
        setters_[key] = [&target](const Value& v, const std::string& where) { target = as_int(v, where); };
    }
    void seed(const std::string& key, std::uint64_t& target) {
        setters_[key] = [&target](const Value& v, const std::string& where) {
            const double d = as_number(v, where);
            if (d < 0.0 || d != std::floor(d) || d > 9.007199254740992e15) {
                throw ParameterError(where + ": expected a non-negative integer");
            }
            target = static_cast<std::uint64_t>(d);
        };
    }
    void boolean(const std::string& key, bool& target) {
        setters_[key] = [&target](const Value& v, const std::string& where) {
            if (!std::holds_alternative<bool>(v)) throw ParameterError(where + ": expected true or false");
            target = std::get<bool>(v);
        };
    }
    void text(const std::string& key, std::filesystem::path& target) {
        setters_[key] = [&target](const Value& v, const std::string& where) {
            if (!std::holds_alternative<std::string>(v)) throw ParameterError(where + ": expected a quoted string");
            target = std::get<std::string>(v);
        };
    }
    void reals(const std::string& key, std::vector<double>& target) {
        setters_[key] = [&target](const Value& v, const std::string& where) {
            if (!std::holds_alternative<std::vector<double>>(v)) throw ParameterError(where + ": expected an array");
            target = std::get<std::vector<double>>(v);
        };
    }
    void integers(const std::string& key, std::vector<int>& target) {
        setters_[key] = [&target](const Value& v, const std::string& where) {
            if (!std::holds_alternative<std::vector<double>>(v)) throw ParameterError(where + ": expected an array");
            target.clear();
            for (double d : std::get<std::vector<double>>(v)) target.push_back(as_int(d, where));
        };
    }

    void set(const std::string& key, const Value& v, const std::string& where) const {
        const auto it = setters_.find(key);
        if (it == setters_.end()) throw ParameterError(where + ": unknown key '" + key + "'");
        it->second(v, where);
    }

private:
    static double as_number(const Value& v, const std::string& where) {
        if (!std::holds_alternative<double>(v)) throw ParameterError(where + ": expected a number");
        return std::get<double>(v);
    }
    static int as_int(const Value& v, const std::string& where) {
        const double d = as_number(v, where);
        if (d != std::floor(d) || std::abs(d) > 1e9) throw ParameterError(where + ": expected an integer");
        return static_cast<int>(d);
    }

    std::map<std::string, Setter> setters_;
};

void require(bool ok, const std::string& message) {
    if (!ok) throw ParameterError(message);
}

}  // namespace

LoopSettings RunConfig::default_loop() {
    LoopSettings loop;
    for (int i = 0; i < 10; ++i) loop.powers_dbfs.push_back(-50.0 + 5.0 * i);
    loop.cfos_hz = {0.0, 5e3, 10e3, 15e3, 20e3, -20e3, -15e3, -10e3, -5e3, 0.0};
    return loop;
}

std::vector<Scenario> RunConfig::schedule() const {
    std::vector<Scenario> out;
    for (std::size_t i = 0; i < loop.powers_dbfs.size(); ++i) {
        out.push_back({loop.powers_dbfs[i], loop.cfos_hz[i], record_seed(seed ^ 0x5c4edULL, i)});
    }
    return out;
}

IqFrame RunConfig::stimulus() const {
    return generate_qam_frame(waveform.n_symbols, waveform.constellation_order, waveform.sps, waveform.rolloff,
                              waveform.stimulus_seed, waveform.symbol_rate_hz);
}

void RunConfig::validate() const {
    require(waveform.n_symbols >= 16, "[waveform] n_symbols must be >= 16");
    require(waveform.constellation_order == 4 || waveform.constellation_order == 16 || waveform.constellation_order == 64,
            "[waveform] constellation_order must be 4, 16 or 64");
    require(waveform.sps >= 2, "[waveform] sps must be >= 2");
    require(waveform.rolloff > 0.0 && waveform.rolloff <= 1.0, "[waveform] rolloff must be in (0, 1]");
    require(waveform.symbol_rate_hz > 0.0, "[waveform] symbol_rate_hz must be positive");

    require(chain.lna_gain_max_db >= chain.lna_gain_min_db, "[chain] lna_gain_max_db must be >= lna_gain_min_db");
    require(chain.lna_asat_per_volt > 0.0, "[chain] lna_asat_per_volt must be positive");
    require(chain.rapp_smoothness > 0.0, "[chain] rapp_smoothness must be positive");
    require(chain.filter_order >= 1 && chain.filter_order <= 8, "[chain] filter_order must be in [1, 8]");
    require(chain.adc_bits >= 4 && chain.adc_bits <= 16, "[chain] adc_bits must be in [4, 16]");

    require(twin.memory_depth >= 0, "[twin] memory_depth must be >= 0");
    require(twin.envelope_order >= 1, "[twin] envelope_order must be >= 1");
    require(!twin.hidden_sizes.empty(), "[twin] hidden_sizes must not be empty");
    for (int h : twin.hidden_sizes) require(h >= 1, "[twin] hidden_sizes entries must be >= 1");
    require(twin.training.epochs >= 1, "[twin] epochs must be >= 1");
    require(twin.training.batch_size >= 1, "[twin] batch_size must be >= 1");
    require(twin.training.learning_rate > 0.0, "[twin] learning_rate must be positive");
    require(twin.training.lr_decay >= 0.0, "[twin] lr_decay must be >= 0");
    require(twin.training.validation_fraction > 0.0 && twin.training.validation_fraction < 1.0,
            "[twin] validation_fraction must be in (0, 1)");
    require(twin.training.patience >= 1, "[twin] patience must be >= 1");
    require(twin.train_frames >= 2, "[twin] train_frames must be >= 2");
    require(twin.min_drive_dbfs <= twin.max_drive_dbfs, "[twin] min_drive_dbfs must be <= max_drive_dbfs");

    require(dataset.n_random >= 1, "[dataset] n_random must be >= 1");
    require(dataset.n_init >= 2, "[dataset] n_init must be >= 2");
    require(dataset.n_bo >= 0, "[dataset] n_bo must be >= 0");
    require(dataset.candidate_pool >= 1, "[dataset] candidate_pool must be >= 1");
    require(dataset.threads >= 1, "[dataset] threads must be >= 1");

    require(!loop.powers_dbfs.empty(), "[loop] powers_dbfs must not be empty");
    require(loop.powers_dbfs.size() == loop.cfos_hz.size(), "[loop] powers_dbfs and cfos_hz must have equal length");
    for (double p : loop.powers_dbfs) require(Scenario::power_range().contains(p), "[loop] powers_dbfs entry out of range");
    for (double c : loop.cfos_hz) require(Scenario::cfo_range().contains(c), "[loop] cfos_hz entry out of range");
    require(loop.budget >= 1, "[loop] budget must be >= 1");
    try {
        loop.initial_config.validate();
    } catch (const ParameterError& e) {
        throw ParameterError(std::string("[loop] initial ") + e.what());
    }
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, Binder> sections;
    Binder& top = sections[""];
    top.seed("seed", cfg.seed);
    top.text("out_dir", cfg.out_dir);

    Binder& w = sections["waveform"];
    w.integer("n_symbols", cfg.waveform.n_symbols);
    w.integer("constellation_order", cfg.waveform.constellation_order);
    w.integer("sps", cfg.waveform.sps);
    w.real("rolloff", cfg.waveform.rolloff);
    w.real("symbol_rate_hz", cfg.waveform.symbol_rate_hz);
    w.seed("stimulus_seed", cfg.waveform.stimulus_seed);

    Binder& c = sections["chain"];
    c.real("lna_gain_min_db", cfg.chain.lna_gain_min_db);
    c.real("lna_gain_max_db", cfg.chain.lna_gain_max_db);
    c.real("lna_noise_best_dbfs", cfg.chain.lna_noise_best_dbfs);
    c.real("lna_noise_span_db", cfg.chain.lna_noise_span_db);
    c.real("lna_asat_per_volt", cfg.chain.lna_asat_per_volt);
    c.real("rapp_smoothness", cfg.chain.rapp_smoothness);
    c.real("mixer_spur", cfg.chain.mixer_spur);
    c.real("mixer_noise_dbfs", cfg.chain.mixer_noise_dbfs);
    c.integer("filter_order", cfg.chain.filter_order);
    c.integer("adc_bits", cfg.chain.adc_bits);
    c.boolean("noise_enabled", cfg.chain.noise_enabled);

    Binder& t = sections["twin"];
    t.integer("memory_depth", cfg.twin.memory_depth);
    t.integer("envelope_order", cfg.twin.envelope_order);
    t.integers("hidden_sizes", cfg.twin.hidden_sizes);
    t.integer("epochs", cfg.twin.training.epochs);
    t.integer("batch_size", cfg.twin.training.batch_size);
    t.real("learning_rate", cfg.twin.training.learning_rate);
    t.real("lr_decay", cfg.twin.training.lr_decay);
    t.real("validation_fraction", cfg.twin.training.validation_fraction);
    t.integer("patience", cfg.twin.training.patience);
    t.integer("train_frames", cfg.twin.train_frames);
    t.real("min_drive_dbfs", cfg.twin.min_drive_dbfs);
    t.real("max_drive_dbfs", cfg.twin.max_drive_dbfs);
    t.real("eval_drive_dbfs", cfg.twin.eval_drive_dbfs);

    Binder& d = sections["dataset"];
    d.integer("n_random", cfg.dataset.n_random);
    d.integer("n_init", cfg.dataset.n_init);
    d.integer("n_bo", cfg.dataset.n_bo);
    d.integer("candidate_pool", cfg.dataset.candidate_pool);
    d.integer("threads", cfg.dataset.threads);

    Binder& l = sections["loop"];
    l.reals("powers_dbfs", cfg.loop.powers_dbfs);
    l.reals("cfos_hz", cfg.loop.cfos_hz);
    l.integer("budget", cfg.loop.budget);
    l.real("initial_lna_vdd", cfg.loop.initial_config.lna_vdd);
    l.real("initial_lo_freq_offset_hz", cfg.loop.initial_config.lo_freq_offset_hz);
    l.real("initial_lo_amplitude", cfg.loop.initial_config.lo_amplitude);
    l.real("initial_filter_bw_hz", cfg.loop.initial_config.filter_bw_hz);
    l.real("initial_if_gain_db", cfg.loop.initial_config.if_gain_db);

    std::istringstream in(text);
    std::string line;
    std::string section;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        const std::string where = "config line " + std::to_string(n);
        if (body.front() == '[') {
            if (body.back() != ']') throw ParameterError(where + ": malformed section header");
            section = trim(body.substr(1, body.size() - 2));
            if (section.empty() || !sections.contains(section)) {
                throw ParameterError(where + ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ParameterError(where + ": expected key = value");
        const std::string key = trim(body.substr(0, eq));
        const std::string qualified = section.empty() ? key : "[" + section + "] " + key;
        sections.at(section).set(key, parse_value(trim(body.substr(eq + 1)), where + " (" + qualified + ")"),
                                 where + " (" + qualified + ")");
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParameterError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace rfat
