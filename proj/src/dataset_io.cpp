#include <cstdio>
#include <fstream>
#include <string>

#include "json.hpp"

#include "rfat/dataset.hpp"
#include "rfat/error.hpp"

namespace rfat {

namespace {

using nlohmann::json;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string where(std::size_t line) { return line > 0 ? " (line " + std::to_string(line) + ")" : ""; }

}  // namespace

std::string record_to_json_line(const DatasetRecord& r) {
    std::string s = "{\"schema_version\":" + std::to_string(kDatasetSchemaVersion);
    s += ",\"scenario\":{\"input_power_dbfs\":" + num(r.scenario.input_power_dbfs) +
         ",\"carrier_offset_hz\":" + num(r.scenario.carrier_offset_hz) +
         ",\"noise_seed\":" + std::to_string(r.scenario.noise_seed) + "}";
    s += ",\"config\":{";
    for (std::size_t i = 0; i < kAllParams.size(); ++i) {
        if (i > 0) s += ',';
        s += '"';
        s += param_name(kAllParams[i]);
        s += "\":" + num(r.config.get(kAllParams[i]));
    }
    s += "},\"features\":[";
    const auto f = r.features.numeric();
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (i > 0) s += ',';
        s += num(f[i]);
    }
    s += "],\"evm_percent\":" + num(r.evm_percent);
    s += ",\"source\":\"";
    s += source_name(r.source);
    s += "\",\"seed\":" + std::to_string(r.seed) + "}";
    return s;
}

DatasetRecord record_from_json_line(const std::string& line, std::size_t line_number) {
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::parse_error& e) {
        throw LoadError("dataset: malformed JSON" + where(line_number) + ": " + e.what());
    }
    const auto field = [&](const json& obj, const char* name) -> const json& {
        if (!obj.is_object() || !obj.contains(name)) {
            throw LoadError(std::string("dataset: missing field '") + name + "'" + where(line_number));
        }
        return obj.at(name);
    };
    try {
        if (field(doc, "schema_version").get<int>() != kDatasetSchemaVersion) {
            throw LoadError("dataset: unsupported schema_version" + where(line_number));
        }
        DatasetRecord r;
        const auto& sc = field(doc, "scenario");
        r.scenario.input_power_dbfs = field(sc, "input_power_dbfs").get<double>();
        r.scenario.carrier_offset_hz = field(sc, "carrier_offset_hz").get<double>();
        r.scenario.noise_seed = field(sc, "noise_seed").get<std::uint64_t>();
        const auto& cfg = field(doc, "config");
        for (Param p : kAllParams) r.config.set(p, field(cfg, std::string(param_name(p)).c_str()).get<double>());
        r.features = FeatureVector::from_numeric(field(doc, "features").get<std::vector<double>>(), r.config);
        r.evm_percent = field(doc, "evm_percent").get<double>();
        const auto source = field(doc, "source").get<std::string>();
        if (source == "random") {
            r.source = RecordSource::Random;
        } else if (source == "bo") {
            r.source = RecordSource::Bo;
        } else {
            throw LoadError("dataset: field 'source' has unknown value '" + source + "'" + where(line_number));
        }
        r.seed = field(doc, "seed").get<std::uint64_t>();
        r.validate();
        return r;
    } catch (const json::exception& e) {
        throw LoadError("dataset: bad field type" + where(line_number) + ": " + e.what());
    } catch (const ParameterError& e) {
        throw LoadError(std::string("dataset: invalid record") + where(line_number) + ": " + e.what());
    }
}

void save_dataset(std::span<const DatasetRecord> records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write dataset " + path.string());
    for (const auto& r : records) out << record_to_json_line(r) << '\n';
    if (!out) throw LoadError("error writing dataset " + path.string());
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open dataset " + path.string());
    std::vector<DatasetRecord> records;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        records.push_back(record_from_json_line(line, n));
    }
    return records;
}

}  // namespace rfat
