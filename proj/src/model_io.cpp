#include <fstream>
#include <sstream>

#include "json.hpp"

#include "rfat/error.hpp"
#include "rfat/twin.hpp"

namespace rfat {

namespace {

constexpr int kModelSchemaVersion = 1;

using nlohmann::json;

}  // namespace

std::string model_to_json(const ArvtdnnModel& model) {
    model.validate();
    json doc;
    doc["format_version"] = kModelSchemaVersion;
    doc["schema_version"] = kModelSchemaVersion;
    doc["M"] = model.memory_depth;
    doc["K"] = model.envelope_order;
    doc["hidden_sizes"] = model.hidden_sizes;
    json layers = json::array();
    for (const auto& layer : model.layers) {
        json w = json::array();
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) row.push_back(layer.weights(r, c));
            w.push_back(std::move(row));
        }
        json b = json::array();
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) b.push_back(layer.bias(r));
        layers.push_back({{"weights", std::move(w)}, {"bias", std::move(b)}});
    }
    doc["layers"] = std::move(layers);
    doc["training"] = {{"seed", model.training.seed},
                       {"epochs", model.training.epochs},
                       {"final_nmse_db", model.training.final_nmse_db}};
    // nlohmann writes the shortest representation that round-trips each double.
    return doc.dump(1);
}

ArvtdnnModel model_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw LoadError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (doc.at("format_version").get<int>() != kModelSchemaVersion) {
            throw LoadError("unsupported model format_version " + doc.at("format_version").dump());
        }
        ArvtdnnModel model;
        model.memory_depth = doc.at("M").get<int>();
        model.envelope_order = doc.at("K").get<int>();
        model.hidden_sizes = doc.at("hidden_sizes").get<std::vector<int>>();
        for (const auto& jl : doc.at("layers")) {
            const auto& w = jl.at("weights");
            const auto& b = jl.at("bias");
            const auto rows = static_cast<Eigen::Index>(w.size());
            const auto cols = rows > 0 ? static_cast<Eigen::Index>(w.at(0).size()) : 0;
            DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(static_cast<Eigen::Index>(b.size()))};
            for (Eigen::Index r = 0; r < rows; ++r) {
                const auto& row = w.at(static_cast<std::size_t>(r));
                if (static_cast<Eigen::Index>(row.size()) != cols) throw LoadError("ragged weight matrix in model file");
                for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
            }
            for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = b.at(static_cast<std::size_t>(r)).get<double>();
            model.layers.push_back(std::move(layer));
        }
        const auto& tr = doc.at("training");
        model.training.seed = tr.at("seed").get<std::uint64_t>();
        model.training.epochs = tr.at("epochs").get<int>();
        model.training.final_nmse_db = tr.at("final_nmse_db").get<double>();
        model.validate();
        return model;
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed model file: ") + e.what());
    } catch (const ParameterError& e) {
        throw LoadError(std::string("invalid model: ") + e.what());
    }
}

void save_model(const ArvtdnnModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write model file " + path.string());
    out << model_to_json(model) << '\n';
}

ArvtdnnModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open model file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace rfat
