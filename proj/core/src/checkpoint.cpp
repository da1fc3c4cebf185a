#include "metagrl/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace metagrl {

nlohmann::json checkpoint_json(const std::map<std::string, const ParameterStore*>& groups,
                               const nlohmann::json& metadata) {
    nlohmann::json doc;
    doc["format"] = "metagrl-checkpoint";
    doc["version"] = kCheckpointVersion;
    doc["metadata"] = metadata;
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [group, store] : groups) {
        nlohmann::json tensors = nlohmann::json::array();
        for (std::size_t i = 0; i < store->tensors().size(); ++i) {
            const Matrix& m = store->tensors()[i].value();
            std::vector<double> data(m.data(), m.data() + m.size());
            tensors.push_back({{"name", store->names()[i]}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", data}});
        }
        out[group] = std::move(tensors);
    }
    doc["groups"] = std::move(out);
    return doc;
}

nlohmann::json restore_checkpoint(const nlohmann::json& doc, const std::map<std::string, ParameterStore*>& groups) {
    if (doc.value("format", "") != "metagrl-checkpoint") throw CheckpointError("not a metagrl checkpoint");
    if (doc.value("version", 0) != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(doc.value("version", 0)));
    }
    const auto& stored = doc.at("groups");
    if (stored.size() != groups.size()) throw CheckpointError("checkpoint groups do not match the model");
    // Validate everything before touching any parameter.
    for (const auto& [group, store] : groups) {
        if (!stored.contains(group)) throw CheckpointError("checkpoint lacks group '" + group + "'");
        const auto& tensors = stored.at(group);
        if (tensors.size() != store->tensors().size()) {
            throw CheckpointError("group '" + group + "' has " + std::to_string(tensors.size()) + " tensors, model has " +
                                  std::to_string(store->tensors().size()));
        }
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            const auto& t = tensors[i];
            const std::string& name = store->names()[i];
            if (t.at("name").get<std::string>() != name) {
                throw CheckpointError("group '" + group + "' tensor " + std::to_string(i) + " is '" +
                                      t.at("name").get<std::string>() + "', expected '" + name + "'");
            }
            const auto rows = t.at("rows").get<Eigen::Index>();
            const auto cols = t.at("cols").get<Eigen::Index>();
            const auto& expect = store->tensors()[i];
            if (rows != expect.rows() || cols != expect.cols() || t.at("data").size() != static_cast<std::size_t>(rows * cols)) {
                throw CheckpointError("shape mismatch for '" + group + "/" + name + "': checkpoint " +
                                      std::to_string(rows) + "x" + std::to_string(cols) + ", model " +
                                      std::to_string(expect.rows()) + "x" + std::to_string(expect.cols()));
            }
        }
    }
    for (const auto& [group, store] : groups) {
        const auto& tensors = stored.at(group);
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            const auto data = tensors[i].at("data").get<std::vector<double>>();
            Matrix& m = store->tensors()[i].mutable_value();
            std::copy(data.begin(), data.end(), m.data());
        }
    }
    return doc.value("metadata", nlohmann::json::object());
}

void write_file_atomic(const std::string& path, const std::string& text) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
        out << text;
        if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, target);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save_checkpoint(const std::string& path, const std::map<std::string, const ParameterStore*>& groups,
                     const nlohmann::json& metadata) {
    write_file_atomic(path, checkpoint_json(groups, metadata).dump());
}

nlohmann::json load_checkpoint(const std::string& path, const std::map<std::string, ParameterStore*>& groups) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("malformed checkpoint '" + path + "': " + e.what());
    }
    return restore_checkpoint(doc, groups);
}

}  // namespace metagrl
