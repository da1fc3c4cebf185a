#pragma once

#include "metagrl/nn.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <stdexcept>
#include <string>

namespace metagrl {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr int kCheckpointVersion = 1;

// Groups of named tensors ("actor", "critic", ...) plus free-form metadata.
nlohmann::json checkpoint_json(const std::map<std::string, const ParameterStore*>& groups,
                               const nlohmann::json& metadata = nlohmann::json::object());
// Every group and tensor of `groups` must be present with the same shape;
// extra entries in the file are an error too. Returns the metadata.
nlohmann::json restore_checkpoint(const nlohmann::json& doc, const std::map<std::string, ParameterStore*>& groups);

// Writes through a temporary file and rename.
void save_checkpoint(const std::string& path, const std::map<std::string, const ParameterStore*>& groups,
                     const nlohmann::json& metadata = nlohmann::json::object());
nlohmann::json load_checkpoint(const std::string& path, const std::map<std::string, ParameterStore*>& groups);

// Writes `text` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& text);
std::string read_file(const std::string& path);

}  // namespace metagrl
