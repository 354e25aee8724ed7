#pragma once

#include <memory>
#include <string>

#include "tabcsdi/model.hpp"

namespace tabcsdi {

// Checkpoint container: a JSON header (schema, encoding spec, model config,
// normalization, fingerprint) followed by named parameter tensors as raw
// 64-bit data. Everything impute needs travels with the file.
void save_checkpoint(const std::string& path, const TabCSDIModel& model, const std::string& fingerprint_json);

struct LoadedCheckpoint {
    std::unique_ptr<TabCSDIModel> model;
    std::string fingerprint_json;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace tabcsdi
