#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tabcsdi/model.hpp"

namespace tabcsdi {

// One run description: dataset files, protocol knobs, imputer choice, and the
// model configuration. Unknown keys anywhere in the file are rejected.
struct RunConfig {
    std::string dataset_name;
    std::string csv_path;
    std::string schema_path;
    std::optional<std::string> sentinel_override;

    double split_fraction = 0.8;
    double mcar_rate = 0.2;
    std::vector<uint64_t> seeds{11, 12, 13, 14, 15};
    std::string imputer = "tabcsdi"; // mean_mode | tabcsdi
    ModelConfig model;
    std::string output_dir = "out";
    int threads = 0; // 0 = hardware concurrency

    // Relative paths in the file resolve against its directory. Referenced
    // dataset files must exist.
    static RunConfig load(const std::string& path);
    static RunConfig from_json_text(const std::string& text, const std::string& base_dir);

    void validate() const;

    // Replaces the seed list with values derived from `master`, one per
    // original entry, and returns the list.
    void reseed(uint64_t master);
};

} // namespace tabcsdi
