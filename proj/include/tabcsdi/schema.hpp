#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabcsdi/common.hpp"

namespace tabcsdi {

enum class ColumnKind { numerical, categorical };

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::numerical;
    std::vector<std::string> categories; // categorical only, order defines index mapping

    bool is_categorical() const { return kind == ColumnKind::categorical; }
    int cardinality() const { return static_cast<int>(categories.size()); }
};

// Column typing for one dataset plus the sentinel string that marks a missing
// cell in its CSV files ("" by default, "?" for Census-style files).
struct TableSchema {
    std::vector<ColumnSchema> columns;
    std::string missing_sentinel;

    int ncols() const { return static_cast<int>(columns.size()); }

    // schema files are JSON; see docs in README
    static TableSchema load(const std::string& path);
    static TableSchema from_json_text(const std::string& text);
    std::string to_json_text() const;
    void save(const std::string& path) const;

    // FNV-1a over the canonical serialization; stored in checkpoints so that
    // impute can refuse mismatched inputs.
    uint64_t hash() const;

    void validate() const;

    // Human-readable column diff against another schema (for error messages).
    std::string diff(const TableSchema& other) const;
};

} // namespace tabcsdi
