#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tabcsdi/rng.hpp"
#include "tabcsdi/schema.hpp"

namespace tabcsdi {

// A table with two masks. `observed` marks cells whose value is present and
// usable; `target` marks held-out evaluation cells whose ground truth lives in
// `truth`. A cell is never both observed and target, and target cells carry a
// zero in `values`.
struct MaskedTable {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;    // rows x cols; categoricals as category indices
    std::vector<uint8_t> observed; // rows x cols
    std::vector<uint8_t> target;   // rows x cols
    std::vector<double> truth;     // rows x cols; valid where target == 1

    MaskedTable() = default;
    MaskedTable(int r, int c)
        : rows(r), cols(c), values(static_cast<size_t>(r) * c, 0.0),
          observed(static_cast<size_t>(r) * c, 0), target(static_cast<size_t>(r) * c, 0),
          truth(static_cast<size_t>(r) * c, 0.0) {}

    size_t idx(int r, int c) const { return static_cast<size_t>(r) * cols + c; }
    double value(int r, int c) const { return values[idx(r, c)]; }
    bool is_observed(int r, int c) const { return observed[idx(r, c)] != 0; }
    bool is_target(int r, int c) const { return target[idx(r, c)] != 0; }

    int64_t count_observed() const;
    int64_t count_target() const;
    void check_invariants() const;
};

// Per numerical column min/max observed on the training split.
struct NormalizationParams {
    struct Range {
        double min = 0.0, max = 0.0;
    };
    std::vector<std::optional<Range>> per_column; // nullopt for categorical columns

    double apply(int col, double x) const;
    double invert(int col, double x) const;
};

// Reads a CSV with header row. Sentinel cells (schema.missing_sentinel) become
// unobserved; categorical strings map to indices in schema order.
MaskedTable load_csv(const std::string& path, const TableSchema& schema);

// One CSV record; supports quoted fields with "" escapes and trailing CR.
// line_no is only for error messages.
std::vector<std::string> split_csv_line(const std::string& line, int line_no);

// Same split but keeping quotes and escapes verbatim, for byte-preserving
// rewrites.
std::vector<std::string> split_csv_line_raw(const std::string& line);

// Fits min/max on observed numerical cells (unless params given) and maps
// values and ground truth into [0,1]; constant columns map to 0.
NormalizationParams fit_minmax(const MaskedTable& table, const TableSchema& schema);
void apply_minmax(MaskedTable& table, const TableSchema& schema, const NormalizationParams& params);

// Moves each observed cell to the target set independently with probability
// `rate`, recording ground truth.
MaskedTable inject_mcar(const MaskedTable& table, double rate, uint64_t seed);

// Seeded shuffle split into disjoint, exhaustive row subsets.
std::pair<MaskedTable, MaskedTable> split_rows(const MaskedTable& table, double train_fraction, uint64_t seed);

MaskedTable take_rows(const MaskedTable& table, const std::vector<int>& row_ids);

} // namespace tabcsdi
