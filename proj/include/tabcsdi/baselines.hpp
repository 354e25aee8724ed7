#pragma once

#include <vector>

#include "tabcsdi/table.hpp"

namespace tabcsdi {

// Column statistics fitted on observed training cells: mean for numerical
// columns, mode (ties toward the lowest index) for categorical ones.
struct MeanModeModel {
    std::vector<double> stat; // one entry per column

    static MeanModeModel fit(const MaskedTable& train, const TableSchema& schema);

    // Returns a full values matrix: observed cells untouched, every other
    // cell filled with the column statistic.
    std::vector<double> transform(const MaskedTable& table) const;
};

} // namespace tabcsdi
