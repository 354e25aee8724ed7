#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tabcsdi {

// Training runs in 32-bit floats; the 64-bit variant is compiled for the
// finite-difference oracle tests (see CMake target tabcsdi64).
#ifdef TABCSDI_USE_FLOAT64
using real_t = double;
#else
using real_t = float;
#endif

class TabError : public std::runtime_error {
public:
    explicit TabError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void cat_into(std::ostringstream&) {}
template <class T, class... Ts>
void cat_into(std::ostringstream& os, T&& head, Ts&&... tail) {
    os << head;
    cat_into(os, std::forward<Ts>(tail)...);
}
} // namespace detail

template <class... Ts>
std::string cat(Ts&&... parts) {
    std::ostringstream os;
    detail::cat_into(os, std::forward<Ts>(parts)...);
    return os.str();
}

template <class... Ts>
[[noreturn]] void fail(Ts&&... parts) {
    throw TabError(cat(std::forward<Ts>(parts)...));
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

} // namespace tabcsdi
