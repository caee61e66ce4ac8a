#pragma once

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <string>

namespace hazeforge {

// Joins the arguments into one string via operator<<.
template <typename... Args>
std::string cat(Args&&... args) {
    std::ostringstream oss;
    (oss << ... << std::forward<Args>(args));
    return oss.str();
}

// Shortest decimal form that parses back to exactly the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

// Thrown when a caller violates an op precondition (bad shape, bad argument).
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown when IO or numeric work fails at runtime (unreadable file, bad magic).
struct RuntimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename... Args>
void check(bool cond, Args&&... args) {
    if (!cond)
        throw ContractError(cat(std::forward<Args>(args)...));
}

template <typename... Args>
void require(bool cond, Args&&... args) {
    if (!cond)
        throw RuntimeError(cat(std::forward<Args>(args)...));
}

} // namespace hazeforge
