#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace prism {

/// Raised when a run configuration (file, flag set, checkpoint header) is unusable.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised on filesystem / parse failures.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
[[noreturn]] inline void check_failed(const char* expr, const std::string& msg) {
    throw std::invalid_argument(msg.empty() ? std::string("check failed: ") + expr : msg);
}
} // namespace detail

} // namespace prism

#define PRISM_CHECK(cond, ...)                                                     \
    do {                                                                           \
        if (!(cond)) {                                                             \
            std::ostringstream oss__;                                              \
            oss__ << "" __VA_ARGS__;                                               \
            ::prism::detail::check_failed(#cond, oss__.str());                     \
        }                                                                          \
    } while (0)
