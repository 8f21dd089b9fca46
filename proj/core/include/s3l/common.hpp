#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace s3l {

/// Error type for every contract violation in the engine. The CLI maps
/// ConfigError to exit code 2 and Error to exit code 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

namespace detail {
template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}
}  // namespace detail

}  // namespace s3l

#define S3L_CHECK(cond, ...)                                              \
    do {                                                                  \
        if (!(cond)) throw ::s3l::Error(::s3l::detail::concat(__VA_ARGS__)); \
    } while (0)

#define S3L_CONFIG_CHECK(cond, ...)                                             \
    do {                                                                         \
        if (!(cond)) throw ::s3l::ConfigError(::s3l::detail::concat(__VA_ARGS__)); \
    } while (0)
