#pragma once

#include <stdexcept>
#include <string>

namespace spotkit {

enum class ErrorKind {
    invalid_argument,
    shape_mismatch,
    bad_magic,
    bad_version,
    truncated,
    io,
    numeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

}  // namespace spotkit
