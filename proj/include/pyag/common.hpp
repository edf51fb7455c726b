#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pyag {

/// Error categories surfaced to callers and to the CLI's JSON error channel.
enum class ErrorKind {
    InvalidArgument,
    InvalidSpec,
    ShapeMismatch,
    CorruptData,
    Config,
    Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

namespace log {

using Sink = std::function<void(std::string_view level, std::string_view message)>;

// Replaces the process-wide sink (default: stderr). Returns the previous one.
Sink set_sink(Sink sink);

void warn(std::string_view message);
void info(std::string_view message);

}  // namespace log

}  // namespace pyag
