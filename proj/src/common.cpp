#include "pyag/common.hpp"

#include <iostream>
#include <mutex>

namespace pyag {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::InvalidSpec: return "invalid_spec";
        case ErrorKind::ShapeMismatch: return "shape_mismatch";
        case ErrorKind::CorruptData: return "corrupt_data";
        case ErrorKind::Config: return "config_error";
        case ErrorKind::Io: return "io_error";
    }
    return "unknown";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

namespace log {
namespace {

std::mutex g_mutex;

Sink& sink() {
    static Sink s = [](std::string_view level, std::string_view message) {
        std::cerr << "[" << level << "] " << message << '\n';
    };
    return s;
}

void emit(std::string_view level, std::string_view message) {
    std::lock_guard lock(g_mutex);
    if (sink()) sink()(level, message);
}

}  // namespace

Sink set_sink(Sink s) {
    std::lock_guard lock(g_mutex);
    Sink old = std::move(sink());
    sink() = std::move(s);
    return old;
}

void warn(std::string_view message) { emit("warn", message); }
void info(std::string_view message) { emit("info", message); }

}  // namespace log
}  // namespace pyag
