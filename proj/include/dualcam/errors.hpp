#pragma once

#include <stdexcept>
#include <string>

namespace dcam {

// Invalid numeric input (non-finite values, out-of-range parameters).
struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/trajectory dimensions do not satisfy an operation's contract.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed text input; carries the 1-based line number when known.
struct ParseError : std::runtime_error {
    int line = 0;
    ParseError(const std::string& msg, int line_no)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration value or key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failure; message names the offending path.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dcam
