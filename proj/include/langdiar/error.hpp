#pragma once

#include <stdexcept>

namespace langdiar {

// Error taxonomy mirrors the CLI exit codes: config=1, data=2, client=3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ClientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace langdiar
