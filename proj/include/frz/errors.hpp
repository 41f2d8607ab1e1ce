#pragma once

#include <stdexcept>
#include <string>

namespace frz {

// Error hierarchy mapped to CLI exit codes: config 1, run 2, format 3.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct config_error : error {
  using error::error;
};

struct run_error : error {
  using error::error;
};

struct format_error : error {
  using error::error;
};

// Internal API misuse (caller bug, not user input).
struct contract_error : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace frz
