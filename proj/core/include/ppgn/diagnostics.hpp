#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace ppgn {

// Error taxonomy. The CLI maps ConfigError/ParseError/ValidationError to exit
// code 2 and NumericError/SimulationError to exit code 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct SimulationError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

using WarningSink = std::function<void(const std::string&)>;

/// Routes non-fatal warnings. Default sink writes to stderr; tests install a
/// capturing sink. Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace ppgn
