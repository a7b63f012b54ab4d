#pragma once

#include <stdexcept>
#include <string>

namespace nmor {

// Raised when caller-supplied parameters break a documented precondition.
// `path` names the offending key (e.g. "waveform.fwhm_s") when known.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& message, std::string path = {})
      : std::invalid_argument(path.empty() ? message : path + ": " + message),
        path_(std::move(path)),
        detail_(message) {}

  const std::string& path() const noexcept { return path_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string path_;
  std::string detail_;
};

// Raised when a solver cannot deliver a result within its stated tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nmor
