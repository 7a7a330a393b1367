#pragma once

#include <stdexcept>
#include <string>

namespace dppsumm {

// Input or record failed an invariant; the message names the offending field.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Text could not be interpreted (malformed JSON line, unusable model output).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical routine left its domain (non-finite entries, lost orthogonality).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Transport failure that may succeed on retry (timeout, connect error, 5xx).
struct TransientError : std::runtime_error {
  explicit TransientError(const std::string& msg) : std::runtime_error(msg) {}
};

// Definitive service rejection (4xx); retrying will not help.
struct PermanentError : std::runtime_error {
  explicit PermanentError(const std::string& msg) : std::runtime_error(msg) {}
};

// A pipeline stage could not produce its artifact (e.g. empty selection).
struct PipelineError : std::runtime_error {
  explicit PipelineError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dppsumm
