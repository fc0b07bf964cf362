#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace semfield {

/// Base error for everything the engine reports.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A bundle failed validation or could not be parsed. Carries the file and
/// the field that triggered the failure so callers can point at the culprit.
class BundleError : public Error {
 public:
  BundleError(std::string file, std::string field, const std::string& message)
      : Error(file + ": " + field + ": " + message),
        file_(std::move(file)),
        field_(std::move(field)) {}

  const std::string& file() const noexcept { return file_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string file_;
  std::string field_;
};

/// Failure talking to (or validating output from) an inference backend.
class BackendError : public Error {
 public:
  using Error::Error;
};

}  // namespace semfield
