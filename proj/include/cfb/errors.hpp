#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace cfb {

// Every engine error derives from Error. The category decides the CLI exit
// code: user-facing input problems map to 2, backend and capability problems
// to 3, broken internal invariants to 4.
enum class ErrorCategory { User, Backend, Internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& detail)
      : Error(ErrorCategory::User, "config error [" + field + "]: " + detail),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& detail)
      : Error(ErrorCategory::Backend, "capability error: " + detail) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& detail)
      : Error(ErrorCategory::User, "input error: " + detail) {}
};

class OOVError : public Error {
 public:
  explicit OOVError(std::string word)
      : Error(ErrorCategory::User, "out-of-vocabulary word: '" + word + "'"),
        word_(std::move(word)) {}

  const std::string& word() const noexcept { return word_; }

 private:
  std::string word_;
};

class CorpusError : public Error {
 public:
  explicit CorpusError(const std::string& detail)
      : Error(ErrorCategory::User, "corpus error: " + detail) {}
};

class EmptyContextError : public Error {
 public:
  EmptyContextError() : Error(ErrorCategory::User, "context tokenizes to zero tokens") {}
};

class ZeroNormError : public Error {
 public:
  explicit ZeroNormError(const std::string& detail)
      : Error(ErrorCategory::Backend, "zero-norm embedding: " + detail) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& detail)
      : Error(ErrorCategory::Internal, "dimension mismatch: " + detail) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& detail)
      : Error(ErrorCategory::Internal, "value out of range: " + detail) {}
};

class MissingPositionError : public Error {
 public:
  explicit MissingPositionError(std::size_t position)
      : Error(ErrorCategory::Backend,
              "attention row lacks source position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class NegativeMeanError : public Error {
 public:
  explicit NegativeMeanError(double mean)
      : Error(ErrorCategory::Backend,
              "mean relevance " + std::to_string(mean) +
                  " is negative; normalization would flip boost signs"),
        mean_(mean) {}

  double mean() const noexcept { return mean_; }

 private:
  double mean_;
};

class ModeArgumentError : public Error {
 public:
  explicit ModeArgumentError(const std::string& detail)
      : Error(ErrorCategory::Internal, "boost mode argument missing: " + detail) {}
};

class NonFiniteError : public Error {
 public:
  explicit NonFiniteError(const std::string& detail)
      : Error(ErrorCategory::Backend, "non-finite value: " + detail) {}
};

class DatasetError : public Error {
 public:
  explicit DatasetError(const std::string& detail)
      : Error(ErrorCategory::User, "dataset error: " + detail) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& detail)
      : Error(ErrorCategory::Internal, "invariant violated: " + detail) {}
};

}  // namespace cfb
