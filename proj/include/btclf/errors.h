#pragma once

#include <stdexcept>
#include <string>

namespace btclf {

// Base for every error raised by the pipeline.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  InsufficientDataError(const std::string& what, std::string label)
      : Error(what), label_(std::move(label)) {}
  const std::string& label() const { return label_; }

 private:
  std::string label_;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

// Violation of a wire or shape contract between components.
class ContractError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

// Malformed request rejected by a backend (e.g. no mask slot).
class RequestError : public BackendError {
 public:
  explicit RequestError(const std::string& what) : BackendError(what, false) {}
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public TrainingError {
 public:
  DivergenceError(int epoch, double learning_rate)
      : TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                      " (learning_rate=" + std::to_string(learning_rate) + ")"),
        epoch_(epoch),
        learning_rate_(learning_rate) {}
  int epoch() const { return epoch_; }
  double learning_rate() const { return learning_rate_; }

 private:
  int epoch_;
  double learning_rate_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Failure of a pipeline stage; carries the stage name for the CLI exit path.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace btclf
