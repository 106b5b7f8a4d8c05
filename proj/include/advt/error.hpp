#ifndef ADVT_ERROR_HPP
#define ADVT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace advt {

// Broad error categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kFormat,
  kConsistency,
  kSize,
  kContract,
  kUnsupportedFamily,
  kDegenerateModel,
  kNoAdversarial,
  kTraining,
  kBudgetExhausted,
  kTransport,
  kProtocol,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::kFormat, what) {}
};

class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& what)
      : Error(ErrorKind::kConsistency, what) {}
};

class SizeError : public Error {
 public:
  explicit SizeError(const std::string& what) : Error(ErrorKind::kSize, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorKind::kContract, what) {}
};

class UnsupportedFamilyError : public Error {
 public:
  explicit UnsupportedFamilyError(const std::string& what)
      : Error(ErrorKind::kUnsupportedFamily, what) {}
};

class DegenerateModelError : public Error {
 public:
  explicit DegenerateModelError(const std::string& what)
      : Error(ErrorKind::kDegenerateModel, what) {}
};

class NoAdversarialError : public Error {
 public:
  explicit NoAdversarialError(const std::string& what)
      : Error(ErrorKind::kNoAdversarial, what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(ErrorKind::kTraining, what) {}
};

class BudgetExhausted : public Error {
 public:
  explicit BudgetExhausted(const std::string& what)
      : Error(ErrorKind::kBudgetExhausted, what) {}
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(ErrorKind::kTransport, what), attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class ProtocolError : public Error {
 public:
  ProtocolError(std::string code, const std::string& what)
      : Error(ErrorKind::kProtocol, what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

}  // namespace advt

#endif  // ADVT_ERROR_HPP
