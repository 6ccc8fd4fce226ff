#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace iie {

// Every library error carries a stable identifier so the command line
// front end can map it onto an exit code and a parsable stderr line.
class Error : public std::runtime_error {
 public:
  Error(std::string id, const std::string& what)
      : std::runtime_error(what), id_(std::move(id)) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class PositivityError : public Error {
 public:
  explicit PositivityError(const std::string& what, std::vector<long> rows = {})
      : Error("E_POSITIVITY", what), rows_(std::move(rows)) {}
  const std::vector<long>& rows() const { return rows_; }

 private:
  std::vector<long> rows_;
};

class NormalizationError : public Error {
 public:
  explicit NormalizationError(const std::string& what) : Error("E_NORMALIZATION", what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error("E_DOMAIN", what) {}
};

class RatioDegenerateError : public Error {
 public:
  explicit RatioDegenerateError(const std::string& what) : Error("E_RATIO_DEGENERATE", what) {}
};

class RankError : public Error {
 public:
  explicit RankError(const std::string& what) : Error("E_RANK", what) {}
};

class DegenerateDesignError : public Error {
 public:
  explicit DegenerateDesignError(const std::string& what) : Error("E_DEGENERATE_DESIGN", what) {}
};

class ScaleError : public Error {
 public:
  explicit ScaleError(const std::string& what) : Error("E_SCALE", what) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error("E_SCHEMA", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("E_CONFIG", what) {}
};

class ReplicationError : public Error {
 public:
  explicit ReplicationError(const std::string& what) : Error("E_REPLICATION", what) {}
};

class VerificationError : public Error {
 public:
  explicit VerificationError(const std::string& what) : Error("E_VERIFY", what) {}
};

}  // namespace iie
