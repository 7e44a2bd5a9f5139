#pragma once

#include <stdexcept>
#include <string>

namespace arcade {

enum class ErrorKind { config, domain, infeasible, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  const char* kind_name() const;
  // process exit code used by the CLI
  int exit_code() const;

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::domain, w) {}
};
struct InfeasibleError : Error {
  explicit InfeasibleError(const std::string& w) : Error(ErrorKind::infeasible, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::numeric, w) {}
};

inline const char* Error::kind_name() const {
  switch (kind_) {
    case ErrorKind::config: return "config";
    case ErrorKind::domain: return "domain";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::numeric: return "numeric";
  }
  return "unknown";
}

inline int Error::exit_code() const {
  switch (kind_) {
    case ErrorKind::config: return 2;
    case ErrorKind::domain: return 2;
    case ErrorKind::infeasible: return 3;
    case ErrorKind::numeric: return 4;
  }
  return 1;
}

}  // namespace arcade
