#pragma once

#include <stdexcept>
#include <string>

namespace fedef {

// Base class for all library errors.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid run/problem configuration (rejected before any work is done).
class config_error : public error {
 public:
  using error::error;
};

// Malformed in-memory structure: layout mismatch, corrupt encoding index.
class structural_error : public error {
 public:
  using error::error;
};

// Bad numeric input (NaN/Inf) or an undefined ratio (zero denominator).
class numeric_error : public error {
 public:
  using error::error;
};

// Training blew up; message carries round/client context.
class divergence_error : public error {
 public:
  divergence_error(const std::string& what, int round, int client)
      : error(what), round_(round), client_(client) {}
  int round() const { return round_; }
  int client() const { return client_; }

 private:
  int round_;
  int client_;
};

class io_error : public error {
 public:
  using error::error;
};

}  // namespace fedef
