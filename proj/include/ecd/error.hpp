#pragma once

#include <stdexcept>
#include <string>

namespace ecd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Record-level schema violation in an input file.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A label vector whose known values contradict the label dependencies.
class ConsistencyError : public Error {
 public:
  ConsistencyError(int rule, const std::string& what)
      : Error(what), rule_(rule) {}
  // 1-based index of the filling rule that detected the contradiction.
  int rule() const { return rule_; }

 private:
  int rule_;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace ecd
