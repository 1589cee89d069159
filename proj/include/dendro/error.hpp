#pragma once

#include <stdexcept>
#include <string>

namespace dendro {

/// Base of every error raised by the library. `code()` is a stable
/// machine-readable identifier used by the CLI error line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io_error", what) {}
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t offset)
      : Error("parse_error", what), offset(offset) {}
  std::size_t offset;
};

/// Training data carries a single label; callers substitute a constant model.
struct DegenerateInput : Error {
  explicit DegenerateInput(const std::string& what) : Error("degenerate_input", what) {}
};

/// A class pair had no held-out instances in any resampling fold.
struct NoEvidence : Error {
  NoEvidence(const std::string& what, int j, int k) : Error("no_evidence", what), j(j), k(k) {}
  int j, k;
};

}  // namespace dendro
