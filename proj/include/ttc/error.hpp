#pragma once

#include <stdexcept>
#include <string>

namespace ttc {

enum class ErrorKind {
  Config,      // invalid dimensions or hyper-parameters
  EmptyGroup,  // empty response list / variant group
  Vocabulary,  // unknown token id or string
  Shape,       // dimension mismatch
  Numeric,     // non-finite values
  Degenerate,  // empty pseudo-label target, K too small for a pairwise quantity
  Contract,    // stale decodings, broken internal invariant
  Parse,       // malformed dataset / report file
  Io,
  Usage,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace ttc
