#pragma once

#include <stdexcept>
#include <string>

namespace mose {

enum class Errc {
  invalid_argument,
  shape_mismatch,
  protocol_violation,
  state_error,
  label_outside_subset,
  batch_too_small,
  empty_buffer,
  no_means,
  invalid_mode,
  incomplete_matrix,
  undefined_at_zero,
  io,
  format,
  config_parse,
  validation,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace mose
