#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bohm {

enum class Errc {
  invalid_argument,
  width_under_resolved,
  out_of_bounds,
  grid_mismatch,
  zero_vector,
  stability_violation,
  nan_detected,
  node_proximity,
  singular_point,
  not_hermitian,
  orthogonal_postselection,
  pointer_grid_too_narrow,
  resolution,
  quality,
  config,
};

inline std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::width_under_resolved: return "width-under-resolved";
    case Errc::out_of_bounds: return "out-of-bounds";
    case Errc::grid_mismatch: return "grid-mismatch";
    case Errc::zero_vector: return "zero-vector";
    case Errc::stability_violation: return "stability-violation";
    case Errc::nan_detected: return "nan-detected";
    case Errc::node_proximity: return "node-proximity";
    case Errc::singular_point: return "singular-point-proximity";
    case Errc::not_hermitian: return "not-hermitian";
    case Errc::orthogonal_postselection: return "orthogonal-postselection";
    case Errc::pointer_grid_too_narrow: return "pointer-grid-too-narrow";
    case Errc::resolution: return "resolution";
    case Errc::quality: return "quality";
    case Errc::config: return "config";
  }
  return "unknown";
}

/// All library failures are reported through this type; `code()` is stable,
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace bohm
