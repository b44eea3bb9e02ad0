#pragma once

#include <gtest/gtest.h>

#include "bohm/error.hpp"

namespace bohm::testing {

/// Error code raised by f, or a test failure if it returns normally.
inline Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected bohm::Error";
  return Errc::invalid_argument;
}

}  // namespace bohm::testing
