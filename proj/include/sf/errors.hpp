// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <stdexcept>
#include <string>

namespace sf {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A blocking wait exceeded its deadline or the run was aborted by the
/// harness watchdog. Collective mismatches surface as this.
class TimeoutError : public Error {
public:
  using Error::Error;
};

namespace detail {
[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }
} // namespace detail

} // namespace sf

#define SF_REQUIRE(cond, msg)                                                  \
  do {                                                                         \
    if (!(cond)) ::sf::detail::fail(msg);                                      \
  } while (0)
