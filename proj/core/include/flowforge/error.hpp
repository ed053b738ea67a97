// Copyright 2026 The flowforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace flowforge {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (bad hyper-parameter, unknown key).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument outside the operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// File-system or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowforge
