// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace minigpt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatches between matrices, vectors and token matrices.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an operation (empty vector, empty context, NaN).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters or structural configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Index outside a valid range, e.g. a token id >= n_vocab.
class RangeError : public Error {
 public:
  using Error::Error;
};

class TokenizationError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent model / vocabulary file.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace minigpt
