#pragma once

#include <stdexcept>
#include <string>

namespace seqbal {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed textual input (pattern strings, graph or config files).
class ParseError : public Error {
 public:
  using Error::Error;
};

// File-level ingestion failure (CSV layout, unreadable file).
class LoadError : public Error {
 public:
  using Error::Error;
};

// Unknown node, column or key.
class LookupError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Estimation could not be carried out on the given data.
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqbal
