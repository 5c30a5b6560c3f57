#pragma once

#include <stdexcept>
#include <string>

namespace objscope {

// Root of every error the toolkit throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Input that is well-formed bytes but violates a dimensional or schema contract.
class FormatError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

class VersionError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

// Payload disagrees with what the header promised.
class IntegrityError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

class TruncatedError : public IntegrityError {
 public:
  using IntegrityError::IntegrityError;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace objscope
