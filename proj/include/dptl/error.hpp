#pragma once

#include <stdexcept>
#include <string>

namespace dptl {

//! Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Invalid argument values or shapes (dimension mismatch, h <= 0, ...).
class InputError : public Error
{
public:
  using Error::Error;
};

//! Inconsistent configuration, e.g. delta = 0 with a finite epsilon.
class ConfigError : public Error
{
public:
  using Error::Error;
};

//! Parameters outside the validity range of a closed-form result.
class ScopeError : public ConfigError
{
public:
  using ConfigError::ConfigError;
};

//! Malformed or missing data.
class DataError : public Error
{
public:
  using Error::Error;
};

//! A server holds no observations; callers are expected to drop it.
class EmptyServerError : public DataError
{
public:
  using DataError::DataError;
};

//! Numerical failure, e.g. a covariance factorization that does not succeed.
class NumericalError : public Error
{
public:
  using Error::Error;
};

namespace detail {

template<class E>
inline void require(bool cond, const std::string& msg)
{
  if (!cond)
    throw E(msg);
}

} // namespace detail

} // namespace dptl
