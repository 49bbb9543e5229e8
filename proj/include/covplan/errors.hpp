#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "covplan/types.hpp"

namespace covplan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A Cholesky pivot was not strictly positive. `pivot` is the failing row in
/// the factorization ordering, `original_index` the same row in the caller's
/// ordering (equal when no permutation was involved).
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(std::string what, Index pivot, Index original_index)
      : Error(std::move(what)), pivot_(pivot), original_index_(original_index) {}
  Index pivot() const noexcept { return pivot_; }
  Index original_index() const noexcept { return original_index_; }

 private:
  Index pivot_;
  Index original_index_;
};

class UnderConstrained : public Error {
 public:
  UnderConstrained(std::string what, std::vector<VariableKey> keys)
      : Error(std::move(what)), keys_(std::move(keys)) {}
  const std::vector<VariableKey>& keys() const noexcept { return keys_; }

 private:
  std::vector<VariableKey> keys_;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

/// The downdated capacitance matrix of a relinearization update is not
/// positive definite, i.e. the posterior information would not be PD.
class InconsistentDowndate : public Error {
 public:
  using Error::Error;
};

class CacheMiss : public Error {
 public:
  CacheMiss(std::string what, VariableKey key) : Error(std::move(what)), key_(key) {}
  VariableKey key() const noexcept { return key_; }

 private:
  VariableKey key_;
};

/// Malformed or inconsistent scenario configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Recovery methods disagree beyond tolerance; `what` carries the dump.
class MethodDisagreement : public Error {
 public:
  using Error::Error;
};

/// Flat and tree planners selected different candidates.
class DecisionMismatch : public Error {
 public:
  DecisionMismatch(std::string what, std::string score_table)
      : Error(std::move(what)), table_(std::move(score_table)) {}
  const std::string& score_table() const noexcept { return table_; }

 private:
  std::string table_;
};

}  // namespace covplan
