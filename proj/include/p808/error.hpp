#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace p808 {

// Base of every error the toolkit raises. Each subclass maps onto one error
// kind named by the operation contracts (invalid-argument, conflict, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define P808_DEFINE_ERROR(Name, Kind)                              \
  class Name : public Error {                                      \
   public:                                                         \
    using Error::Error;                                            \
    const char* kind() const noexcept override { return Kind; }    \
  }

P808_DEFINE_ERROR(InvalidArgument, "invalid-argument");
P808_DEFINE_ERROR(DegenerateSignal, "degenerate-signal");
P808_DEFINE_ERROR(ParseError, "parse");
P808_DEFINE_ERROR(ConsistencyError, "consistency");
P808_DEFINE_ERROR(RenderError, "render");
P808_DEFINE_ERROR(TransportError, "transport");
P808_DEFINE_ERROR(ConfigurationError, "configuration");
P808_DEFINE_ERROR(ExcludedError, "excluded");
P808_DEFINE_ERROR(NoWorkError, "no-work");
P808_DEFINE_ERROR(ConflictError, "conflict");
P808_DEFINE_ERROR(IncompleteError, "incomplete");
P808_DEFINE_ERROR(NotFoundError, "not-found");
P808_DEFINE_ERROR(UndefinedRateError, "undefined-rate");
P808_DEFINE_ERROR(IoError, "io");

#undef P808_DEFINE_ERROR

// Raised with the full list of offending keys so a single validation pass
// reports everything at once.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::vector<std::string> keys)
      : Error(what), keys_(std::move(keys)) {}
  const char* kind() const noexcept override { return "schema"; }
  const std::vector<std::string>& keys() const noexcept { return keys_; }

 private:
  std::vector<std::string> keys_;
};

class InsufficientVotesError : public Error {
 public:
  InsufficientVotesError(const std::string& what, int shortfall)
      : Error(what), shortfall_(shortfall) {}
  const char* kind() const noexcept override { return "insufficient-votes"; }
  int shortfall() const noexcept { return shortfall_; }

 private:
  int shortfall_;
};

class JoinError : public Error {
 public:
  JoinError(const std::string& what, std::vector<std::string> orphans)
      : Error(what), orphans_(std::move(orphans)) {}
  const char* kind() const noexcept override { return "join"; }
  const std::vector<std::string>& orphans() const noexcept { return orphans_; }

 private:
  std::vector<std::string> orphans_;
};

class IncompleteCampaignError : public Error {
 public:
  IncompleteCampaignError(const std::string& what,
                          std::vector<std::string> residual_pool)
      : Error(what), residual_(std::move(residual_pool)) {}
  const char* kind() const noexcept override { return "incomplete-campaign"; }
  const std::vector<std::string>& residual_pool() const noexcept {
    return residual_;
  }

 private:
  std::vector<std::string> residual_;
};

}  // namespace p808
