#pragma once

#include <stdexcept>

namespace sonogrid {

/// Malformed input: bad block, bad path, bad body, bad config.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AuthError : public std::runtime_error {
 public:
  AuthError() : std::runtime_error("unauthorized") {}
};

}  // namespace sonogrid
