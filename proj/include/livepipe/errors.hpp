#pragma once

#include <stdexcept>
#include <string>

namespace livepipe {

// Bad user input: config values, CLI flags, file contents.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A runtime invariant of the engines was broken (timestep forcing, FIFO
// ordering, cache capacity, double AAS update, ...).
class InvariantError : public std::logic_error {
 public:
  explicit InvariantError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace livepipe
