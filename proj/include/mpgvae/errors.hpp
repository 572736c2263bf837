#pragma once

#include <stdexcept>
#include <string>

namespace mpgvae {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes incompatible with an operation's contract.
struct ShapeError : Error {
  using Error::Error;
};

// A documented precondition was violated by the caller.
struct ContractViolation : Error {
  using Error::Error;
};

// Softmax over a row whose entries are all masked out.
struct DegenerateRowError : Error {
  using Error::Error;
};

// SMILES text that cannot be turned into a molecular graph.
struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t offset)
      : Error(msg + " (byte " + std::to_string(offset) + ")"), byte_offset(offset) {}
  std::size_t byte_offset;
};

// More than the supported number of heavy atoms.
struct CapacityError : Error {
  using Error::Error;
};

// No kekule assignment exists for an aromatic system.
struct KekulizeError : Error {
  using Error::Error;
};

// Bad key/value in a run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Unreadable or malformed checkpoint file.
struct CheckpointError : Error {
  using Error::Error;
};

// Unreadable input file.
struct IoError : Error {
  using Error::Error;
};

}  // namespace mpgvae
