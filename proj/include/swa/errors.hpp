#pragma once

#include <stdexcept>
#include <string>

namespace swa {

// Shape or dimension mismatch between operands.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A softmax row whose entries are all masked; callers must guarantee at
// least one visible key per query.
struct DegenerateRowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Out-of-order request against a stateful decode session.
struct SequencingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (e.g. sigma below floor).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Corrupted or mismatched bitstream / file contents.
struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace swa
