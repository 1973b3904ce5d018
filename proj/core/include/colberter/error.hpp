#pragma once

#include <stdexcept>
#include <string>

namespace colberter {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A persisted file (embeddings, heads, index) is malformed, truncated or
/// fails its checksum.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// The request is not supported by how an index was built, e.g. sparse
/// retrieval against a build without exact matching.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace colberter
