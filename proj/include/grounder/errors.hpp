#pragma once

#include <stdexcept>
#include <string>

namespace grounder {

/// Missing or unreadable input on disk. The message names the offending path.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input parsed but violates a domain invariant (non-rigid pose, bad intrinsics, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transport-level failure talking to a remote backend (VLM, detector, segmenter).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A backend answered, but the answer could not be parsed even after a re-ask.
class ResponseFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SegmentationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProjectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unrecoverable pipeline failure, distinct from a scored grounding failure.
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace grounder
