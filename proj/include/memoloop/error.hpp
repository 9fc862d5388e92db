#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace memoloop {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data: bad corpus lines, invalid snapshots, broken invariants.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Span arithmetic violated its preconditions (out-of-range slice, offset mismatch...).
class SpanError : public Error {
 public:
  using Error::Error;
};

enum class ParseErrorKind {
  no_json_found,
  repair_failed,
  invalid_spans,
  no_selection_found,
  out_of_range,
  no_rating_found,
  rating_out_of_range,
};

inline std::string_view to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::no_json_found: return "NoJsonFound";
    case ParseErrorKind::repair_failed: return "RepairFailed";
    case ParseErrorKind::invalid_spans: return "InvalidSpans";
    case ParseErrorKind::no_selection_found: return "NoSelectionFound";
    case ParseErrorKind::out_of_range: return "OutOfRange";
    case ParseErrorKind::no_rating_found: return "NoRatingFound";
    case ParseErrorKind::rating_out_of_range: return "RatingOutOfRange";
  }
  return "Unknown";
}

/// Model output could not be turned into a domain value.
class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& detail)
      : Error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ParseErrorKind kind() const noexcept { return kind_; }

 private:
  ParseErrorKind kind_;
};

enum class BackendErrorKind { transport, api, script_exhausted, unmatched_request, config };

inline std::string_view to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::transport: return "TransportError";
    case BackendErrorKind::api: return "ApiError";
    case BackendErrorKind::script_exhausted: return "ScriptExhausted";
    case BackendErrorKind::unmatched_request: return "UnmatchedRequest";
    case BackendErrorKind::config: return "BackendConfigError";
  }
  return "Unknown";
}

class BackendError : public Error {
 public:
  BackendError(BackendErrorKind kind, const std::string& detail, int status = 0)
      : Error(std::string(to_string(kind)) + ": " + detail), kind_(kind), status_(status) {}

  BackendErrorKind kind() const noexcept { return kind_; }
  /// HTTP status for ApiError, 0 otherwise.
  int status() const noexcept { return status_; }

 private:
  BackendErrorKind kind_;
  int status_;
};

/// A prompt cannot be made to fit the token budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

/// A backend failure annotated with the loop stage that issued the call.
class StageError : public Error {
 public:
  StageError(std::string stage, const BackendError& cause)
      : Error(stage + ": " + cause.what()), stage_(std::move(stage)), cause_(cause) {}

  const std::string& stage() const noexcept { return stage_; }
  const BackendError& cause() const noexcept { return cause_; }

 private:
  std::string stage_;
  BackendError cause_;
};

}  // namespace memoloop
