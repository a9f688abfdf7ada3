#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shardline {

struct PoolTimeoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PoolClosedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotFoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DuplicateKeyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnmappedIdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownQueueError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StorageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DirtyDataDirError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingProfileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OverloadedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Configuration problems carry the JSON path of the offending field.
struct ConfigError : std::runtime_error {
  ConfigError(std::string field_path, const std::string& message)
      : std::runtime_error(field_path + ": " + message), field(std::move(field_path)) {}
  std::string field;
};

struct AbortedRunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScenarioMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MetricsParseError : std::runtime_error {
  MetricsParseError(std::size_t line_number, const std::string& message)
      : std::runtime_error("line " + std::to_string(line_number) + ": " + message),
        line(line_number) {}
  std::size_t line;
};

}  // namespace shardline
