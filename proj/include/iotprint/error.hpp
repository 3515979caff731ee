#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iotprint {

enum class ErrorKind {
  MalformedGlobalHeader,
  TruncatedRecordHeader,
  EmptyPayload,
  IoFailure,
  BadMagic,
  DimensionMismatch,
  CountMismatch,
  EmptyCorpus,
  UnknownDevice,
  DegenerateLabels,
  SchemeNotSupported,
  ShapeMismatch,
  EmptyTrainingSet,
  LabelOutOfRange,
  EmptyPool,
  BadModelMagic,
  VersionMismatch,
  ManifestMismatch,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the
/// CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

  /// True for errors caused by how the tool was invoked rather than by the
  /// content of the files it read.
  bool is_usage_error() const noexcept;

 private:
  ErrorKind kind_;
};

}  // namespace iotprint
