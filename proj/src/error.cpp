#include "iotprint/error.hpp"

namespace iotprint {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedGlobalHeader: return "MalformedGlobalHeader";
    case ErrorKind::TruncatedRecordHeader: return "TruncatedRecordHeader";
    case ErrorKind::EmptyPayload: return "EmptyPayload";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::UnknownDevice: return "UnknownDevice";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::SchemeNotSupported: return "SchemeNotSupported";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::EmptyPool: return "EmptyPool";
    case ErrorKind::BadModelMagic: return "BadModelMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

bool Error::is_usage_error() const noexcept {
  switch (kind_) {
    case ErrorKind::UnknownDevice:
    case ErrorKind::DegenerateLabels:
    case ErrorKind::SchemeNotSupported:
    case ErrorKind::InvalidArgument:
      return true;
    default:
      return false;
  }
}

}  // namespace iotprint
