#include "scd/errors.hpp"

namespace scd {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownColor: return "UnknownColor";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::IoError: return "IoError";
  }
  return "Error";
}

}  // namespace scd
