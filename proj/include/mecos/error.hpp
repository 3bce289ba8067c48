#pragma once

#include <stdexcept>
#include <string>

namespace mecos {

/// Broad failure category; the CLI maps it onto a process exit code.
enum class ErrorKind {
  usage,    // bad flags, config values, missing inputs
  data,     // malformed or insufficient data
  numeric,  // NaN/Inf, degenerate vectors, shape mismatches
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& tag, const std::string& what)
      : std::runtime_error(tag + ": " + what), kind_(kind), tag_(tag) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& tag() const noexcept { return tag_; }

 private:
  ErrorKind kind_;
  std::string tag_;
};

#define MECOS_DEFINE_ERROR(Name, Kind, Tag)                        \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(Kind, Tag, what) {} \
  };

MECOS_DEFINE_ERROR(DimensionError, ErrorKind::numeric, "dimension")
MECOS_DEFINE_ERROR(DomainError, ErrorKind::numeric, "domain")
MECOS_DEFINE_ERROR(DegenerateVectorError, ErrorKind::numeric, "degenerate-vector")
MECOS_DEFINE_ERROR(NumericError, ErrorKind::numeric, "numeric")
MECOS_DEFINE_ERROR(VocabularyError, ErrorKind::data, "vocabulary")
MECOS_DEFINE_ERROR(ParseError, ErrorKind::data, "parse")
MECOS_DEFINE_ERROR(EmptyDatasetError, ErrorKind::usage, "empty-dataset")
MECOS_DEFINE_ERROR(PartitionError, ErrorKind::data, "partition")
MECOS_DEFINE_ERROR(SplitSizeError, ErrorKind::data, "split-size")
MECOS_DEFINE_ERROR(SamplingError, ErrorKind::data, "sampling")
MECOS_DEFINE_ERROR(AggregationError, ErrorKind::numeric, "aggregation")
MECOS_DEFINE_ERROR(ConfigError, ErrorKind::usage, "config")
MECOS_DEFINE_ERROR(CheckpointError, ErrorKind::data, "checkpoint")

#undef MECOS_DEFINE_ERROR

}  // namespace mecos
