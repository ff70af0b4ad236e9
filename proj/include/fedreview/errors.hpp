#pragma once

#include <stdexcept>
#include <string>

namespace fedreview {

enum class ErrorKind {
  dimension,
  numeric,
  range,
  input,
  config,
  data,
  capacity,
  format,
  io,
  state,
  accounting,
  degenerate,
  training,
  aggregation,
  protocol,
  transport,
};

// Base of every error raised by the library. `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define FEDREVIEW_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

FEDREVIEW_DEFINE_ERROR(DimensionError, dimension)
FEDREVIEW_DEFINE_ERROR(NumericError, numeric)
FEDREVIEW_DEFINE_ERROR(RangeError, range)
FEDREVIEW_DEFINE_ERROR(InputError, input)
FEDREVIEW_DEFINE_ERROR(ConfigError, config)
FEDREVIEW_DEFINE_ERROR(DataError, data)
FEDREVIEW_DEFINE_ERROR(CapacityError, capacity)
FEDREVIEW_DEFINE_ERROR(FormatError, format)
FEDREVIEW_DEFINE_ERROR(IoError, io)
FEDREVIEW_DEFINE_ERROR(StateError, state)
FEDREVIEW_DEFINE_ERROR(AccountingError, accounting)
FEDREVIEW_DEFINE_ERROR(DegenerateError, degenerate)
FEDREVIEW_DEFINE_ERROR(TrainingError, training)
FEDREVIEW_DEFINE_ERROR(AggregationError, aggregation)
FEDREVIEW_DEFINE_ERROR(ProtocolError, protocol)
FEDREVIEW_DEFINE_ERROR(TransportError, transport)

#undef FEDREVIEW_DEFINE_ERROR

// Process exit code for an error kind: 1 config, 2 data, 3 training, 4 transport.
inline int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config:
      return 1;
    case ErrorKind::data:
    case ErrorKind::capacity:
    case ErrorKind::format:
    case ErrorKind::io:
    case ErrorKind::state:
      return 2;
    case ErrorKind::protocol:
    case ErrorKind::transport:
      return 4;
    default:
      return 3;
  }
}

}  // namespace fedreview
