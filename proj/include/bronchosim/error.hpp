#pragma once

#include <stdexcept>
#include <string>

namespace bronchosim {

/// Base of every error thrown by the library. `exit_code()` follows the CLI
/// convention: 2 for invalid inputs or geometry, 3 for filesystem failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 2; }
};

#define BRONCHOSIM_DEFINE_ERROR(Name)   \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  };

BRONCHOSIM_DEFINE_ERROR(ParameterError)
BRONCHOSIM_DEFINE_ERROR(DomainError)
BRONCHOSIM_DEFINE_ERROR(InputError)
BRONCHOSIM_DEFINE_ERROR(FormatError)
BRONCHOSIM_DEFINE_ERROR(IngestionError)
BRONCHOSIM_DEFINE_ERROR(AlignmentError)
BRONCHOSIM_DEFINE_ERROR(AggregationError)
BRONCHOSIM_DEFINE_ERROR(RouteError)
BRONCHOSIM_DEFINE_ERROR(PlacementError)
BRONCHOSIM_DEFINE_ERROR(AcceleratorError)

#undef BRONCHOSIM_DEFINE_ERROR

/// Sampling could not satisfy the geometric constraints for one segment.
class GenerationError : public Error {
 public:
  GenerationError(int segment_id, const std::string& what)
      : Error("segment " + std::to_string(segment_id) + ": " + what), segment_id_(segment_id) {}
  int segment_id() const { return segment_id_; }

 private:
  int segment_id_;
};

class TessellationError : public Error {
 public:
  TessellationError(int segment_id, const std::string& what)
      : Error("tessellation of segment " + std::to_string(segment_id) + ": " + what),
        segment_id_(segment_id) {}
  int segment_id() const { return segment_id_; }

 private:
  int segment_id_;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }
  int exit_code() const override { return 3; }

 private:
  std::string path_;
};

}  // namespace bronchosim
