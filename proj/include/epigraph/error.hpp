#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace epigraph {

enum class ErrorCode {
  kInvalidInput,
  kInvalidRotation,
  kDegenerateGeometry,
  kInsufficientCorrespondences,
  kDegenerateConfiguration,
  kInvalidEssential,
  kAmbiguousCheirality,
  kUnprojectableScene,
  kEmptySampling,
  kParse,
  kValidation,
  kEmptyGraph,
  kShape,
  kState,
  kSchema,
  kDataset,
  kConfig,
  kIo,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised when two or more decomposition candidates share the best
// positive-depth count.
class AmbiguousCheiralityError : public Error {
 public:
  AmbiguousCheiralityError(std::vector<int> tied, int count)
      : Error(ErrorCode::kAmbiguousCheirality,
              "ambiguous cheirality: " + std::to_string(tied.size()) +
                  " candidates tied at " + std::to_string(count) +
                  " positive-depth points"),
        tied_(std::move(tied)),
        count_(count) {}

  const std::vector<int>& tied() const noexcept { return tied_; }
  int count() const noexcept { return count_; }

 private:
  std::vector<int> tied_;
  int count_;
};

}  // namespace epigraph
