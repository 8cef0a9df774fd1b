#pragma once

#include <stdexcept>
#include <string>

namespace kneeloc {

// Coarse error classes. The CLI maps them onto exit codes.
enum class ErrorKind {
  kUsage,      // bad arguments or configuration
  kIo,         // missing or unreadable files
  kDegenerate, // input that cannot be processed meaningfully
  kNumerical,  // non-finite values, failed optimization
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

// A pose on or outside the constraint box has no unconstrained preimage.
struct BoundaryPose : Error {
  explicit BoundaryPose(const std::string& what) : Error(ErrorKind::kDegenerate, what) {}
};

struct DegenerateInput : Error {
  explicit DegenerateInput(const std::string& what) : Error(ErrorKind::kDegenerate, what) {}
};

struct ImageTooSmall : Error {
  explicit ImageTooSmall(const std::string& what) : Error(ErrorKind::kDegenerate, what) {}
};

struct TemplateTooLarge : Error {
  explicit TemplateTooLarge(const std::string& what) : Error(ErrorKind::kDegenerate, what) {}
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

struct StaleCache : Error {
  explicit StaleCache(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

struct NonFiniteLoss : Error {
  explicit NonFiniteLoss(const std::string& what) : Error(ErrorKind::kNumerical, what) {}
};

}  // namespace kneeloc
