#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace occpose {

// Broad failure classes; the CLI maps these onto exit codes.
enum class ErrorKind { Usage, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class NonPositiveDepth : public Error {
 public:
  explicit NonPositiveDepth(std::size_t joint)
      : Error(ErrorKind::Data, "non-positive depth at joint " + std::to_string(joint)),
        joint_index(joint) {}
  std::size_t joint_index;
};

class DegenerateSegment : public Error {
 public:
  explicit DegenerateSegment(const std::string& segment)
      : Error(ErrorKind::Data, "degenerate segment: " + segment), segment_name(segment) {}
  std::string segment_name;
};

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what)
      : Error(ErrorKind::Numerical, "shape mismatch: " + what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::Usage, "config error: " + what) {}
};

class NonFiniteGradient : public Error {
 public:
  explicit NonFiniteGradient(const std::string& name)
      : Error(ErrorKind::Numerical, "non-finite gradient in " + name), param_name(name) {}
  std::string param_name;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line_no, const std::string& reason)
      : Error(ErrorKind::Data,
              "parse error at line " + std::to_string(line_no) + ": " + reason),
        line(line_no) {}
  std::size_t line;
};

class TopologyMismatch : public Error {
 public:
  explicit TopologyMismatch(const std::string& what)
      : Error(ErrorKind::Data, "topology mismatch: " + what) {}
};

class NoVisibleJoints : public Error {
 public:
  NoVisibleJoints() : Error(ErrorKind::Data, "no visible joints to crop around") {}
};

class EmptyEvaluation : public Error {
 public:
  EmptyEvaluation() : Error(ErrorKind::Data, "no frames to evaluate") {}
};

class SequenceTooShort : public Error {
 public:
  SequenceTooShort(std::size_t length, std::size_t needed)
      : Error(ErrorKind::Data, "sequence of " + std::to_string(length) +
                                   " frames is shorter than receptive field " +
                                   std::to_string(needed)) {}
};

}  // namespace occpose
