#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace meshless {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidResolution : public Error {
 public:
  using Error::Error;
};

class InvalidGeometry : public Error {
 public:
  using Error::Error;
};

class InsufficientPoints : public Error {
 public:
  using Error::Error;
};

class UnsupportedOrder : public Error {
 public:
  using Error::Error;
};

class UnknownCase : public Error {
 public:
  using Error::Error;
};

/// Local least-squares system at a target is rank deficient.
class SingularStencil : public Error {
 public:
  SingularStencil(int target, double condition, const std::string& what)
      : Error(what), target_(target), condition_(condition) {}

  int target() const noexcept { return target_; }
  double condition() const noexcept { return condition_; }

 private:
  int target_;
  double condition_;
};

/// Neumann-constrained saddle system at a boundary target is singular.
class SingularConstraint : public SingularStencil {
 public:
  using SingularStencil::SingularStencil;
};

class IncompleteAssembly : public Error {
 public:
  IncompleteAssembly(std::vector<int> targets, const std::string& what)
      : Error(what), targets_(std::move(targets)) {}

  const std::vector<int>& targets() const noexcept { return targets_; }

 private:
  std::vector<int> targets_;
};

}  // namespace meshless
