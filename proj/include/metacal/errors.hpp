#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace metacal {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

/// Nonzero ramp value at a segment whose mask is zero.
class MaskViolationError : public Error {
 public:
  using Error::Error;
};

/// 1 - beta underflowed the singularity guard in the conservation update.
class BetaAtUnityError : public Error {
 public:
  BetaAtUnityError(std::size_t t, std::size_t x, double beta)
      : Error("beta at segment " + std::to_string(x) + ", step " + std::to_string(t) +
              " is " + std::to_string(beta) + "; 1-beta underflows the 1e-6 guard"),
        t_step(t), segment(x) {}
  std::size_t t_step = 0;
  std::size_t segment = 0;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class LengthMismatchError : public Error {
 public:
  using Error::Error;
};

class StationOutOfCorridorError : public Error {
 public:
  using Error::Error;
};

/// A variable has no observed cells to interpolate from.
class AllMissingError : public Error {
 public:
  using Error::Error;
};

/// Every cell of a variable was missing or below the truth-magnitude guard.
class AllCellsSkippedError : public Error {
 public:
  using Error::Error;
};

class InfeasibleBoundsError : public Error {
 public:
  using Error::Error;
};

/// The rollout produced non-finite values at the solver's starting point.
class DivergedRolloutError : public Error {
 public:
  using Error::Error;
};

class BlockTooSmallError : public Error {
 public:
  using Error::Error;
};

class RampOnMaskedSegmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace metacal
