#pragma once

#include <stdexcept>
#include <string>

namespace reprocs {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class BadRank : public Error {
 public:
  using Error::Error;
};

class IllConditioned : public Error {
 public:
  IllConditioned(const std::string& what, double min_eig) : Error(what), min_eig(min_eig) {}
  double min_eig;
};

// Iterative solvers throw this with their last iterate count and residual.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, int iterations, double residual)
      : Error(what), iterations(iterations), residual(residual) {}
  int iterations;
  double residual;
};

class BadGeometry : public Error {
 public:
  using Error::Error;
};

class DegenerateComplement : public Error {
 public:
  using Error::Error;
};

class MissingHistory : public Error {
 public:
  using Error::Error;
};

class Misalignment : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace reprocs
