#ifndef TWISTDERIV_ERRORS_HPP
#define TWISTDERIV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace twistderiv {

// A caller violated a documented precondition (bad n, gcd(D, q) > 1, ...).
class precondition_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data is incomplete: a missing a_p, an eigenvalue table that is too
// short for the requested truncation, a malformed form file.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure did not reach its tolerance.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace twistderiv

#endif  // TWISTDERIV_ERRORS_HPP
