#ifndef REVRANK_ERRORS_HPP_
#define REVRANK_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace revrank {

/*! \brief Base class for all library errors. */
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/*! \brief Malformed input file (bad header, bad number, bad JSON). Messages carry file:line. */
class ParseError : public Error {
 public:
  using Error::Error;
};

/*! \brief A value or configuration violates a documented invariant. */
class ValidationError : public Error {
 public:
  using Error::Error;
};

/*!
 * \brief The requested metric is undefined on this input, e.g. all revenue
 *        labels equal (zero normalizer) or single-class labels for AUC.
 */
class DegenerateMetricError : public Error {
 public:
  using Error::Error;
};

/*! \brief File could not be opened, read or written. */
class IoError : public Error {
 public:
  using Error::Error;
};

/*! \brief An optimizer produced a non-finite parameter, gradient or objective. */
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace revrank

#endif  // REVRANK_ERRORS_HPP_
