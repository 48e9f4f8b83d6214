#ifndef RMLHMM_ERRORS_HPP_INCLUDED
#define RMLHMM_ERRORS_HPP_INCLUDED

#include <stdexcept>
#include <string>

namespace rmlhmm
{
/// Malformed model, box, schedule or configuration. Maps to CLI exit status 2.
class ValidationError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// A parameter vector outside the domain of its parameterization.
class DomainError : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

/// The filter normalizer eᵀR(y)u fell below the underflow floor. Maps to CLI exit status 3.
class DegeneracyError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace rmlhmm

#endif // RMLHMM_ERRORS_HPP_INCLUDED
