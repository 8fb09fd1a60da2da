#ifndef BIOTUNE_ERRORS_HPP
#define BIOTUNE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace biotune {

    class Error : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Model shape is unusable (zero blocks, zero parameters, mismatched lengths).
    class InvalidModelError : public Error {
    public:
        using Error::Error;
    };

    /// Normalized weights requested on a genome whose best block gene does not exceed the threshold.
    class DegenerateWeightsError : public Error {
    public:
        using Error::Error;
    };

    /// Operator called with individuals of different genome length.
    class InvalidPairingError : public Error {
    public:
        using Error::Error;
    };

    /// A single fitness evaluation failed. Search loops map this to the worst fitness.
    class EvaluationError : public Error {
    public:
        using Error::Error;
    };

    /// Every evaluation of a generation failed.
    class AbortedRunError : public Error {
    public:
        using Error::Error;
    };

    /// Training produced a non-finite loss.
    class DivergenceError : public EvaluationError {
    public:
        using EvaluationError::EvaluationError;
    };

    class ConfigError : public Error {
    public:
        using Error::Error;
    };

    class UsageError : public Error {
    public:
        using Error::Error;
    };

    /// External evaluator could not be started, failed the handshake or went away.
    class SessionError : public Error {
    public:
        using Error::Error;
    };

    /// External evaluator sent something that is not a valid protocol message.
    class ProtocolError : public SessionError {
    public:
        using SessionError::SessionError;
    };

} // namespace biotune

#endif
