#pragma once

#include <stdexcept>
#include <string>

namespace advprompt {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Prompt is empty after normalization (or an empty id sequence was given).
struct EmptyPromptError : Error {
    using Error::Error;
};

// A token index is outside [0, V).
struct InvalidTokenError : Error {
    using Error::Error;
};

// A word is not covered by the model that was queried for it.
struct UnknownWordError : Error {
    using Error::Error;
};

// Sequence length outside [1, P_max].
struct SequenceLengthError : Error {
    using Error::Error;
};

// Non-finite or degenerate (zero-norm) value in a numerical routine.
struct NumericalError : Error {
    using Error::Error;
};

// Word-substitution plan found no position with a replaceable word type.
struct NoPerturbableWordsError : Error {
    using Error::Error;
};

// Search space has no allowed tokens.
struct EmptySearchSpaceError : Error {
    using Error::Error;
};

// Augmentation pool has fewer usable words than requested.
struct PoolExhaustedError : Error {
    using Error::Error;
};

// Fewer samples available than a metric requires (e.g. K > N).
struct InsufficientSamplesError : Error {
    using Error::Error;
};

// Metric evaluated over an empty outcome list.
struct EmptyEvaluationError : Error {
    using Error::Error;
};

// Invalid configuration value or unparsable config file.
struct ConfigError : Error {
    using Error::Error;
};

// File could not be read, written, or parsed.
struct IoError : Error {
    using Error::Error;
};

} // namespace advprompt
