#pragma once

#include <stdexcept>
#include <string>

namespace rfat {

/// Invalid argument or out-of-range parameter.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Training diverged or produced an unusable model.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operation invoked on an object that is not ready for it (e.g. an untrained policy).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Gaussian-process fit failed (kernel matrix not factorizable).
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or invalid artifact on disk.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rfat
