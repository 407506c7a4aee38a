#pragma once

#include <stdexcept>
#include <string>

namespace cardio {

// Every failure raised by the library derives from Error. The CLI maps
// InvalidInput-family errors to exit code 2 and NumericalDivergence to 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class UnsupportedFormat : public Error {
public:
    using Error::Error;
};

class TruncatedFile : public Error {
public:
    using Error::Error;
};

class CannotAggregate : public Error {
public:
    using Error::Error;
};

class NumericalDivergence : public Error {
public:
    using Error::Error;
};

class NoMotionDetected : public Error {
public:
    using Error::Error;
};

class DegenerateLabels : public Error {
public:
    using Error::Error;
};

class UnsupportedVersion : public Error {
public:
    using Error::Error;
};

class CorruptModel : public Error {
public:
    using Error::Error;
};

}  // namespace cardio
