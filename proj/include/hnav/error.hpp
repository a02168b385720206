#pragma once

#include <stdexcept>
#include <string>

namespace hnav {

// Base of every error raised by the library. `code()` is the stable name used
// on the wire and in CSV failure columns.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define HNAV_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what = #Name) : Error(#Name, what) {} \
    }

HNAV_DEFINE_ERROR(InvalidTrajectory);
HNAV_DEFINE_ERROR(AlignmentError);
HNAV_DEFINE_ERROR(NoPath);
HNAV_DEFINE_ERROR(InvalidEndpoint);
HNAV_DEFINE_ERROR(NoEvidence);
HNAV_DEFINE_ERROR(NonpositiveWeight);
HNAV_DEFINE_ERROR(MissingBandwidth);
HNAV_DEFINE_ERROR(EmptyDistribution);
HNAV_DEFINE_ERROR(InstanceTooLarge);
HNAV_DEFINE_ERROR(TooShort);
HNAV_DEFINE_ERROR(InvariantViolation);
HNAV_DEFINE_ERROR(UnknownSession);
HNAV_DEFINE_ERROR(OutOfBounds);
HNAV_DEFINE_ERROR(EmptySet);

#undef HNAV_DEFINE_ERROR

// Schema errors carry the JSON path of the offending field.
class SchemaError : public Error {
public:
    SchemaError(std::string path, const std::string& what)
        : Error("SchemaError", path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace hnav
