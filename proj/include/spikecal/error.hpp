#pragma once

#include <stdexcept>
#include <string>

namespace spikecal {

enum class ErrorKind {
    Format,      // malformed file contents
    Validation,  // structurally inconsistent network or tensor
    Parameter,   // bad argument to an operation
    Io,
    Training,    // divergence during train_tiny
    Infeasible,  // budget below the minimum achievable
    Size,        // instance too large for exhaustive search
    Config,
    Data,
    Numeric,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct FormatError : Error {
    explicit FormatError(const std::string& w) : Error(ErrorKind::Format, w) {}
};
struct ValidationError : Error {
    explicit ValidationError(const std::string& w) : Error(ErrorKind::Validation, w) {}
};
struct ParameterError : Error {
    explicit ParameterError(const std::string& w) : Error(ErrorKind::Parameter, w) {}
};
struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};
struct TrainingError : Error {
    TrainingError(const std::string& w, std::size_t epoch) : Error(ErrorKind::Training, w), epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};
struct InfeasibleBudget : Error {
    InfeasibleBudget(const std::string& w, double min_achievable)
        : Error(ErrorKind::Infeasible, w), min_achievable_(min_achievable) {}
    double min_achievable() const noexcept { return min_achievable_; }

private:
    double min_achievable_;
};
struct SizeError : Error {
    explicit SizeError(const std::string& w) : Error(ErrorKind::Size, w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct DataError : Error {
    explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};

}  // namespace spikecal
