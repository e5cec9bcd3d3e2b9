#ifndef ECGI_ERRORS_HPP
#define ECGI_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ecgi {

// Bad user input: config fields out of range, malformed documents, missing files.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Mesh/geometry mismatch: points outside domains, boundary cycles broken.
class GeometryError : public ValidationError {
public:
    explicit GeometryError(const std::string& msg) : ValidationError(msg) {}
};

// Degenerate elements or inconsistent operators during FEM assembly.
class AssemblyError : public ValidationError {
public:
    explicit AssemblyError(const std::string& msg) : ValidationError(msg) {}
};

// Linear algebra failures: singular systems, factorization breakdown.
class NumericsError : public std::runtime_error {
public:
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

// Time integration blew up.
class StabilityError : public NumericsError {
public:
    explicit StabilityError(const std::string& msg) : NumericsError(msg) {}
};

// A metric has no value on the given inputs (zero norm or variance).
class UndefinedMetricError : public NumericsError {
public:
    explicit UndefinedMetricError(const std::string& msg) : NumericsError(msg) {}
};

} // namespace ecgi

#endif
