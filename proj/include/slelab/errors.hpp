#pragma once

#include <stdexcept>

namespace slelab {

// Point on (or numerically too close to) an open slit.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// An inverse map would leave the closed upper half-plane.
class BranchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Zipper met a point that maps onto or below the real axis.
class ZipperError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Ordering / positivity of ensemble quantities violated.
class InvariantError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace slelab
