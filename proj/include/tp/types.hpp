#ifndef TP_TYPES_HPP
#define TP_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace tp {

using Scalar = double;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

template <class S> using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S> using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Raised when an argument falls outside a map's or distribution's domain.
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a numerical procedure fails (factorization, quadrature, MCMC).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Raised on invalid configuration or composition.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Raised on malformed input files.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tp

#endif
