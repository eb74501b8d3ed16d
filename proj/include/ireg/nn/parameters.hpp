#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "ireg/random.hpp"

namespace ireg::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Parameter {
  std::string name;
  Matrix value;
};

/// Named, ordered parameter storage. Indices are stable once added.
class ParameterSet {
 public:
  std::size_t add(const std::string& name, Matrix init);
  /// Glorot-uniform initialisation.
  std::size_t add_glorot(const std::string& name, int rows, int cols, Rng& rng);
  std::size_t add_normal(const std::string& name, int rows, int cols, double stddev, Rng& rng);
  std::size_t add_constant(const std::string& name, int rows, int cols, double value);

  std::size_t size() const { return params_.size(); }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.contains(name); }
  std::size_t scalar_count() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> by_name_;
};

/// Gradient buffers aligned with a ParameterSet.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  Matrix& operator[](std::size_t i) { return grads_[i]; }
  const Matrix& operator[](std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void scale(double factor);
  Gradients& operator+=(const Gradients& other);
  double squared_norm() const;

 private:
  std::vector<Matrix> grads_;
};

}  // namespace ireg::nn
