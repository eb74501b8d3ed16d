#include "ireg/nn/parameters.hpp"

#include <cmath>
#include <stdexcept>

namespace ireg::nn {

std::size_t ParameterSet::add(const std::string& name, Matrix init) {
  if (by_name_.contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
  params_.push_back({name, std::move(init)});
  by_name_.emplace(name, params_.size() - 1);
  return params_.size() - 1;
}

std::size_t ParameterSet::add_glorot(const std::string& name, int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
  return add(name, std::move(m));
}

std::size_t ParameterSet::add_normal(const std::string& name, int rows, int cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return add(name, std::move(m));
}

std::size_t ParameterSet::add_constant(const std::string& name, int rows, int cols, double value) {
  return add(name, Matrix::Constant(rows, cols, value));
}

std::size_t ParameterSet::index(const std::string& name) const {
  const auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Gradients::Gradients(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (const auto& p : params) grads_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
}

void Gradients::zero() {
  for (auto& g : grads_) g.setZero();
}

void Gradients::scale(double factor) {
  for (auto& g : grads_) g *= factor;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.grads_.size() != grads_.size()) throw std::invalid_argument("gradient sets differ in size");
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
  return *this;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& g : grads_) s += g.squaredNorm();
  return s;
}

}  // namespace ireg::nn
