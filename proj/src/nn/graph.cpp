#include "ireg/nn/graph.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ireg::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("graph: ") + what);
}

}  // namespace

Graph::Graph(const ParameterSet& params, bool requires_grad)
    : params_(&params), requires_grad_(requires_grad), param_nodes_(params.size(), -1) {
  nodes_.reserve(256);
}

Var Graph::push(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Graph::val(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.value;
}

const Matrix& Graph::value(Var v) const {
  require(v.id >= 0 && static_cast<std::size_t>(v.id) < nodes_.size(), "invalid variable");
  return val(v.id);
}

Matrix& Graph::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Matrix& v = n.external ? *n.external : n.value;
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Graph::record(Var out, std::function<void()> adjoint) {
  if (requires_grad_) nodes_[static_cast<std::size_t>(out.id)].adjoint = std::move(adjoint);
}

Var Graph::param(std::size_t index) {
  require(index < params_->size(), "parameter index out of range");
  int& cached = param_nodes_[index];
  if (cached >= 0) return {cached};
  Node n;
  n.external = &(*params_)[index].value;
  n.param_index = static_cast<int>(index);
  nodes_.push_back(std::move(n));
  cached = static_cast<int>(nodes_.size()) - 1;
  return {cached};
}

Var Graph::constant(Matrix value) { return push(std::move(value)); }

Var Graph::matmul(Var a, Var b) {
  require(val(a.id).cols() == val(b.id).rows(), "matmul shape mismatch");
  Var out = push(val(a.id) * val(b.id));
  record(out, [this, a, b, out] {
    const Matrix& g = nodes_[static_cast<std::size_t>(out.id)].grad;
    grad(a.id).noalias() += g * val(b.id).transpose();
    grad(b.id).noalias() += val(a.id).transpose() * g;
  });
  return out;
}

Var Graph::add(Var a, Var b) {
  require(val(a.id).rows() == val(b.id).rows() && val(a.id).cols() == val(b.id).cols(), "add shape mismatch");
  Var out = push(val(a.id) + val(b.id));
  record(out, [this, a, b, out] {
    const Matrix& g = nodes_[static_cast<std::size_t>(out.id)].grad;
    grad(a.id) += g;
    grad(b.id) += g;
  });
  return out;
}

Var Graph::sub(Var a, Var b) {
  require(val(a.id).rows() == val(b.id).rows() && val(a.id).cols() == val(b.id).cols(), "sub shape mismatch");
  Var out = push(val(a.id) - val(b.id));
  record(out, [this, a, b, out] {
    const Matrix& g = nodes_[static_cast<std::size_t>(out.id)].grad;
    grad(a.id) += g;
    grad(b.id) -= g;
  });
  return out;
}

Var Graph::add_row(Var a, Var row) {
  require(val(row.id).rows() == 1 && val(row.id).cols() == val(a.id).cols(), "add_row shape mismatch");
  Matrix v = val(a.id);
  v.rowwise() += val(row.id).row(0);
  Var out = push(std::move(v));
  record(out, [this, a, row, out] {
    const Matrix& g = nodes_[static_cast<std::size_t>(out.id)].grad;
    grad(a.id) += g;
    grad(row.id) += g.colwise().sum();
  });
  return out;
}

Var Graph::scale(Var a, double factor) {
  Var out = push(val(a.id) * factor);
  record(out, [this, a, out, factor] { grad(a.id) += nodes_[static_cast<std::size_t>(out.id)].grad * factor; });
  return out;
}

Var Graph::relu(Var a) {
  Var out = push(val(a.id).cwiseMax(0.0));
  record(out, [this, a, out] {
    const Matrix& g = nodes_[static_cast<std::size_t>(out.id)].grad;
    grad(a.id) += (val(a.id).array() > 0.0).select(g, 0.0);
  });
  return out;
}

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = val(x.id);
  const Eigen::Index n = xv.cols();
  require(val(gain.id).rows() == 1 && val(gain.id).cols() == n, "layer_norm gain shape");
  require(val(bias.id).rows() == 1 && val(bias.id).cols() == n, "layer_norm bias shape");
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd rstd(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * rstd(r);
  }
  Matrix y = xhat;
  y.array().rowwise() *= val(gain.id).row(0).array();
  y.rowwise() += val(bias.id).row(0);
  Var out = push(std::move(y));
  record(out, [this, x, gain, bias, out, xhat = std::move(xhat), rstd = std::move(rstd)] {
    const Matrix& g = nodes_[static_cast<std::size_t>(out.id)].grad;
    grad(gain.id) += (g.array() * xhat.array()).colwise().sum().matrix();
    grad(bias.id) += g.colwise().sum();
    Matrix dxhat = g;
    dxhat.array().rowwise() *= val(gain.id).row(0).array();
    Matrix& gx = grad(x.id);
    for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
      const double m1 = dxhat.row(r).mean();
      const double m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(dxhat.cols());
      gx.row(r).array() += rstd(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
    }
  });
  return out;
}

Var Graph::attention(Var q, Var k, Var v, const Matrix& mask_bias, int heads) {
  const Matrix& qv = val(q.id);
  const Matrix& kv = val(k.id);
  const Matrix& vv = val(v.id);
  require(qv.cols() == kv.cols() && kv.cols() == vv.cols(), "attention width mismatch");
  require(kv.rows() == vv.rows(), "attention key/value length mismatch");
  require(mask_bias.rows() == qv.rows() && mask_bias.cols() == kv.rows(), "attention mask shape");
  require(heads > 0 && qv.cols() % heads == 0, "attention heads must divide width");
  const Eigen::Index dh = qv.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Matrix o(qv.rows(), qv.cols());
  for (int h = 0; h < heads; ++h) {
    const auto qh = qv.middleCols(h * dh, dh);
    const auto kh = kv.middleCols(h * dh, dh);
    Matrix s = (qh * kh.transpose()) * inv_sqrt + mask_bias;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const double mx = s.row(r).maxCoeff();
      require(std::isfinite(mx), "attention row fully masked");
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    o.middleCols(h * dh, dh).noalias() = s * vv.middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  Var out = push(std::move(o));
  record(out, [this, q, k, v, out, heads, dh, inv_sqrt, probs = std::move(probs)] {
    const Matrix& g = nodes_[static_cast<std::size_t>(out.id)].grad;
    Matrix& gq = grad(q.id);
    Matrix& gk = grad(k.id);
    Matrix& gv = grad(v.id);
    const Matrix& qv2 = val(q.id);
    const Matrix& kv2 = val(k.id);
    const Matrix& vv2 = val(v.id);
    for (int h = 0; h < heads; ++h) {
      const Matrix& p = probs[static_cast<std::size_t>(h)];
      const auto gh = g.middleCols(h * dh, dh);
      gv.middleCols(h * dh, dh).noalias() += p.transpose() * gh;
      Matrix dp = gh * vv2.middleCols(h * dh, dh).transpose();
      Matrix ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
      gq.middleCols(h * dh, dh).noalias() += (ds * kv2.middleCols(h * dh, dh)) * inv_sqrt;
      gk.middleCols(h * dh, dh).noalias() += (ds.transpose() * qv2.middleCols(h * dh, dh)) * inv_sqrt;
    }
  });
  return out;
}

Var Graph::gather_rows(Var table, std::span<const int> rows) {
  const Matrix& t = val(table.id);
  Matrix o(static_cast<Eigen::Index>(rows.size()), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < t.rows(), "gather_rows index out of range");
    o.row(static_cast<Eigen::Index>(i)) = t.row(rows[i]);
  }
  Var out = push(std::move(o));
  record(out, [this, table, out, idx = std::vector<int>(rows.begin(), rows.end())] {
    const Matrix& g = nodes_[static_cast<std::size_t>(out.id)].grad;
    Matrix& gt = grad(table.id);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
  return out;
}

Var Graph::concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows needs at least one part");
  const Eigen::Index cols = val(parts[0].id).cols();
  Eigen::Index rows = 0;
  for (Var p : parts) {
    require(val(p.id).cols() == cols, "concat_rows width mismatch");
    rows += val(p.id).rows();
  }
  Matrix o(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    o.middleRows(at, val(p.id).rows()) = val(p.id);
    at += val(p.id).rows();
  }
  Var out = push(std::move(o));
  record(out, [this, out, ps = std::vector<Var>(parts.begin(), parts.end())] {
    const Matrix& g = nodes_[static_cast<std::size_t>(out.id)].grad;
    Eigen::Index offset = 0;
    for (Var p : ps) {
      const Eigen::Index r = val(p.id).rows();
      grad(p.id) += g.middleRows(offset, r);
      offset += r;
    }
  });
  return out;
}

Var Graph::slice_rows(Var a, int begin, int count) {
  require(begin >= 0 && count > 0 && begin + count <= val(a.id).rows(), "slice_rows out of range");
  Var out = push(val(a.id).middleRows(begin, count));
  record(out, [this, a, out, begin, count] {
    grad(a.id).middleRows(begin, count) += nodes_[static_cast<std::size_t>(out.id)].grad;
  });
  return out;
}

Var Graph::log_prob_sum(Var logits, std::span<const int> targets) {
  const Matrix& z = val(logits.id);
  require(static_cast<Eigen::Index>(targets.size()) == z.rows(), "log_prob_sum target count");
  Matrix p(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    require(t >= 0 && t < z.cols(), "log_prob_sum target out of range");
    const double mx = z.row(r).maxCoeff();
    p.row(r) = (z.row(r).array() - mx).exp();
    const double denom = p.row(r).sum();
    p.row(r) /= denom;
    total += z(r, t) - mx - std::log(denom);
  }
  Var out = push(Matrix::Constant(1, 1, total));
  record(out, [this, logits, out, p = std::move(p), tg = std::vector<int>(targets.begin(), targets.end())] {
    const double g = nodes_[static_cast<std::size_t>(out.id)].grad(0, 0);
    Matrix& gz = grad(logits.id);
    gz -= g * p;
    for (std::size_t r = 0; r < tg.size(); ++r) gz(static_cast<Eigen::Index>(r), tg[r]) += g;
  });
  return out;
}

Var Graph::transpose(Var a) {
  Var out = push(val(a.id).transpose());
  record(out, [this, a, out] { grad(a.id) += nodes_[static_cast<std::size_t>(out.id)].grad.transpose(); });
  return out;
}

Var Graph::sum(Var a) {
  Var out = push(Matrix::Constant(1, 1, val(a.id).sum()));
  record(out, [this, a, out] { grad(a.id).array() += nodes_[static_cast<std::size_t>(out.id)].grad(0, 0); });
  return out;
}

Var Graph::mean_rows(Var a) {
  const double n = static_cast<double>(val(a.id).rows());
  Var out = push(val(a.id).colwise().mean());
  record(out, [this, a, out, n] {
    grad(a.id).rowwise() += nodes_[static_cast<std::size_t>(out.id)].grad.row(0) / n;
  });
  return out;
}

void Graph::backward(Var loss, Gradients& out) {
  require(requires_grad_, "backward on a no-grad graph");
  require(val(loss.id).size() == 1, "backward needs a scalar loss");
  require(out.size() == params_->size(), "gradient buffer does not match parameters");
  grad(loss.id)(0, 0) += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.adjoint && n.grad.size() != 0) n.adjoint();
  }
  for (std::size_t i = 0; i < param_nodes_.size(); ++i) {
    const int id = param_nodes_[i];
    if (id >= 0 && has_grad(id)) out[i] += nodes_[static_cast<std::size_t>(id)].grad;
  }
}

}  // namespace ireg::nn
