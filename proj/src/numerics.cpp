#include "aac/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aac/errors.hpp"

namespace aac {

namespace {

void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) {
    throw NumericError(std::string(op) + ": result contains non-finite values");
  }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) {
      throw DimensionError("ragged initializer for Matrix");
    }
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = 1.0;
  }
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  std::ostringstream ss;
  ss << rows_ << "x" << cols_;
  return ss.str();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape_string() + " by " +
                         b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    add_vec_mat(a.row(r), b, out.row(r));
  }
  require_finite(out, "matmul");
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      out(c, r) = a(r, c);
    }
  }
  return out;
}

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) {
    v = v > 0.0 ? v : 0.0;
  }
  require_finite(out, "relu");
  return out;
}

Vector softmax(std::span<const double> x) {
  if (x.empty()) {
    throw ContractViolation("softmax: empty input");
  }
  const double mx = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(mx)) {
    throw NumericError("softmax: non-finite maximum");
  }
  Vector out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (double& v : out) {
    v /= sum;
  }
  return out;
}

Vector log_softmax(std::span<const double> x) {
  if (x.empty()) {
    throw ContractViolation("log_softmax: empty input");
  }
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) {
    sum += std::exp(v - mx);
  }
  const double lse = mx + std::log(sum);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] - lse;
  }
  return out;
}

double cross_entropy(std::span<const double> predicted, std::size_t target_index) {
  if (target_index >= predicted.size()) {
    throw ContractViolation("cross_entropy: target index " + std::to_string(target_index) +
                            " out of range for " + std::to_string(predicted.size()) +
                            " classes");
  }
  return -std::log(std::max(predicted[target_index], kProbabilityFloor));
}

void add_vec_mat(std::span<const double> x, const Matrix& w, std::span<double> out) {
  if (x.size() != w.rows() || out.size() != w.cols()) {
    throw DimensionError("add_vec_mat: vector of " + std::to_string(x.size()) + " times " +
                         w.shape_string() + " into " + std::to_string(out.size()));
  }
  const std::size_t cols = w.cols();
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) {
      continue;
    }
    const double* wr = w.row(r).data();
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] += xr * wr[c];
    }
  }
}

void add_mat_vec(const Matrix& w, std::span<const double> y, std::span<double> out) {
  if (y.size() != w.cols() || out.size() != w.rows()) {
    throw DimensionError("add_mat_vec: " + w.shape_string() + " times vector of " +
                         std::to_string(y.size()) + " into " + std::to_string(out.size()));
  }
  const std::size_t cols = w.cols();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* wr = w.row(r).data();
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      acc += wr[c] * y[c];
    }
    out[r] += acc;
  }
}

void add_outer(std::span<const double> x, std::span<const double> y, Matrix& g) {
  if (x.size() != g.rows() || y.size() != g.cols()) {
    throw DimensionError("add_outer: " + std::to_string(x.size()) + "x" +
                         std::to_string(y.size()) + " into " + g.shape_string());
  }
  const std::size_t cols = g.cols();
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) {
      continue;
    }
    double* gr = g.row(r).data();
    for (std::size_t c = 0; c < cols; ++c) {
      gr[c] += xr * y[c];
    }
  }
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ParameterGroup::ParameterGroup(std::string name_, Matrix value_)
    : name(std::move(name_)),
      value(std::move(value_)),
      gradient(value.rows(), value.cols()),
      adam_m(value.rows(), value.cols()),
      adam_v(value.rows(), value.cols()) {}

void adam_step(ParameterGroup& group, double learning_rate, const AdamSettings& settings) {
  if (!group.gradient.same_shape(group.value)) {
    throw DimensionError("adam_step: gradient " + group.gradient.shape_string() +
                         " does not match value " + group.value.shape_string() + " for '" +
                         group.name + "'");
  }
  if (!group.gradient.all_finite()) {
    throw NumericError("adam_step: non-finite gradient in '" + group.name + "'");
  }
  group.step_count += 1;
  const double t = static_cast<double>(group.step_count);
  const double correction1 = 1.0 - std::pow(settings.beta1, t);
  const double correction2 = 1.0 - std::pow(settings.beta2, t);

  auto value = group.value.values();
  auto grad = group.gradient.values();
  auto m = group.adam_m.values();
  auto v = group.adam_v.values();
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    m[i] = settings.beta1 * m[i] + (1.0 - settings.beta1) * g;
    v[i] = settings.beta2 * v[i] + (1.0 - settings.beta2) * g * g;
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + settings.epsilon);
  }
  group.zero_grad();
}

double finite_diff_check(const std::function<double()>& loss_fn, ParameterGroup& group,
                         double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw ContractViolation("finite_diff_check: epsilon must lie in [1e-7, 1e-3]");
  }
  if (group.value.empty()) {
    return 0.0;
  }
  const double base = loss_fn();
  if (loss_fn() != base) {
    throw ContractViolation("finite_diff_check: loss function is not deterministic");
  }

  double worst = 0.0;
  auto value = group.value.values();
  const auto analytic = group.gradient.values();
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double saved = value[i];
    value[i] = saved + epsilon;
    const double plus = loss_fn();
    value[i] = saved - epsilon;
    const double minus = loss_fn();
    value[i] = saved;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

} // namespace aac
