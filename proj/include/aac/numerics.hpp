#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace aac {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  /// "RxC", used in error messages.
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix relu(const Matrix& x);

/// Numerically stable softmax (max subtracted before exponentiation).
Vector softmax(std::span<const double> x);

/// log(softmax(x)) without forming the probabilities first.
Vector log_softmax(std::span<const double> x);

/// Probabilities are floored at this value before taking a log.
inline constexpr double kProbabilityFloor = 1e-12;

double cross_entropy(std::span<const double> predicted, std::size_t target_index);

// Kernels used on the hot paths of the model. All of them accumulate.

/// out += x * w   (x is a row vector of length w.rows()).
void add_vec_mat(std::span<const double> x, const Matrix& w, std::span<double> out);
/// out += w * y   (y has length w.cols(); equivalently y * w^T).
void add_mat_vec(const Matrix& w, std::span<const double> y, std::span<double> out);
/// g += x^T * y   (outer product).
void add_outer(std::span<const double> x, std::span<const double> y, Matrix& g);

double sigmoid(double x);

/// Learnable tensor with its gradient and Adam moments.
struct ParameterGroup {
  ParameterGroup() = default;
  ParameterGroup(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix gradient;
  Matrix adam_m;
  Matrix adam_v;
  std::uint64_t step_count = 0;

  void zero_grad() { gradient.fill(0.0); }
};

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update. Clears the gradient afterwards.
/// Throws NumericError (and leaves the group untouched) on non-finite gradients.
void adam_step(ParameterGroup& group, double learning_rate, const AdamSettings& settings = {});

/// Compares group.gradient against central differences of loss_fn, which must
/// read group.value. Returns the maximum over entries of
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// group.value is restored before returning.
double finite_diff_check(const std::function<double()>& loss_fn, ParameterGroup& group,
                         double epsilon);

} // namespace aac
