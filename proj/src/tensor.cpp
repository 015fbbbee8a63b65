#include "remembra/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace remembra {

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (int d : shape_) {
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(shape_));
  }
  buf_ = std::make_shared<std::vector<double>>(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_size(shape_) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape_));
  }
  buf_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.buf_->begin(), t.buf_->end(), value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape_));
  return (*buf_)[0];
}

Tensor Tensor::clone() const {
  if (!buf_) return {};
  Tensor t;
  t.shape_ = shape_;
  t.buf_ = std::make_shared<std::vector<double>>(*buf_);
  return t;
}

bool Tensor::all_finite() const {
  if (!buf_) return true;
  for (double v : *buf_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::with_node(uint64_t tape, int node) const {
  Tensor t = *this;
  t.tape_id_ = tape;
  t.node_ = node;
  return t;
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_id_ = 0;
  t.node_ = -1;
  return t;
}

}  // namespace remembra
