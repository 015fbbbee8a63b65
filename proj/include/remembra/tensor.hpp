#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace remembra {

using Shape = std::vector<int>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Dense 64-bit tensor, row-major. Copies are shallow (shared buffer); use
// clone() for an independent buffer. A tensor may be bound to a node on one
// tape (tape_id/node), which is how gradient tracking is expressed.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return buf_ ? static_cast<int64_t>(buf_->size()) : 0; }
  bool defined() const { return static_cast<bool>(buf_); }

  double* data() { return buf_->data(); }
  const double* data() const { return buf_->data(); }
  std::span<const double> values() const { return {buf_->data(), buf_->size()}; }
  double& operator[](int64_t i) { return (*buf_)[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return (*buf_)[static_cast<size_t>(i)]; }

  // Value of a single-element tensor.
  double item() const;

  // Deep copy; the clone is not bound to any tape.
  Tensor clone() const;

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Tape binding. node() < 0 means untracked.
  int node() const { return node_; }
  uint64_t tape_id() const { return tape_id_; }
  bool tracked_on(uint64_t tape) const { return node_ >= 0 && tape_id_ == tape; }
  Tensor with_node(uint64_t tape, int node) const;
  Tensor detached() const;

 private:
  std::shared_ptr<std::vector<double>> buf_;
  Shape shape_;
  int node_ = -1;
  uint64_t tape_id_ = 0;
};

}  // namespace remembra
