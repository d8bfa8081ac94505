#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "plbench/dataset.hpp"
#include "plbench/random.hpp"

namespace plbench {

/// Named dense tensor stored row-major. Vectors use cols == 1.
struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Ordered collection of named tensors whose shapes are fixed once added.
class ParamSet {
 public:
  /// Adds a zero tensor; returns its index. Throws UsageError on duplicates.
  std::size_t add(const std::string& name, std::size_t rows, std::size_t cols = 1);
  /// Adds a tensor with entries drawn from N(0, scale^2).
  std::size_t add_normal(const std::string& name, std::size_t rows, std::size_t cols,
                         double scale, Rng& rng);

  bool contains(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  Tensor& at(const std::string& name) { return tensors_[index_of(name)]; }
  const Tensor& at(const std::string& name) const { return tensors_[index_of(name)]; }

  std::span<double> values(std::size_t i) { return tensors_[i].values; }
  std::span<const double> values(std::size_t i) const { return tensors_[i].values; }

  std::size_t tensor_count() const { return tensors_.size(); }
  std::size_t total_size() const;
  const std::vector<Tensor>& tensors() const { return tensors_; }

  /// Same names and shapes, all entries zero.
  ParamSet zeros_like() const;
  void set_zero();
  bool same_shapes(const ParamSet& other) const;
  bool all_finite() const;

  /// Flat coordinate access across all tensors, in insertion order.
  double& coord(std::size_t flat_index);
  double coord(std::size_t flat_index) const;

  /// this += scale * other (shapes must match).
  void axpy(double scale, const ParamSet& other);
  void quantize_values();

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<Tensor> tensors_;
};

Json to_json(const ParamSet& params);
ParamSet param_set_from_json(const Json& j);

}  // namespace plbench
