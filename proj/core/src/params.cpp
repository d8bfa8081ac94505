#include "plbench/params.hpp"

#include <cmath>

#include "plbench/error.hpp"

namespace plbench {

std::size_t ParamSet::add(const std::string& name, std::size_t rows, std::size_t cols) {
  if (contains(name)) throw UsageError("duplicate parameter tensor '" + name + "'");
  tensors_.push_back(Tensor{name, rows, cols, std::vector<double>(rows * cols, 0.0)});
  return tensors_.size() - 1;
}

std::size_t ParamSet::add_normal(const std::string& name, std::size_t rows, std::size_t cols,
                                 double scale, Rng& rng) {
  std::size_t i = add(name, rows, cols);
  for (auto& v : tensors_[i].values) v = scale * rng.normal();
  return i;
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return true;
  }
  return false;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  throw UsageError("no parameter tensor named '" + name + "'");
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& t : tensors_) out.add(t.name, t.rows, t.cols);
  return out;
}

void ParamSet::set_zero() {
  for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), 0.0);
}

bool ParamSet::same_shapes(const ParamSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

bool ParamSet::all_finite() const {
  for (const auto& t : tensors_) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

double& ParamSet::coord(std::size_t flat_index) {
  for (auto& t : tensors_) {
    if (flat_index < t.size()) return t.values[flat_index];
    flat_index -= t.size();
  }
  throw UsageError("parameter coordinate out of range");
}

double ParamSet::coord(std::size_t flat_index) const {
  return const_cast<ParamSet*>(this)->coord(flat_index);
}

void ParamSet::axpy(double scale, const ParamSet& other) {
  if (!same_shapes(other)) throw UsageError("axpy: parameter shapes differ");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    auto& a = tensors_[i].values;
    const auto& b = other.tensors_[i].values;
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += scale * b[k];
  }
}

void ParamSet::quantize_values() {
  for (auto& t : tensors_) quantize_in_place(t.values);
}

Json to_json(const ParamSet& params) {
  Json shapes = Json::array();
  Json values = Json::object();
  for (const auto& t : params.tensors()) {
    shapes.push_back(Json{{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    std::vector<double> q = t.values;
    quantize_in_place(q);
    values[t.name] = q;
  }
  Json j;
  j["shapes"] = std::move(shapes);
  j["values"] = std::move(values);
  return j;
}

ParamSet param_set_from_json(const Json& j) {
  ParamSet p;
  try {
    for (const auto& s : j.at("shapes")) {
      auto name = s.at("name").get<std::string>();
      auto rows = s.at("rows").get<std::size_t>();
      auto cols = s.at("cols").get<std::size_t>();
      std::size_t i = p.add(name, rows, cols);
      auto values = j.at("values").at(name).get<std::vector<double>>();
      if (values.size() != rows * cols) {
        throw DataError("parameter '" + name + "' has " + std::to_string(values.size()) +
                        " values for shape " + std::to_string(rows) + "x" + std::to_string(cols));
      }
      quantize_in_place(values);
      p[i].values = std::move(values);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed parameter manifest: ") + e.what());
  }
  if (!p.all_finite()) throw DataError("parameter manifest has non-finite values");
  return p;
}

}  // namespace plbench
