#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "causal_sde/errors.hpp"

namespace causal_sde {

/// f_v(parent values, own noise). Parent values arrive in the order of the
/// vertex's parent list.
using Relationship = std::function<double(std::span<const double> parents, std::span<const double> noise)>;

struct SemVertex {
  std::string name;
  std::vector<std::size_t> parents;
  /// Index of the vertex's noise variable, if it has one.
  std::optional<std::size_t> noise;
  std::shared_ptr<const Relationship> relationship;
};

/// Structural equation model: primary variables with noise variables, a DAG
/// over the primary variables and one relationship per vertex.
class SemModel {
 public:
  SemModel() = default;
  SemModel(std::vector<SemVertex> vertices, std::vector<std::size_t> noise_dims)
      : vertices_(std::move(vertices)), noise_dims_(std::move(noise_dims)) {
    for (const auto& v : vertices_) {
      for (auto q : v.parents)
        if (q >= vertices_.size()) throw std::invalid_argument("SEM parent out of range");
      if (v.noise && *v.noise >= noise_dims_.size()) throw std::invalid_argument("SEM noise out of range");
      if (!v.relationship) throw std::invalid_argument("SEM vertex without relationship");
    }
    order_ = compute_order();
    if (order_.size() != vertices_.size()) throw SemCycleError();
  }

  std::size_t size() const { return vertices_.size(); }
  const SemVertex& vertex(std::size_t v) const { return vertices_.at(v); }
  const std::vector<SemVertex>& vertices() const { return vertices_; }
  const std::vector<std::size_t>& noise_dims() const { return noise_dims_; }
  const std::vector<std::size_t>& topological_order() const { return order_; }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& v : vertices_) n += v.parents.size();
    return n;
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t v = 0; v < vertices_.size(); ++v)
      for (auto q : vertices_[v].parents) out.emplace_back(q, v);
    return out;
  }
  std::vector<std::optional<std::size_t>> noise_assignment() const {
    std::vector<std::optional<std::size_t>> out;
    for (const auto& v : vertices_) out.push_back(v.noise);
    return out;
  }

  /// Evaluates all primary variables in topological order. noise[k] holds
  /// the value of noise variable k.
  void evaluate(const std::vector<std::span<const double>>& noise, std::span<double> values) const {
    if (noise.size() != noise_dims_.size()) throw std::invalid_argument("SEM: wrong number of noise variables");
    if (values.size() != vertices_.size()) throw std::invalid_argument("SEM: wrong output size");
    std::vector<double> buf;
    for (auto v : order_) {
      const auto& vx = vertices_[v];
      buf.resize(vx.parents.size());
      for (std::size_t k = 0; k < vx.parents.size(); ++k) buf[k] = values[vx.parents[k]];
      const std::span<const double> u = vx.noise ? noise[*vx.noise] : std::span<const double>{};
      values[v] = (*vx.relationship)(buf, u);
    }
  }

 private:
  std::vector<std::size_t> compute_order() const {
    const std::size_t n = vertices_.size();
    std::vector<std::size_t> indeg(n, 0);
    std::vector<std::vector<std::size_t>> children(n);
    for (std::size_t v = 0; v < n; ++v)
      for (auto q : vertices_[v].parents) {
        children[q].push_back(v);
        ++indeg[v];
      }
    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t v = 0; v < n; ++v)
      if (indeg[v] == 0) order.push_back(v);
    for (std::size_t head = 0; head < order.size(); ++head)
      for (auto c : children[order[head]])
        if (--indeg[c] == 0) order.push_back(c);
    return order;
  }

  std::vector<SemVertex> vertices_;
  std::vector<std::size_t> noise_dims_;
  std::vector<std::size_t> order_;
};

/// do(X_target := ζ(X_inputs)).
struct SemAssignment {
  std::size_t target = 0;
  std::vector<std::size_t> inputs;
  std::function<double(std::span<const double> inputs)> zeta;
};

/// Postintervention SEM: each target's parents become its inputs and its
/// relationship becomes ζ of those inputs. Other vertices keep reading the
/// target, so its new value flows into them. Noise assignments are unchanged.
inline SemModel intervene_sem(const SemModel& sem, const std::vector<SemAssignment>& assignments) {
  std::vector<SemVertex> vertices = sem.vertices();
  std::vector<bool> is_target(vertices.size(), false);
  for (const auto& a : assignments) {
    if (a.target >= vertices.size()) throw std::invalid_argument("SEM intervention target out of range");
    if (is_target[a.target]) throw std::invalid_argument("SEM intervention target repeated");
    is_target[a.target] = true;
  }
  for (const auto& a : assignments) {
    for (auto in : a.inputs) {
      if (in >= vertices.size()) throw std::invalid_argument("SEM intervention input out of range");
      if (is_target[in]) throw std::invalid_argument("SEM intervention inputs must not be targets");
    }
    auto& v = vertices[a.target];
    v.parents = a.inputs;
    v.relationship = std::make_shared<const Relationship>(
        [zeta = a.zeta](std::span<const double> parents, std::span<const double>) { return zeta(parents); });
  }
  return {std::move(vertices), sem.noise_dims()};
}

}  // namespace causal_sde
