// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "davam/autodiff.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace davam {

// Parameter groups: phi = encoder + posterior heads, theta = decoder +
// attention + output projection + embeddings, psi = prior network. The code
// book is EMA-updated and tracked separately from all three.
enum class ParamGroup { Phi, Theta, Psi };

inline const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Phi: return "phi";
    case ParamGroup::Theta: return "theta";
    case ParamGroup::Psi: return "psi";
  }
  return "?";
}

template <typename Scalar>
class ParameterRegistry {
 public:
  struct Entry {
    std::string name;
    ParamGroup group;
    Tensor<Scalar> tensor;
  };

  Tensor<Scalar> add(const std::string& name, ParamGroup group, Mat<Scalar> init) {
    if (index_.count(name))
      throw ContractError("ParameterRegistry: duplicate parameter " + name);
    Tensor<Scalar> t = Tensor<Scalar>::from(std::move(init), true);
    index_.emplace(name, entries_.size());
    entries_.push_back({name, group, t});
    return t;
  }

  Tensor<Scalar> uniform(const std::string& name, ParamGroup group,
                         Eigen::Index rows, Eigen::Index cols, Rng& rng,
                         Scalar scale) {
    Mat<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        m(i, j) = static_cast<Scalar>(rng.uniform(-double(scale), double(scale)));
    return add(name, group, std::move(m));
  }

  Tensor<Scalar> constant(const std::string& name, ParamGroup group,
                          Eigen::Index rows, Eigen::Index cols, Scalar v) {
    return add(name, group, Mat<Scalar>::Constant(rows, cols, v));
  }

  const std::vector<Entry>& entries() const { return entries_; }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<Scalar> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ContractError("ParameterRegistry: unknown parameter " + name);
    return entries_[it->second].tensor;
  }

  std::vector<Entry> group_entries(ParamGroup g) const {
    std::vector<Entry> out;
    for (const auto& e : entries_)
      if (e.group == g) out.push_back(e);
    return out;
  }

  void zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  // FNV hash over the raw value bytes of the named groups, for freeze checks.
  std::uint64_t content_hash(std::initializer_list<ParamGroup> groups) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& e : entries_) {
      bool wanted = false;
      for (ParamGroup g : groups)
        if (e.group == g) wanted = true;
      if (!wanted) continue;
      h = fnv1a64(e.name.data(), e.name.size(), h);
      const auto& v = e.tensor.value();
      h = fnv1a64(v.data(), sizeof(Scalar) * static_cast<std::size_t>(v.size()), h);
    }
    return h;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace davam
