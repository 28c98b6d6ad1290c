// SPDX-License-Identifier: Apache-2.0
#include "kgdial/autodiff/registry.hpp"

#include <algorithm>
#include <stdexcept>

#include "kgdial/common/error.hpp"

namespace kgdial::ad {

namespace {

constexpr std::array<std::string_view, kGroupCount> kNames = {
    "theta_e",       "theta_k",       "theta_d",       "theta_l",
    "theta_ol",      "theta_s",       "theta_v",       "theta_g",
    "theta_o",       "theta_s_prime", "theta_v_prime", "theta_g_prime",
    "theta_pi"};

}  // namespace

std::string_view group_name(Group g) { return kNames[static_cast<std::size_t>(g)]; }

std::optional<Group> parse_group(std::string_view name) {
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    if (kNames[i] == name) return static_cast<Group>(i);
  }
  return std::nullopt;
}

Tensor ParameterRegistry::add(Group group, std::string name, Tensor tensor) {
  if (contains(name)) {
    throw std::invalid_argument("parameter registered twice: " + name);
  }
  tensor.set_requires_grad(true);
  params_.push_back({std::move(name), group, tensor});
  return tensor;
}

const Tensor& ParameterRegistry::get(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

Tensor& ParameterRegistry::get(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

bool ParameterRegistry::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const NamedParameter& p) { return p.name == name; });
}

Group ParameterRegistry::group_of(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.group;
  }
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

std::vector<NamedParameter*> ParameterRegistry::group(Group g) {
  std::vector<NamedParameter*> out;
  for (auto& p : params_) {
    if (p.group == g) out.push_back(&p);
  }
  return out;
}

std::vector<const NamedParameter*> ParameterRegistry::group(Group g) const {
  std::vector<const NamedParameter*> out;
  for (const auto& p : params_) {
    if (p.group == g) out.push_back(&p);
  }
  return out;
}

void ParameterRegistry::freeze_all_except(const std::vector<Group>& trainable) {
  for (Group g : kAllGroups) {
    set_frozen(g, std::find(trainable.begin(), trainable.end(), g) ==
                      trainable.end());
  }
}

void ParameterRegistry::sync_requires_grad() {
  for (auto& p : params_) p.tensor.set_requires_grad(!frozen(p.group));
}

void ParameterRegistry::enable_all_grads() {
  for (auto& p : params_) p.tensor.set_requires_grad(true);
}

void ParameterRegistry::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t ParameterRegistry::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

std::size_t ParameterRegistry::element_count(Group g) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.group == g) n += p.tensor.size();
  }
  return n;
}

std::vector<std::vector<double>> ParameterRegistry::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) {
    auto v = p.tensor.values();
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

void ParameterRegistry::restore(const std::vector<std::vector<double>>& snap) {
  if (snap.size() != params_.size()) {
    throw ShapeError("restore: snapshot has " + std::to_string(snap.size()) +
                     " tensors, registry has " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].tensor.mutable_values();
    if (dst.size() != snap[i].size()) {
      throw ShapeError("restore: size mismatch for " + params_[i].name);
    }
    std::copy(snap[i].begin(), snap[i].end(), dst.begin());
  }
}

}  // namespace kgdial::ad
