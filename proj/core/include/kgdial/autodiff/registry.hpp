// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgdial/autodiff/tensor.hpp"

namespace kgdial::ad {

/// The thirteen parameter groups of the grounded generation model.
enum class Group : std::size_t {
  theta_e,        // context encoder + shared input embedding
  theta_k,        // knowledge encoder + its embedding
  theta_d,        // decoder state GRU
  theta_l,        // language-model MLP
  theta_ol,       // language-model output embedding
  theta_s,        // context attention scorer
  theta_v,        // context vocabulary MLP
  theta_g,        // context copy gate
  theta_o,        // shared context/knowledge output embedding
  theta_s_prime,  // knowledge attention scorer
  theta_v_prime,  // knowledge vocabulary MLP
  theta_g_prime,  // knowledge copy gate
  theta_pi,       // decoding manager
};

inline constexpr std::size_t kGroupCount = 13;

inline constexpr std::array<Group, kGroupCount> kAllGroups = {
    Group::theta_e,       Group::theta_k,       Group::theta_d,
    Group::theta_l,       Group::theta_ol,      Group::theta_s,
    Group::theta_v,       Group::theta_g,       Group::theta_o,
    Group::theta_s_prime, Group::theta_v_prime, Group::theta_g_prime,
    Group::theta_pi};

std::string_view group_name(Group g);
std::optional<Group> parse_group(std::string_view name);

struct NamedParameter {
  std::string name;
  Group group;
  Tensor tensor;
};

/// Owns every trainable tensor, each in exactly one group, plus a frozen
/// flag per group. Freezing is honoured by the optimizer; gradients still
/// flow through frozen tensors.
class ParameterRegistry {
 public:
  /// Registers a tensor under a unique name. Throws on duplicates.
  Tensor add(Group group, std::string name, Tensor tensor);

  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  bool contains(std::string_view name) const;
  Group group_of(std::string_view name) const;

  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<NamedParameter*> group(Group g);
  std::vector<const NamedParameter*> group(Group g) const;

  void set_frozen(Group g, bool frozen) {
    frozen_[static_cast<std::size_t>(g)] = frozen;
  }
  bool frozen(Group g) const { return frozen_[static_cast<std::size_t>(g)]; }
  /// Freeze everything except `trainable`.
  void freeze_all_except(const std::vector<Group>& trainable);

  /// Leaf gradient accumulation is skipped for frozen groups when enabled.
  /// Gradients still propagate through them to unfrozen upstream tensors.
  void sync_requires_grad();
  void enable_all_grads();

  void zero_grad();
  std::size_t element_count() const;
  std::size_t element_count(Group g) const;

  /// Deep copy of all values (for snapshots / best-checkpoint restore).
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snap);

 private:
  std::vector<NamedParameter> params_;
  std::array<bool, kGroupCount> frozen_{};
};

}  // namespace kgdial::ad
