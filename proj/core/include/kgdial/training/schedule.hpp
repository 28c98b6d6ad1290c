// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgdial::training {

struct ScheduleConfig {
  double base_lr = 5e-4;
  std::size_t warmup_steps = 5000;
  double tau0 = 1.0;
  double tau_min = 0.6;
  double anneal_rate = 4e-5;
  double weak_supervision = 1.0;  // lambda
  std::vector<std::string> modal_words = {"can", "would", "could", "will", "should", "may"};

  void validate() const;
  bool operator==(const ScheduleConfig&) const = default;
};

/// base_lr * min(step / warmup, sqrt(warmup / step)). Throws for step < 1.
double lr_at(std::size_t step, const ScheduleConfig& cfg);

/// max(tau_min, tau0 * exp(-anneal_rate * step)).
double tau_at(std::size_t step, const ScheduleConfig& cfg);

nlohmann::json to_json(const ScheduleConfig& c);
ScheduleConfig schedule_config_from_json(const nlohmann::json& j,
                                         const ScheduleConfig& base = {});

}  // namespace kgdial::training
