// SPDX-License-Identifier: Apache-2.0
#include "kgdial/training/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kgdial::training {

using nlohmann::json;

void ScheduleConfig::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("schedule.base_lr must be > 0");
  if (warmup_steps == 0) throw std::invalid_argument("schedule.warmup_steps must be > 0");
  if (!(tau_min > 0.0)) throw std::invalid_argument("schedule.tau_min must be > 0");
  if (!(tau0 >= tau_min)) throw std::invalid_argument("schedule.tau0 must be >= tau_min");
  if (!(anneal_rate >= 0.0)) throw std::invalid_argument("schedule.anneal_rate must be >= 0");
  if (!(weak_supervision >= 0.0)) {
    throw std::invalid_argument("schedule.weak_supervision must be >= 0");
  }
}

double lr_at(std::size_t step, const ScheduleConfig& cfg) {
  if (step < 1) throw std::invalid_argument("lr_at: step must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(cfg.warmup_steps);
  return cfg.base_lr * std::min(s / w, std::sqrt(w / s));
}

double tau_at(std::size_t step, const ScheduleConfig& cfg) {
  return std::max(cfg.tau_min,
                  cfg.tau0 * std::exp(-cfg.anneal_rate * static_cast<double>(step)));
}

json to_json(const ScheduleConfig& c) {
  return json{{"base_lr", c.base_lr},         {"warmup_steps", c.warmup_steps},
              {"tau0", c.tau0},               {"tau_min", c.tau_min},
              {"anneal_rate", c.anneal_rate}, {"weak_supervision", c.weak_supervision},
              {"modal_words", c.modal_words}};
}

ScheduleConfig schedule_config_from_json(const json& j, const ScheduleConfig& base) {
  if (!j.is_object()) throw std::invalid_argument("schedule: expected an object");
  ScheduleConfig c = base;
  for (const auto& [key, value] : j.items()) {
    auto real = [&](double& field) {
      if (!value.is_number()) throw std::invalid_argument("schedule." + key + " must be a number");
      field = value.get<double>();
    };
    if (key == "base_lr") real(c.base_lr);
    else if (key == "tau0") real(c.tau0);
    else if (key == "tau_min") real(c.tau_min);
    else if (key == "anneal_rate") real(c.anneal_rate);
    else if (key == "weak_supervision") real(c.weak_supervision);
    else if (key == "warmup_steps") {
      if (!value.is_number_unsigned()) {
        throw std::invalid_argument("schedule.warmup_steps must be a non-negative integer");
      }
      c.warmup_steps = value.get<std::size_t>();
    } else if (key == "modal_words") {
      if (!value.is_array()) throw std::invalid_argument("schedule.modal_words must be a list");
      c.modal_words.clear();
      for (const auto& w : value) {
        if (!w.is_string()) throw std::invalid_argument("schedule.modal_words must hold strings");
        c.modal_words.push_back(w.get<std::string>());
      }
    } else {
      throw std::invalid_argument("schedule: unknown field '" + key + "'");
    }
  }
  c.validate();
  return c;
}

}  // namespace kgdial::training
