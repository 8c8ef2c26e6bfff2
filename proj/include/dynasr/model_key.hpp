// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <string>

#include "dynasr/error.hpp"

namespace dynasr {

// Identifies one monolingual accent-specific ASR model.
struct ModelKey {
  std::string language;
  std::string accent;

  auto operator<=>(const ModelKey&) const = default;

  std::string str() const { return language + "/" + accent; }

  static ModelKey parse(const std::string& s) {
    const auto slash = s.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == s.size())
      raise(Err::BadConfig, "model key must be <language>/<accent>, got '" + s + "'");
    return {s.substr(0, slash), s.substr(slash + 1)};
  }
};

}  // namespace dynasr
