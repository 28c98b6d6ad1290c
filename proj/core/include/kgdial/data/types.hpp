// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace kgdial::data {

using Tokens = std::vector<std::string>;

/// (context U, document D, response r).
struct GroundedExample {
  std::vector<Tokens> context;
  std::vector<Tokens> knowledge;  // one entry per sentence
  Tokens response;

  bool operator==(const GroundedExample&) const = default;
};

/// (context U, response r) without a document.
struct UngroundedExample {
  std::vector<Tokens> context;
  Tokens response;

  bool operator==(const UngroundedExample&) const = default;
};

struct Document {
  std::vector<Tokens> sentences;

  bool operator==(const Document&) const = default;
};

}  // namespace kgdial::data
