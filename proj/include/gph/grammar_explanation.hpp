#pragma once

#include <string>

#include "gph/common.hpp"

namespace gph {

/// A generator model's explanation of one paradigm, as cached on disk.
struct GrammarExplanation {
  std::string paradigm;
  Dataset dataset = Dataset::Custom;
  Audience audience = Audience::Beginner;
  std::string generator_model;
  std::string template_version;
  std::string text;
  std::size_t token_estimate = 0;
  std::string created_at;
  std::string cache_key;

  friend bool operator==(const GrammarExplanation&, const GrammarExplanation&) = default;
};

}  // namespace gph
