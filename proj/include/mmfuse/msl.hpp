#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mmfuse/lexicon.hpp"

namespace mmfuse {

/// Text normalization used for lexicon matching: ASCII lowercase, split on
/// whitespace, drop URL tokens (http://, https://, www.) and @user mentions,
/// delete ASCII punctuation inside the remaining tokens, drop tokens left empty.
std::vector<std::string> msl_tokens(std::string_view text);

/// Number of normalized tokens found in the lexicon, with multiplicity.
int msl_score_raw(std::string_view text, const Lexicon& lexicon);

/// (count - lo) / (hi - lo) clamped to [0, 1]; 0 when hi == lo.
double msl_normalize(double count, double lo, double hi);

} // namespace mmfuse
