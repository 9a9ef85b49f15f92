#pragma once

#include <string>
#include <string_view>

namespace rerank {

/// Classic Porter (1980) suffix-stripping stemmer. Expects a lowercase word;
/// words of length <= 2 are returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace rerank
