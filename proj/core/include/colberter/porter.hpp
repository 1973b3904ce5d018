#pragma once

#include <string>
#include <string_view>

namespace colberter {

/// Classic Porter (1980) suffix-stripping stemmer.
///
/// Operates on lowercase ASCII words. Words containing anything other than
/// `a`-`z` are returned unchanged, as is the empty string.
std::string porter_stem(std::string_view word);

}  // namespace colberter
