#pragma once

#include <cstddef>

namespace colberter::unicode::detail {

struct CodepointRange {
  char32_t first;
  char32_t last;
};

struct CaseMapping {
  char32_t from;
  char32_t to;
};

extern const CodepointRange kPunctuationRanges[];
extern const std::size_t kPunctuationRangeCount;
extern const CaseMapping kLowercaseMappings[];
extern const std::size_t kLowercaseMappingCount;

}  // namespace colberter::unicode::detail
