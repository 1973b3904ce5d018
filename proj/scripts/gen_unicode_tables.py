#!/usr/bin/env python3
"""Regenerates core/src/unicode_tables.cpp from Python's unicodedata."""
import sys
import unicodedata

def ranges(pred):
    out, start = [], None
    for cp in range(0x110000):
        ok = pred(cp)
        if ok and start is None:
            start = cp
        elif not ok and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out

def is_punct_or_symbol(cp):
    return unicodedata.category(chr(cp))[0] in ("P", "S")

lower = []
for cp in range(0x110000):
    c = chr(cp)
    lo = c.lower()
    if len(lo) == 1 and lo != c:
        lower.append((cp, ord(lo)))

punct = ranges(is_punct_or_symbol)
out = sys.stdout
out.write("// Generated by scripts/gen_unicode_tables.py (Unicode %s). Do not edit.\n\n" % unicodedata.unidata_version)
out.write('#include "unicode_tables.hpp"\n\nnamespace colberter::unicode::detail {\n\n')
out.write("const CodepointRange kPunctuationRanges[] = {\n")
for a, b in punct:
    out.write("    {0x%X, 0x%X},\n" % (a, b))
out.write("};\nconst std::size_t kPunctuationRangeCount = sizeof(kPunctuationRanges) / sizeof(kPunctuationRanges[0]);\n\n")
out.write("const CaseMapping kLowercaseMappings[] = {\n")
for a, b in lower:
    out.write("    {0x%X, 0x%X},\n" % (a, b))
out.write("};\nconst std::size_t kLowercaseMappingCount = sizeof(kLowercaseMappings) / sizeof(kLowercaseMappings[0]);\n\n")
out.write("}  // namespace colberter::unicode::detail\n")
