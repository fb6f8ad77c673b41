// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace minigpt::utf8 {

// Byte offset of the first malformed sequence, if any. Rejects overlong
// forms, surrogates and code points above U+10FFFF.
std::optional<std::size_t> find_invalid(std::string_view bytes);

// Throws DomainError naming the byte offset of the first malformed sequence.
std::vector<char32_t> decode(std::string_view bytes);

std::string encode(char32_t cp);
std::string encode(const std::vector<char32_t>& cps);

// Word separators for segmentation: ASCII space, tab, LF, VT, FF, CR.
bool is_separator(char32_t cp);

// "U+00E9 'é'" style description for diagnostics.
std::string describe(char32_t cp);

}  // namespace minigpt::utf8
