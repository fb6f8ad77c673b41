// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace minigpt {

// Artefact files in reading order.
struct CorpusManifest {
  std::vector<std::filesystem::path> paths;
};

// Files are taken as given; directories contribute their regular files
// (non-recursive) sorted by name.
CorpusManifest manifest_from_paths(const std::vector<std::string>& args);

// Reads every artefact as UTF-8 text. When an alphabet is given, every
// non-whitespace character must belong to it. Errors name the file and the
// byte offset.
std::vector<std::string> ingest_corpus(const CorpusManifest& manifest,
                                       const std::optional<std::vector<char32_t>>& alphabet = std::nullopt);

// The corpus as one string with exactly one separator between consecutive artefacts.
std::string flatten_corpus(const std::vector<std::string>& artefacts, std::string_view separator = "★");

// Keeps the first `max_chars` characters of the corpus, in order, cutting the
// artefact that crosses the limit and dropping the rest.
std::vector<std::string> truncate_corpus(const std::vector<std::string>& artefacts, std::size_t max_chars);

}  // namespace minigpt
