// SPDX-License-Identifier: Apache-2.0
#include "minigpt/corpus.hpp"

#include <algorithm>

#include "minigpt/errors.hpp"
#include "minigpt/serialization.hpp"
#include "minigpt/utf8.hpp"

namespace minigpt {

namespace fs = std::filesystem;

CorpusManifest manifest_from_paths(const std::vector<std::string>& args) {
  CorpusManifest manifest;
  for (const auto& arg : args) {
    const fs::path p(arg);
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(p))
        if (entry.is_regular_file()) files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      manifest.paths.insert(manifest.paths.end(), files.begin(), files.end());
    } else if (fs::exists(p, ec)) {
      manifest.paths.push_back(p);
    } else {
      throw IngestionError("corpus path " + arg + " does not exist");
    }
  }
  return manifest;
}

std::vector<std::string> ingest_corpus(const CorpusManifest& manifest,
                                       const std::optional<std::vector<char32_t>>& alphabet) {
  std::vector<char32_t> sorted;
  if (alphabet) {
    sorted = *alphabet;
    std::sort(sorted.begin(), sorted.end());
  }
  std::vector<std::string> artefacts;
  for (const auto& path : manifest.paths) {
    std::string text;
    try {
      text = read_file(path);
    } catch (const Error& e) {
      throw IngestionError(e.what());
    }
    if (const auto bad = utf8::find_invalid(text)) {
      throw IngestionError(path.string() + ": invalid UTF-8 at byte offset " + std::to_string(*bad));
    }
    if (alphabet) {
      std::size_t offset = 0;
      for (char32_t cp : utf8::decode(text)) {
        if (!utf8::is_separator(cp) && !std::binary_search(sorted.begin(), sorted.end(), cp)) {
          throw IngestionError(path.string() + ": character " + utf8::describe(cp) + " at byte offset " +
                               std::to_string(offset) + " is not in the alphabet");
        }
        offset += utf8::encode(cp).size();
      }
    }
    artefacts.push_back(std::move(text));
  }
  return artefacts;
}

std::string flatten_corpus(const std::vector<std::string>& artefacts, std::string_view separator) {
  std::string out;
  for (std::size_t i = 0; i < artefacts.size(); ++i) {
    if (i > 0) out += separator;
    out += artefacts[i];
  }
  return out;
}

std::vector<std::string> truncate_corpus(const std::vector<std::string>& artefacts, std::size_t max_chars) {
  std::vector<std::string> out;
  std::size_t budget = max_chars;
  for (const auto& a : artefacts) {
    if (budget == 0) break;
    const auto cps = utf8::decode(a);
    if (cps.size() <= budget) {
      out.push_back(a);
      budget -= cps.size();
    } else {
      out.push_back(utf8::encode(std::vector<char32_t>(cps.begin(), cps.begin() + static_cast<std::ptrdiff_t>(budget))));
      budget = 0;
    }
  }
  return out;
}

}  // namespace minigpt
