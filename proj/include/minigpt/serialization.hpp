// SPDX-License-Identifier: Apache-2.0
//
// JSON file formats.
//
// Model file (format_version 1):
//
//   { "format_version": 1,
//     "config": { "n_vocab": .., "n_ctx": .., "d": .., "d_head": .., "n_heads": ..,
//                 "n_blocks": .., "mlp_depth": .., "mlp_hidden": ..,
//                 "activation": "gelu", "softmax_mode": "paper",
//                 "tied_embedding": false, "attention_scale": false },
//     "tensors": { "W_E": T, "W_U": T (untied only), "P": T,
//                  "blocks": [ { "heads": [ {"W_Q": T, "W_K": T, "W_V": T, "W_O": T}, .. ],
//                                "mlp": { "W": [T, ..], "b": [V, ..] } }, .. ] } }
//
// where T = {"shape": [rows, cols], "data": [row-major numbers]} and
// V = {"shape": [len], "data": [...]}. Numbers are written in the shortest
// decimal form that reads back to the identical double.
//
// Vocabulary file:
//
//   { "alphabet": ["a", "b", ..], "specials": ["<eow>", "<eoa>"],
//     "merges": [[left, right], ..], "n_vocab": N }
//
// Both writers are deterministic and replace the target file atomically.

#pragma once

#include <filesystem>
#include <string>

#include "minigpt/model.hpp"
#include "minigpt/tokenizer.hpp"

namespace minigpt {

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const TransformerModel& model);
// Throws LoadError naming the offending tensor or field; never returns a
// partially validated model.
TransformerModel model_from_json(const std::string& text);

void save_model(const TransformerModel& model, const std::filesystem::path& path);
TransformerModel load_model(const std::filesystem::path& path);

std::string vocab_to_json(const BpeModel& bpe);
BpeModel vocab_from_json(const std::string& text);

void save_vocab(const BpeModel& bpe, const std::filesystem::path& path);
BpeModel load_vocab(const std::filesystem::path& path);

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace minigpt
