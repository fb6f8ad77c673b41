// SPDX-License-Identifier: Apache-2.0
#include "minigpt/cli.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "minigpt/corpus.hpp"
#include "minigpt/errors.hpp"
#include "minigpt/model.hpp"
#include "minigpt/serialization.hpp"
#include "minigpt/tokenizer.hpp"
#include "minigpt/utf8.hpp"

namespace minigpt {

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

TokenSeq parse_ids(const std::string& text) {
  TokenSeq ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    TokenId id = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), id);
    if (ec != std::errc() || ptr != item.data() + item.size()) throw RangeError("invalid token id '" + item + "'");
    ids.push_back(id);
  }
  return ids;
}

std::string join_ids(const TokenSeq& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + std::to_string(ids[i]);
  return out;
}

void require_matching_vocab(const TransformerModel& model, const BpeModel& bpe) {
  if (model.config().n_vocab != bpe.n_vocab()) {
    throw ConfigError("model expects n_vocab = " + std::to_string(model.config().n_vocab) +
                      " but the vocabulary has " + std::to_string(bpe.n_vocab()) + " tokens");
  }
}

TokenSeq context_tokens(const TransformerModel& model, const BpeModel& bpe, const std::string& text) {
  TokenSeq tokens = tokenize(bpe, text);
  if (tokens.empty()) throw DomainError("text tokenizes to an empty context");
  if (tokens.size() > model.config().n_ctx) {
    throw DimensionError("text tokenizes to " + std::to_string(tokens.size()) + " tokens, n_ctx = " +
                         std::to_string(model.config().n_ctx));
  }
  return tokens;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decoder-only transformer inference: BPE vocabularies, model files, prediction and generation",
               "minigpt"};
  app.require_subcommand(1);

  // train-bpe
  auto* train = app.add_subcommand("train-bpe", "Learn BPE merges from a corpus");
  std::vector<std::string> corpus_paths;
  std::size_t vocab_size = 0;
  std::size_t max_chars = 0;
  std::size_t min_pair_count = 1;
  std::string alphabet_text;
  std::string out_path;
  train->add_option("--corpus", corpus_paths, "Artefact files or directories")->required()->expected(1, -1);
  train->add_option("--vocab-size", vocab_size, "Target vocabulary size n_vocab")->required();
  train->add_option("--max-chars", max_chars, "Use at most this many corpus characters (0 = all)");
  train->add_option("--alphabet", alphabet_text, "Alphabet characters (default: every character in the corpus)");
  train->add_option("--min-pair-count", min_pair_count, "Stop when the best pair occurs fewer times");
  train->add_option("--out", out_path, "Vocabulary file to write")->required();

  // tokenize
  auto* tok = app.add_subcommand("tokenize", "Split text into tokens");
  std::string vocab_path, text, file_path;
  bool print_ids = false;
  tok->add_option("--vocab", vocab_path)->required();
  auto* text_opt = tok->add_option("--text", text);
  auto* file_opt = tok->add_option("--file", file_path);
  text_opt->excludes(file_opt);
  tok->add_flag("--ids", print_ids, "Print comma-separated token ids");

  // detokenize
  auto* detok = app.add_subcommand("detokenize", "Render token ids as text");
  std::string ids_text;
  std::string separator = "★";
  detok->add_option("--vocab", vocab_path)->required();
  detok->add_option("--ids", ids_text, "Comma-separated token ids")->required();
  detok->add_option("--separator", separator, "Rendering of the end-of-artefact token");

  // init
  auto* init = app.add_subcommand("init", "Write a randomly initialized model");
  ModelConfig config;
  std::string activation = "gelu", softmax_mode = "paper";
  std::uint64_t seed = 0;
  std::size_t mlp_hidden = 0;
  init->add_option("--n-vocab", config.n_vocab)->required();
  init->add_option("--n-ctx", config.n_ctx)->required();
  init->add_option("--d", config.d)->required();
  init->add_option("--d-head", config.d_head)->required();
  init->add_option("--n-heads", config.n_heads)->required();
  init->add_option("--n-blocks", config.n_blocks)->required();
  init->add_option("--mlp-depth", config.mlp_depth, "MLP depth L")->capture_default_str();
  init->add_option("--mlp-hidden", mlp_hidden, "Hidden layer width (default 4*d)");
  init->add_option("--activation", activation, "relu|gelu|identity|tanh")->capture_default_str();
  init->add_option("--softmax-mode", softmax_mode, "paper|rowwise")->capture_default_str();
  init->add_flag("--tied", config.tied_embedding, "Tie W_U to W_E^T");
  init->add_flag("--attention-scale", config.attention_scale, "Scale scores by 1/sqrt(d_head)");
  init->add_option("--seed", seed)->capture_default_str();
  init->add_option("--out", out_path)->required();

  // forward / predict / generate / inspect
  std::string model_path;
  auto* forward = app.add_subcommand("forward", "Print the logits for the next token");
  forward->add_option("--model", model_path)->required();
  forward->add_option("--vocab", vocab_path)->required();
  forward->add_option("--text", text)->required();

  auto* predict = app.add_subcommand("predict", "Print the most probable next tokens");
  std::size_t top_k = 1;
  predict->add_option("--model", model_path)->required();
  predict->add_option("--vocab", vocab_path)->required();
  predict->add_option("--text", text)->required();
  predict->add_option("--top-k", top_k)->capture_default_str();

  auto* gen = app.add_subcommand("generate", "Extend a prompt one token at a time");
  std::string prompt, strategy = "greedy";
  std::size_t steps = 0;
  double temperature = 1.0;
  gen->add_option("--model", model_path)->required();
  gen->add_option("--vocab", vocab_path)->required();
  gen->add_option("--prompt", prompt)->required();
  gen->add_option("--steps", steps)->required();
  gen->add_option("--strategy", strategy, "greedy|sample")->capture_default_str();
  gen->add_option("--temperature", temperature)->capture_default_str();
  gen->add_option("--seed", seed)->capture_default_str();

  auto* inspect = app.add_subcommand("inspect", "Print a model's configuration and parameter count");
  inspect->add_option("--model", model_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*train) {
      auto manifest = manifest_from_paths(corpus_paths);
      std::optional<std::vector<char32_t>> alphabet;
      if (!alphabet_text.empty()) {
        alphabet = utf8::decode(alphabet_text);
        std::sort(alphabet->begin(), alphabet->end());
        alphabet->erase(std::unique(alphabet->begin(), alphabet->end()), alphabet->end());
      }
      auto artefacts = ingest_corpus(manifest, alphabet);
      if (max_chars > 0) artefacts = truncate_corpus(artefacts, max_chars);
      const auto chars = alphabet ? *alphabet : collect_alphabet(artefacts);
      const BpeModel bpe = train_bpe(artefacts, chars, vocab_size, TrainOptions{min_pair_count});
      if (bpe.n_vocab() < vocab_size) {
        err << "warning: no eligible pair left; vocabulary stopped at " << bpe.n_vocab() << " of " << vocab_size
            << " tokens\n";
      }
      save_vocab(bpe, out_path);
      out << "n_vocab " << bpe.n_vocab() << " (" << bpe.merges().size() << " merges)\n";
    } else if (*tok) {
      if (text_opt->count() == 0 && file_opt->count() == 0) {
        err << "error: tokenize needs --text or --file\n";
        return kExitUsage;
      }
      const BpeModel bpe = load_vocab(vocab_path);
      const std::string input = file_opt->count() ? read_file(file_path) : text;
      const TokenSeq ids = tokenize(bpe, input);
      if (print_ids) {
        out << join_ids(ids) << "\n";
      } else {
        for (TokenId id : ids) out << bpe.symbol_text(id) << "\n";
      }
    } else if (*detok) {
      const BpeModel bpe = load_vocab(vocab_path);
      out << detokenize(bpe, parse_ids(ids_text), DetokenizeOptions{separator}) << "\n";
    } else if (*init) {
      config.activation = parse_activation(activation);
      config.softmax_mode = parse_softmax_mode(softmax_mode);
      config.mlp_hidden = mlp_hidden > 0 ? mlp_hidden : 4 * config.d;
      save_model(init_model(config, seed), out_path);
      out << "parameters " << config.parameter_count() << "\n";
    } else if (*forward) {
      const TransformerModel model = load_model(model_path);
      const BpeModel bpe = load_vocab(vocab_path);
      require_matching_vocab(model, bpe);
      const Vector logits = next_token_logits(model, context_tokens(model, bpe, text));
      for (double v : logits.values()) out << format_double(v) << "\n";
    } else if (*predict) {
      const TransformerModel model = load_model(model_path);
      const BpeModel bpe = load_vocab(vocab_path);
      require_matching_vocab(model, bpe);
      const Vector probs = next_token_distribution(model, context_tokens(model, bpe, text)).probs;
      std::vector<std::size_t> order(probs.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
      for (std::size_t i = 0; i < std::min(top_k, order.size()); ++i) {
        const auto id = static_cast<TokenId>(order[i]);
        out << id << "\t" << bpe.symbol_text(id) << "\t" << format_double(probs[id]) << "\n";
      }
    } else if (*gen) {
      const TransformerModel model = load_model(model_path);
      const BpeModel bpe = load_vocab(vocab_path);
      GenerationStrategy how;
      if (strategy == "greedy") {
        how = GenerationStrategy::greedy();
      } else if (strategy == "sample") {
        how = GenerationStrategy::sample(temperature, seed);
      } else {
        err << "error: --strategy must be greedy or sample\n";
        return kExitUsage;
      }
      out << generate(model, bpe, prompt, steps, how) << "\n";
    } else if (*inspect) {
      const TransformerModel model = load_model(model_path);
      const auto& c = model.config();
      out << "n_vocab " << c.n_vocab << "\n"
          << "n_ctx " << c.n_ctx << "\n"
          << "d " << c.d << "\n"
          << "d_head " << c.d_head << "\n"
          << "n_heads " << c.n_heads << "\n"
          << "n_blocks " << c.n_blocks << "\n"
          << "mlp_depth " << c.mlp_depth << "\n"
          << "mlp_hidden " << c.mlp_hidden << "\n"
          << "activation " << to_string(c.activation) << "\n"
          << "softmax_mode " << to_string(c.softmax_mode) << "\n"
          << "tied_embedding " << (c.tied_embedding ? "true" : "false") << "\n"
          << "attention_scale " << (c.attention_scale ? "true" : "false") << "\n"
          << "parameters " << model.parameter_count() << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace minigpt
