// SPDX-License-Identifier: Apache-2.0
#include "minigpt/serialization.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "minigpt/errors.hpp"
#include "minigpt/utf8.hpp"

namespace minigpt {

using json = nlohmann::json;

namespace {

json tensor_json(const Matrix& m) { return {{"shape", {m.rows(), m.cols()}}, {"data", m.entries()}}; }

json tensor_json(const Vector& v) { return {{"shape", {v.size()}}, {"data", v.entries()}}; }

const json& field(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw LoadError(where + ": missing field \"" + key + "\"");
  return obj.at(key);
}

std::vector<double> tensor_data(const json& t, std::size_t expected, const std::string& name) {
  const json& data = field(t, "data", name);
  if (!data.is_array()) throw LoadError(name + ": \"data\" is not an array");
  if (data.size() != expected) {
    throw LoadError(name + ": holds " + std::to_string(data.size()) + " values, shape requires " +
                    std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].is_number()) throw LoadError(name + ": entry " + std::to_string(i) + " is not a finite number");
    const double v = data[i].get<double>();
    if (!std::isfinite(v)) throw LoadError(name + ": entry " + std::to_string(i) + " is not finite");
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> tensor_shape(const json& t, const std::string& name) {
  const json& shape = field(t, "shape", name);
  if (!shape.is_array()) throw LoadError(name + ": \"shape\" is not an array");
  std::vector<std::size_t> out;
  for (const auto& s : shape) {
    if (!s.is_number_unsigned()) throw LoadError(name + ": shape entries must be non-negative integers");
    out.push_back(s.get<std::size_t>());
  }
  return out;
}

Matrix read_matrix(const json& parent, const std::string& key, std::size_t rows, std::size_t cols,
                   const std::string& name) {
  const json& t = field(parent, key, name);
  const auto shape = tensor_shape(t, name);
  if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
    std::string got;
    for (std::size_t i = 0; i < shape.size(); ++i) got += (i ? "x" : "") + std::to_string(shape[i]);
    throw LoadError(name + ": shape " + got + " does not match the config (expected " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ")");
  }
  return Matrix(rows, cols, tensor_data(t, rows * cols, name));
}

Vector read_vector(const json& t, std::size_t len, const std::string& name) {
  const auto shape = tensor_shape(t, name);
  if (shape.size() != 1 || shape[0] != len) {
    throw LoadError(name + ": shape does not match the config (expected " + std::to_string(len) + ")");
  }
  return Vector(tensor_data(t, len, name));
}

json config_json(const ModelConfig& c) {
  return {{"n_vocab", c.n_vocab},
          {"n_ctx", c.n_ctx},
          {"d", c.d},
          {"d_head", c.d_head},
          {"n_heads", c.n_heads},
          {"n_blocks", c.n_blocks},
          {"mlp_depth", c.mlp_depth},
          {"mlp_hidden", c.mlp_hidden},
          {"activation", to_string(c.activation)},
          {"softmax_mode", to_string(c.softmax_mode)},
          {"tied_embedding", c.tied_embedding},
          {"attention_scale", c.attention_scale}};
}

std::size_t count_field(const json& cfg, const std::string& key) {
  const json& v = field(cfg, key, "config");
  if (!v.is_number_unsigned()) throw LoadError("config." + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

bool flag_field(const json& cfg, const std::string& key) {
  const json& v = field(cfg, key, "config");
  if (!v.is_boolean()) throw LoadError("config." + key + " must be a boolean");
  return v.get<bool>();
}

std::string string_field(const json& obj, const std::string& key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) throw LoadError(where + "." + key + " must be a string");
  return v.get<std::string>();
}

ModelConfig parse_config(const json& cfg) {
  ModelConfig c;
  c.n_vocab = count_field(cfg, "n_vocab");
  c.n_ctx = count_field(cfg, "n_ctx");
  c.d = count_field(cfg, "d");
  c.d_head = count_field(cfg, "d_head");
  c.n_heads = count_field(cfg, "n_heads");
  c.n_blocks = count_field(cfg, "n_blocks");
  c.mlp_depth = count_field(cfg, "mlp_depth");
  c.mlp_hidden = count_field(cfg, "mlp_hidden");
  c.tied_embedding = flag_field(cfg, "tied_embedding");
  c.attention_scale = flag_field(cfg, "attention_scale");
  try {
    c.activation = parse_activation(string_field(cfg, "activation", "config"));
    c.softmax_mode = parse_softmax_mode(string_field(cfg, "softmax_mode", "config"));
    c.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("config: ") + e.what());
  }
  return c;
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

}  // namespace

std::string model_to_json(const TransformerModel& model) {
  const auto& c = model.config();
  json tensors;
  tensors["W_E"] = tensor_json(model.embedding());
  if (!c.tied_embedding) tensors["W_U"] = tensor_json(model.unembedding());
  tensors["P"] = tensor_json(model.positional());
  json blocks = json::array();
  for (const auto& block : model.blocks()) {
    json heads = json::array();
    for (const auto& h : block.heads.heads()) {
      heads.push_back({{"W_Q", tensor_json(h.query())},
                       {"W_K", tensor_json(h.key())},
                       {"W_V", tensor_json(h.value())},
                       {"W_O", tensor_json(h.output())}});
    }
    json weights = json::array(), biases = json::array();
    for (const auto& w : block.mlp.weights()) weights.push_back(tensor_json(w));
    for (const auto& b : block.mlp.biases()) biases.push_back(tensor_json(b));
    blocks.push_back({{"heads", heads}, {"mlp", {{"W", weights}, {"b", biases}}}});
  }
  tensors["blocks"] = blocks;
  json doc = {{"format_version", kModelFormatVersion}, {"config", config_json(c)}, {"tensors", tensors}};
  return doc.dump(1) + "\n";
}

namespace {

TransformerModel parse_model(const std::string& text) {
  const json doc = parse_json(text, "model file");
  const json& version = field(doc, "format_version", "model file");
  if (!version.is_number_integer() || version.get<int>() != kModelFormatVersion) {
    throw LoadError("unsupported format_version " + version.dump() + " (expected " +
                    std::to_string(kModelFormatVersion) + ")");
  }
  const ModelConfig c = parse_config(field(doc, "config", "model file"));
  const json& tensors = field(doc, "tensors", "model file");

  Matrix embedding = read_matrix(tensors, "W_E", c.d, c.n_vocab, "W_E");
  std::optional<Matrix> unembedding;
  if (c.tied_embedding) {
    if (tensors.contains("W_U")) throw LoadError("W_U: present although config.tied_embedding is true");
  } else {
    unembedding = read_matrix(tensors, "W_U", c.n_vocab, c.d, "W_U");
  }
  Matrix positional = read_matrix(tensors, "P", c.n_ctx, c.d, "P");

  const json& blocks_json = field(tensors, "blocks", "tensors");
  if (!blocks_json.is_array() || blocks_json.size() != c.n_blocks) {
    throw LoadError("blocks: expected an array of " + std::to_string(c.n_blocks) + " blocks");
  }
  const auto widths = c.mlp_widths();
  std::vector<ResidualBlock> blocks;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    const std::string bname = "blocks[" + std::to_string(b) + "]";
    const json& bj = blocks_json[b];
    const json& heads_json = field(bj, "heads", bname);
    if (!heads_json.is_array() || heads_json.size() != c.n_heads) {
      throw LoadError(bname + ".heads: expected " + std::to_string(c.n_heads) + " heads");
    }
    std::vector<AttentionHead> heads;
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      const std::string hname = bname + ".heads[" + std::to_string(h) + "]";
      const json& hj = heads_json[h];
      Matrix q = read_matrix(hj, "W_Q", c.d_head, c.d, hname + ".W_Q");
      Matrix k = read_matrix(hj, "W_K", c.d_head, c.d, hname + ".W_K");
      Matrix v = read_matrix(hj, "W_V", c.d_head, c.d, hname + ".W_V");
      Matrix o = read_matrix(hj, "W_O", c.d, c.d_head, hname + ".W_O");
      heads.emplace_back(std::move(q), std::move(k), std::move(v), std::move(o), c.head_options());
    }
    const json& mj = field(bj, "mlp", bname);
    const json& wj = field(mj, "W", bname + ".mlp");
    const json& bjs = field(mj, "b", bname + ".mlp");
    if (!wj.is_array() || !bjs.is_array() || wj.size() != c.mlp_depth || bjs.size() != c.mlp_depth) {
      throw LoadError(bname + ".mlp: expected " + std::to_string(c.mlp_depth) + " weight matrices and bias vectors");
    }
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    for (std::size_t l = 0; l < c.mlp_depth; ++l) {
      const std::string wname = bname + ".mlp.W[" + std::to_string(l) + "]";
      const std::string bias_name = bname + ".mlp.b[" + std::to_string(l) + "]";
      json holder = {{"t", wj[l]}};
      weights.push_back(read_matrix(holder, "t", widths[l + 1], widths[l], wname));
      biases.push_back(read_vector(bjs[l], widths[l + 1], bias_name));
    }
    blocks.push_back({MultiHead(std::move(heads)), Mlp(std::move(weights), std::move(biases), c.activation)});
  }
  return TransformerModel(c, std::move(embedding), std::move(unembedding), std::move(positional), std::move(blocks));
}

}  // namespace

TransformerModel model_from_json(const std::string& text) {
  try {
    return parse_model(text);
  } catch (const LoadError&) {
    throw;
  } catch (const Error& e) {
    throw LoadError(e.what());
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed model file: ") + e.what());
  }
}

std::string vocab_to_json(const BpeModel& bpe) {
  json alphabet = json::array();
  for (char32_t cp : bpe.alphabet()) alphabet.push_back(utf8::encode(cp));
  json merges = json::array();
  for (const auto& r : bpe.merges()) merges.push_back({r.left, r.right});
  json doc = {{"alphabet", alphabet},
              {"specials", {"<eow>", "<eoa>"}},
              {"merges", merges},
              {"n_vocab", bpe.n_vocab()}};
  return doc.dump(1) + "\n";
}

BpeModel vocab_from_json(const std::string& text) {
  const json doc = parse_json(text, "vocabulary file");
  const json& alphabet_json = field(doc, "alphabet", "vocabulary");
  if (!alphabet_json.is_array()) throw LoadError("alphabet: expected an array");
  std::vector<char32_t> alphabet;
  for (std::size_t i = 0; i < alphabet_json.size(); ++i) {
    if (!alphabet_json[i].is_string()) throw LoadError("alphabet[" + std::to_string(i) + "] is not a string");
    const auto s = alphabet_json[i].get<std::string>();
    if (utf8::find_invalid(s)) throw LoadError("alphabet[" + std::to_string(i) + "] is not valid UTF-8");
    const auto cps = utf8::decode(s);
    if (cps.size() != 1) throw LoadError("alphabet[" + std::to_string(i) + "] must hold exactly one character");
    alphabet.push_back(cps.front());
  }
  if (field(doc, "specials", "vocabulary") != json{"<eow>", "<eoa>"}) {
    throw LoadError("specials: expected [\"<eow>\", \"<eoa>\"]");
  }
  const json& merges_json = field(doc, "merges", "vocabulary");
  if (!merges_json.is_array()) throw LoadError("merges: expected an array");
  std::vector<std::pair<TokenId, TokenId>> merges;
  for (std::size_t i = 0; i < merges_json.size(); ++i) {
    const json& m = merges_json[i];
    if (!m.is_array() || m.size() != 2 || !m[0].is_number_unsigned() || !m[1].is_number_unsigned()) {
      throw LoadError("merges[" + std::to_string(i) + "] must be a pair of token ids");
    }
    const auto left = m[0].get<std::uint64_t>(), right = m[1].get<std::uint64_t>();
    if (left > 0xFFFFFFFFu || right > 0xFFFFFFFFu) throw LoadError("merges[" + std::to_string(i) + "]: id out of range");
    merges.emplace_back(static_cast<TokenId>(left), static_cast<TokenId>(right));
  }
  BpeModel bpe;
  try {
    bpe = BpeModel::create(std::move(alphabet), merges);
  } catch (const Error& e) {
    throw LoadError(std::string("vocabulary: ") + e.what());
  }
  const json& n = field(doc, "n_vocab", "vocabulary");
  if (!n.is_number_unsigned() || n.get<std::size_t>() != bpe.n_vocab()) {
    throw LoadError("n_vocab " + n.dump() + " does not equal 2 + |alphabet| + |merges| = " +
                    std::to_string(bpe.n_vocab()));
  }
  return bpe;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << contents;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_model(const TransformerModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_json(model));
}

TransformerModel load_model(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return model_from_json(text);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

void save_vocab(const BpeModel& bpe, const std::filesystem::path& path) { write_file_atomic(path, vocab_to_json(bpe)); }

BpeModel load_vocab(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return vocab_from_json(text);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace minigpt
