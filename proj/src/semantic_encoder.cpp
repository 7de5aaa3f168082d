#include "crmman/semantic_encoder.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include "crmman/errors.hpp"
#include "crmman/random.hpp"

namespace crmman::semantic {

using ad::Tensor;
using ad::Var;

TokenSequence tokenize_pad(std::string_view text, std::size_t length) {
  if (length == 0) throw ConfigError("tokenize_pad: length must be at least 1");
  TokenSequence seq;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    ++seq.original_length;
    if (seq.tokens.size() < length) {
      std::transform(word.begin(), word.end(), word.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      seq.tokens.push_back(word);
    }
  }
  seq.empty_text = seq.original_length == 0;
  seq.tokens.resize(length, std::string(kPadToken));
  return seq;
}

EncoderKind encoder_kind_from_string(const std::string& name) {
  if (name == "precomputed") return EncoderKind::precomputed;
  if (name == "hashed_bow") return EncoderKind::hashed_bow;
  throw ConfigError("unknown semantic encoder '" + name + "'");
}

const char* to_string(EncoderKind kind) {
  return kind == EncoderKind::precomputed ? "precomputed" : "hashed_bow";
}

// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

void PrecomputedEmbeddings::insert(const std::string& item_id, std::vector<double> vector) {
  if (order_.empty() && dim_ == 0) dim_ = vector.size();
  if (vector.size() != dim_ || dim_ == 0) {
    throw DimensionError("precomputed vector for " + item_id + " has " + std::to_string(vector.size()) +
                         " entries, expected " + std::to_string(dim_));
  }
  if (!vectors_.contains(item_id)) order_.push_back(item_id);
  vectors_[item_id] = std::move(vector);
}

Tensor PrecomputedEmbeddings::lookup(const std::string& item_id) const {
  auto it = vectors_.find(item_id);
  if (it == vectors_.end()) throw IngestionError("no precomputed sentence vector for item " + item_id);
  return Tensor::row_vector(it->second);
}

PrecomputedEmbeddings PrecomputedEmbeddings::load(const std::filesystem::path& path) {
  const std::string content = read_all(path);
  const std::size_t eol = content.find('\n');
  std::istringstream header(content.substr(0, eol));
  std::size_t count = 0, dim = 0;
  std::string flag;
  if (!(header >> count >> dim) || dim == 0) throw IngestionError(path.string() + ": bad embedding header");
  header >> flag;
  PrecomputedEmbeddings out;
  out.dim_ = dim;
  if (flag == "binary") {
    std::size_t pos = eol + 1;
    for (std::size_t k = 0; k < count; ++k) {
      std::uint32_t len = 0;
      if (pos + 4 > content.size()) throw IngestionError(path.string() + ": truncated binary record");
      std::memcpy(&len, content.data() + pos, 4);
      pos += 4;
      if (pos + len + dim * 8 > content.size()) throw IngestionError(path.string() + ": truncated binary record");
      std::string id = content.substr(pos, len);
      pos += len;
      std::vector<double> v(dim);
      std::memcpy(v.data(), content.data() + pos, dim * 8);
      pos += dim * 8;
      out.insert(id, std::move(v));
    }
  } else {
    std::istringstream body(eol == std::string::npos ? std::string() : content.substr(eol + 1));
    std::string line;
    while (std::getline(body, line)) {
      std::istringstream fields(line);
      std::string id;
      if (!(fields >> id)) continue;
      std::vector<double> v;
      double x = 0.0;
      while (fields >> x) v.push_back(x);
      out.insert(id, std::move(v));
    }
  }
  if (out.size() != count) {
    throw IngestionError(path.string() + ": header declares " + std::to_string(count) + " items, found " +
                         std::to_string(out.size()));
  }
  return out;
}

void PrecomputedEmbeddings::save_text(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << size() << ' ' << dim_ << '\n';
  for (const auto& id : order_) {
    out << id;
    for (double v : vectors_.at(id)) out << ' ' << v;
    out << '\n';
  }
}

void PrecomputedEmbeddings::save_binary(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << size() << ' ' << dim_ << " binary\n";
  for (const auto& id : order_) {
    const auto len = static_cast<std::uint32_t>(id.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    out.write(reinterpret_cast<const char*>(vectors_.at(id).data()), static_cast<std::streamsize>(dim_ * 8));
  }
}

// ---------------------------------------------------------------------------

std::size_t token_bucket(std::string_view token, std::size_t buckets) {
  return static_cast<std::size_t>(fnv1a(token) % buckets);
}

std::vector<std::size_t> bucket_bag(const TokenSequence& sequence, std::size_t buckets) {
  std::vector<std::size_t> bag;
  for (std::size_t i = 0; i < sequence.tokens.size(); ++i) {
    if (!sequence.is_padding(i)) bag.push_back(token_bucket(sequence.tokens[i], buckets));
  }
  return bag;
}

Tensor encode_hashed_bow(const TokenSequence& sequence, const Tensor& token_embeddings) {
  const auto bag = bucket_bag(sequence, token_embeddings.rows());
  Tensor out = Tensor::matrix(1, token_embeddings.cols());
  if (bag.empty()) return out;
  for (std::size_t b : bag) {
    const auto row = token_embeddings.row(b);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  }
  for (double& v : out.values()) v /= static_cast<double>(bag.size());
  return out;
}

Var bag_mean(Var token_embeddings, const std::vector<std::vector<std::size_t>>& bags) {
  const Tensor& table = token_embeddings.value();
  const std::size_t d = table.cols();
  if (bags.empty()) throw DimensionError("bag_mean: no bags");
  Tensor out = Tensor::matrix(bags.size(), d);
  for (std::size_t r = 0; r < bags.size(); ++r) {
    if (bags[r].empty()) continue;
    auto orow = out.row(r);
    for (std::size_t b : bags[r]) {
      if (b >= table.rows()) throw DimensionError("bag_mean: bucket out of range");
      const auto trow = table.row(b);
      for (std::size_t c = 0; c < d; ++c) orow[c] += trow[c];
    }
    const double inv = 1.0 / static_cast<double>(bags[r].size());
    for (double& v : orow) v *= inv;
  }
  return token_embeddings.tape->record(std::move(out), {token_embeddings.id},
                                       [tid = token_embeddings.id, &bags](ad::Tape& t, ad::NodeId self) {
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad(tid);
    for (std::size_t r = 0; r < bags.size(); ++r) {
      if (bags[r].empty()) continue;
      const double inv = 1.0 / static_cast<double>(bags[r].size());
      const auto grow = g.row(r);
      for (std::size_t b : bags[r]) {
        auto trow = gt.row(b);
        for (std::size_t c = 0; c < trow.size(); ++c) trow[c] += inv * grow[c];
      }
    }
  });
}

Tensor project(const Tensor& v, const Tensor& weight, const Tensor& bias) {
  if (v.cols() != weight.cols() || bias.size() != weight.rows()) {
    throw ConfigError("project: sentence dimension " + std::to_string(v.cols()) + " with projection " +
                      ad::shape_string(weight.shape()) + " and bias " + ad::shape_string(bias.shape()));
  }
  Tensor out = ad::matmul(v, ad::transpose(weight));
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias[c];
  return out;
}

Var project(Var v, Var weight, Var bias) {
  if (v.cols() != weight.cols() || bias.value().size() != weight.rows()) {
    throw ConfigError("project: sentence dimension " + std::to_string(v.cols()) + " with projection " +
                      ad::shape_string(weight.shape()) + " and bias " + ad::shape_string(bias.shape()));
  }
  return ad::add_row_bias(ad::matmul(v, ad::transpose(weight)), bias);
}

// ---------------------------------------------------------------------------

SemanticInputs prepare_semantic_inputs(const std::vector<std::string>& item_ids,
                                       const std::map<std::string, std::string>& texts, const SemanticConfig& config,
                                       const PrecomputedEmbeddings* precomputed) {
  SemanticInputs inputs;
  if (config.kind == EncoderKind::precomputed) {
    if (!precomputed) throw ConfigError("precomputed semantic encoder requires an embedding file");
    if (precomputed->dim() != config.d_e) {
      throw ConfigError("precomputed vectors have d_e = " + std::to_string(precomputed->dim()) + ", config says " +
                        std::to_string(config.d_e));
    }
    std::vector<std::string> missing;
    inputs.precomputed = Tensor::matrix(item_ids.size(), config.d_e);
    for (std::size_t i = 0; i < item_ids.size(); ++i) {
      if (!precomputed->contains(item_ids[i])) {
        missing.push_back(item_ids[i]);
        continue;
      }
      const Tensor v = precomputed->lookup(item_ids[i]);
      std::copy(v.values().begin(), v.values().end(), inputs.precomputed.row(i).begin());
    }
    if (!missing.empty()) {
      std::string msg = "missing precomputed sentence vectors for items:";
      for (const auto& id : missing) msg += " " + id;
      throw IngestionError(msg);
    }
    return inputs;
  }
  for (const auto& id : item_ids) {
    auto it = texts.find(id);
    const TokenSequence seq = tokenize_pad(it == texts.end() ? std::string_view{} : std::string_view(it->second),
                                           config.text_length);
    if (seq.empty_text) inputs.warnings.push_back("item " + id + " has no text; semantic vector is the bias only");
    inputs.bags.push_back(bucket_bag(seq, config.buckets));
  }
  return inputs;
}

void add_semantic_params(ad::ParameterStore& store, const SemanticConfig& config, std::uint64_t seed) {
  if (config.d_e == 0 || config.d_h == 0 || config.buckets == 0) {
    throw ConfigError("semantic encoder dimensions must be positive");
  }
  if (config.kind == EncoderKind::hashed_bow) {
    Rng rng = make_rng(seed, "token_embedding");
    Tensor table = Tensor::matrix(config.buckets, config.d_e);
    for (double& v : table.values()) v = standard_normal(rng);
    store.add(kTokenEmbeddingParam, std::move(table));
  }
  store.add(kProjectionWeightParam, ad::glorot_uniform(config.d_h, config.d_e, derive_seed(seed, "projection")));
  store.add(kProjectionBiasParam, Tensor::matrix(1, config.d_h));
}

Var encode_semantic(ad::Tape& tape, ad::ParameterStore& store, const SemanticInputs& inputs,
                    const SemanticConfig& config) {
  Var sentences = config.kind == EncoderKind::precomputed
                      ? tape.constant(inputs.precomputed)
                      : bag_mean(tape.parameter(store, kTokenEmbeddingParam), inputs.bags);
  return project(sentences, tape.parameter(store, kProjectionWeightParam), tape.parameter(store, kProjectionBiasParam));
}

std::map<std::string, std::string> read_item_texts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) continue;
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

void write_item_texts(const std::map<std::string, std::string>& texts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [id, text] : texts) out << id << '\t' << text << '\n';
}

}  // namespace crmman::semantic
