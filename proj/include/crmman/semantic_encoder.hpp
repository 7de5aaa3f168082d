#pragma once

// Semantic item vectors: fixed-length token sequences, a pluggable sentence
// encoder (precomputed vectors or a trainable hashed bag of words) and the
// affine projection s = W v + b.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crmman/autodiff.hpp"

namespace crmman::semantic {

/// Padding token. Tokens are lowercased, so it never collides with text.
inline constexpr std::string_view kPadToken = "[PAD]";

struct TokenSequence {
  std::vector<std::string> tokens;  // exactly L entries
  std::size_t original_length = 0;
  bool empty_text = false;

  bool is_padding(std::size_t i) const { return tokens[i] == kPadToken; }
};

/// Whitespace tokenization, lowercased, truncated at the end or padded to `length`.
TokenSequence tokenize_pad(std::string_view text, std::size_t length);

enum class EncoderKind { precomputed, hashed_bow };

EncoderKind encoder_kind_from_string(const std::string& name);
const char* to_string(EncoderKind kind);

/// Sentence vectors exported from an external encoder.
///
/// Text format: a header line "item_count d_e", then one line per item
/// "item_id v_1 ... v_{d_e}". Binary format: the header line carries a third
/// field "binary"; each record is a little-endian u32 id length, the id
/// bytes, then d_e little-endian IEEE-754 doubles.
class PrecomputedEmbeddings {
 public:
  static PrecomputedEmbeddings load(const std::filesystem::path& path);
  void save_text(const std::filesystem::path& path) const;
  void save_binary(const std::filesystem::path& path) const;

  void insert(const std::string& item_id, std::vector<double> vector);
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return order_.size(); }
  bool contains(const std::string& item_id) const { return vectors_.contains(item_id); }
  /// The stored vector verbatim as a 1 x d_e row. Throws IngestionError
  /// naming the item when absent.
  ad::Tensor lookup(const std::string& item_id) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

std::size_t token_bucket(std::string_view token, std::size_t buckets);
/// Bucket ids of the non-padding tokens.
std::vector<std::size_t> bucket_bag(const TokenSequence& sequence, std::size_t buckets);

/// Hashed bag-of-words sentence vector: mean of the token-embedding rows of
/// the non-padding tokens; the zero vector for an all-padding sequence.
ad::Tensor encode_hashed_bow(const TokenSequence& sequence, const ad::Tensor& token_embeddings);

/// Recorded per-item mean of embedding rows; one bag per output row.
ad::Var bag_mean(ad::Var token_embeddings, const std::vector<std::vector<std::size_t>>& bags);

/// s = v W^T + b for each row v. W is d_h x d_e, b is 1 x d_h.
ad::Tensor project(const ad::Tensor& v, const ad::Tensor& weight, const ad::Tensor& bias);
ad::Var project(ad::Var v, ad::Var weight, ad::Var bias);

struct SemanticConfig {
  EncoderKind kind = EncoderKind::hashed_bow;
  std::size_t text_length = 50;
  std::size_t d_e = 256;
  std::size_t buckets = std::size_t{1} << 15;
  std::size_t d_h = 256;
};

inline constexpr const char* kTokenEmbeddingParam = "semantic.token_embedding";
inline constexpr const char* kProjectionWeightParam = "semantic.projection.W";
inline constexpr const char* kProjectionBiasParam = "semantic.projection.b";

/// Per-item encoder inputs, aligned with the item index order.
struct SemanticInputs {
  ad::Tensor precomputed;  // M x d_e, precomputed mode only
  std::vector<std::vector<std::size_t>> bags;  // hashed mode only
  std::vector<std::string> warnings;
};

/// Items without text get an empty bag and a warning in hashed mode; in
/// precomputed mode every item must have a vector (IngestionError listing
/// the missing ids otherwise).
SemanticInputs prepare_semantic_inputs(const std::vector<std::string>& item_ids,
                                       const std::map<std::string, std::string>& texts, const SemanticConfig& config,
                                       const PrecomputedEmbeddings* precomputed = nullptr);

void add_semantic_params(ad::ParameterStore& store, const SemanticConfig& config, std::uint64_t seed);

/// M x d_h semantic vectors.
ad::Var encode_semantic(ad::Tape& tape, ad::ParameterStore& store, const SemanticInputs& inputs,
                        const SemanticConfig& config);

/// Item-text file: "item_id<TAB>text" per line.
std::map<std::string, std::string> read_item_texts(const std::filesystem::path& path);
void write_item_texts(const std::map<std::string, std::string>& texts, const std::filesystem::path& path);

}  // namespace crmman::semantic
