#pragma once

// Ratings ingestion, per-user binarization against the user's mean rating,
// per-user train/validation/test splitting, history sampling and
// negative-sampled training examples.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace crmman::data {

struct RatingRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
};

struct RatingsSchema {
  char delimiter = '\t';
  double rating_min = 0.0;
  double rating_max = 5.0;
  /// Fraction of malformed lines above which ingestion fails.
  double max_malformed_fraction = 0.01;
};

struct ParsedRatings {
  std::vector<RatingRecord> records;
  std::size_t malformed = 0;
  std::vector<std::size_t> malformed_lines;  // 1-based
};

/// One record per well-formed line; a fourth timestamp column is ignored.
/// Throws IoError if the file cannot be read and IngestionError when more
/// than `schema.max_malformed_fraction` of the lines are malformed.
ParsedRatings parse_ratings(const std::filesystem::path& path, const RatingsSchema& schema = {});
ParsedRatings parse_ratings_text(const std::string& text, const RatingsSchema& schema = {});

enum class SplitTag : std::uint8_t { train, validation, test };

const char* to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& text);

struct Interaction {
  std::size_t user = 0;
  std::size_t item = 0;
  double rating = 0.0;
  int label = 0;
  SplitTag split = SplitTag::train;
};

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t ratings = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  double sparsity = 0.0;  // ratings / (users * items)
};

/// The binarized interaction matrix. Interactions are grouped by user in
/// ascending user index; `user_offset[u]..user_offset[u+1]` is user u's range.
/// Immutable once built and safe to share between threads.
struct InteractionDataset {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<double> user_mean;
  std::vector<Interaction> interactions;
  std::vector<std::size_t> user_offset{0};
  std::size_t dropped_users = 0;
  /// Users holding both labels whose test split still ended single-class.
  std::vector<std::size_t> single_class_test_users;

  std::size_t user_count() const { return user_ids.size(); }
  std::size_t item_count() const { return item_ids.size(); }
  std::span<const Interaction> user_records(std::size_t user) const {
    return std::span(interactions).subspan(user_offset[user],
                                           user_offset[user + 1] - user_offset[user]);
  }
  std::optional<std::size_t> find_user(const std::string& id) const;
  std::optional<std::size_t> find_item(const std::string& id) const;
  DatasetStats stats() const;

  /// Rebuilds lookup tables after the id vectors change.
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> user_index_;
  std::unordered_map<std::string, std::size_t> item_index_;
};

/// Label 1 iff rating > user mean (ties are 0). Users with fewer than
/// `min_records` records are dropped. Users and items are indexed in order
/// of first appearance among retained users.
InteractionDataset binarize(std::span<const RatingRecord> records, std::size_t min_records = 10);

/// Keeps only records whose item is in `keep`.
std::vector<RatingRecord> filter_items(std::span<const RatingRecord> records,
                                       const std::vector<std::string>& keep);

struct SplitConfig {
  double train_fraction = 0.7;
  double validation_fraction_of_train = 0.1;
};

/// Per-user random split: round(train_fraction*n) records go to the
/// training side, round(validation_fraction*train_side) of those become
/// validation, the rest of the user's records are test. When the user has
/// both labels but the test side lacks one, a training record of the
/// missing label is swapped in if training keeps at least one of it.
InteractionDataset split(InteractionDataset dataset, const SplitConfig& config, std::uint64_t seed);

struct UserHistory {
  std::size_t user = 0;
  std::vector<std::size_t> prefer_items;
  std::vector<std::size_t> dislike_items;
};

struct HistoryOutcome {
  std::optional<UserHistory> history;
  std::string exclusion_reason;
};

/// Samples exactly `b` train-split prefer and dislike items. With at least
/// `b` candidates the draw is uniform without replacement; with fewer, every
/// candidate is taken once and the remainder drawn with replacement.
HistoryOutcome build_history(const InteractionDataset& dataset, std::size_t user, std::size_t b,
                             std::uint64_t seed);

struct HistorySet {
  std::vector<std::optional<UserHistory>> by_user;
  std::vector<std::string> exclusions;

  std::size_t included() const;
};

HistorySet build_histories(const InteractionDataset& dataset, std::size_t b, std::uint64_t seed);

struct TrainExample {
  std::size_t user = 0;
  std::size_t positive_item = 0;
  std::vector<std::size_t> negative_items;
};

/// One example per train-split positive of every user with a history, each
/// with `r` negatives from that user's train-split dislikes (without
/// replacement when there are at least `r`). Examples are shuffled and cut
/// into batches of `batch_size`; the last batch may be short.
std::vector<std::vector<TrainExample>> sample_training_batches(const InteractionDataset& dataset,
                                                               const HistorySet& histories,
                                                               std::size_t r,
                                                               std::size_t batch_size,
                                                               std::uint64_t seed);

// Persistence -----------------------------------------------------------------

/// Tab-separated "user item rating label split" lines after a version header.
void write_dataset(const InteractionDataset& dataset, const std::filesystem::path& path);
InteractionDataset read_dataset(const std::filesystem::path& path);

/// Key-value manifest: users, items, ratings, positive, negative, sparsity,
/// dropped_users, then any `extra` pairs in order.
std::string manifest_text(const InteractionDataset& dataset,
                          const std::vector<std::pair<std::string, std::string>>& extra = {});

}  // namespace crmman::data
