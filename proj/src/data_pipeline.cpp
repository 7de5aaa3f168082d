#include "crmman/data_pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "crmman/errors.hpp"
#include "crmman/random.hpp"

namespace crmman::data {
namespace {

std::vector<std::string_view> split_line(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Draws exactly `b` entries from `pool` (see build_history).
std::vector<std::size_t> sample_exactly(std::vector<std::size_t> pool, std::size_t b, Rng& rng) {
  for (std::size_t i = pool.size(); i > 1; --i) {
    std::swap(pool[i - 1], pool[uniform_index(rng, i)]);
  }
  if (pool.size() >= b) {
    pool.resize(b);
    return pool;
  }
  std::vector<std::size_t> out = pool;
  while (out.size() < b) out.push_back(pool[uniform_index(rng, pool.size())]);
  return out;
}

}  // namespace

const char* to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::validation: return "validation";
    case SplitTag::test: return "test";
  }
  return "?";
}

SplitTag split_tag_from_string(const std::string& text) {
  if (text == "train") return SplitTag::train;
  if (text == "validation") return SplitTag::validation;
  if (text == "test") return SplitTag::test;
  throw IngestionError("unknown split tag '" + text + "'");
}

ParsedRatings parse_ratings_text(const std::string& text, const RatingsSchema& schema) {
  ParsedRatings out;
  std::size_t line_no = 0;
  std::size_t non_empty = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++non_empty;
    const auto fields = split_line(line, schema.delimiter);
    std::optional<double> rating;
    if (fields.size() >= 3 && fields.size() <= 4) rating = parse_double(fields[2]);
    const bool ok = rating && !trim(fields[0]).empty() && !trim(fields[1]).empty() &&
                    *rating >= schema.rating_min && *rating <= schema.rating_max;
    if (!ok) {
      ++out.malformed;
      out.malformed_lines.push_back(line_no);
      continue;
    }
    out.records.push_back({std::string(trim(fields[0])), std::string(trim(fields[1])), *rating});
  }
  if (non_empty > 0 &&
      static_cast<double>(out.malformed) > schema.max_malformed_fraction * static_cast<double>(non_empty)) {
    std::ostringstream msg;
    msg << out.malformed << " of " << non_empty << " rating lines malformed; lines:";
    for (std::size_t i = 0; i < out.malformed_lines.size() && i < 20; ++i) msg << ' ' << out.malformed_lines[i];
    if (out.malformed_lines.size() > 20) msg << " ...";
    throw IngestionError(msg.str());
  }
  return out;
}

ParsedRatings parse_ratings(const std::filesystem::path& path, const RatingsSchema& schema) {
  return parse_ratings_text(read_file(path), schema);
}

// ---------------------------------------------------------------------------

std::optional<std::size_t> InteractionDataset::find_user(const std::string& id) const {
  auto it = user_index_.find(id);
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> InteractionDataset::find_item(const std::string& id) const {
  auto it = item_index_.find(id);
  if (it == item_index_.end()) return std::nullopt;
  return it->second;
}

void InteractionDataset::reindex() {
  user_index_.clear();
  item_index_.clear();
  for (std::size_t i = 0; i < user_ids.size(); ++i) user_index_.emplace(user_ids[i], i);
  for (std::size_t i = 0; i < item_ids.size(); ++i) item_index_.emplace(item_ids[i], i);
}

DatasetStats InteractionDataset::stats() const {
  DatasetStats s;
  s.users = user_count();
  s.items = item_count();
  s.ratings = interactions.size();
  for (const auto& it : interactions) (it.label ? s.positive : s.negative)++;
  if (s.users && s.items) {
    s.sparsity = static_cast<double>(s.ratings) / (static_cast<double>(s.users) * static_cast<double>(s.items));
  }
  return s;
}

InteractionDataset binarize(std::span<const RatingRecord> records, std::size_t min_records) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = by_user.try_emplace(records[i].user_id);
    if (inserted) order.push_back(records[i].user_id);
    it->second.push_back(i);
  }

  InteractionDataset ds;
  std::unordered_map<std::string, std::size_t> item_index;
  for (const auto& user_id : order) {
    const auto& rows = by_user[user_id];
    if (rows.size() < min_records) {
      ++ds.dropped_users;
      continue;
    }
    double total = 0.0;
    for (std::size_t r : rows) total += records[r].rating;
    const double mean = total / static_cast<double>(rows.size());
    const std::size_t user = ds.user_ids.size();
    ds.user_ids.push_back(user_id);
    ds.user_mean.push_back(mean);
    for (std::size_t r : rows) {
      auto [it, inserted] = item_index.try_emplace(records[r].item_id, ds.item_ids.size());
      if (inserted) ds.item_ids.push_back(records[r].item_id);
      ds.interactions.push_back({user, it->second, records[r].rating,
                                 records[r].rating > mean ? 1 : 0, SplitTag::train});
    }
    ds.user_offset.push_back(ds.interactions.size());
  }
  ds.reindex();
  return ds;
}

std::vector<RatingRecord> filter_items(std::span<const RatingRecord> records,
                                       const std::vector<std::string>& keep) {
  std::unordered_map<std::string, bool> allowed;
  for (const auto& id : keep) allowed.emplace(id, true);
  std::vector<RatingRecord> out;
  for (const auto& r : records) {
    if (allowed.contains(r.item_id)) out.push_back(r);
  }
  return out;
}

InteractionDataset split(InteractionDataset dataset, const SplitConfig& config, std::uint64_t seed) {
  if (!(config.train_fraction > 0.0 && config.train_fraction <= 1.0) ||
      !(config.validation_fraction_of_train >= 0.0 && config.validation_fraction_of_train < 1.0)) {
    throw ConfigError("split fractions out of range");
  }
  dataset.single_class_test_users.clear();
  for (std::size_t u = 0; u < dataset.user_count(); ++u) {
    const std::size_t begin = dataset.user_offset[u];
    const std::size_t n = dataset.user_offset[u + 1] - begin;
    const auto train_side = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(
        std::llround(config.validation_fraction_of_train * static_cast<double>(train_side)));
    const std::size_t n_test = n - train_side;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), begin);
    Rng rng = make_rng(seed, "split", u);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t k = 0; k < n; ++k) {
      SplitTag tag = k < n_test ? SplitTag::test : (k < n_test + n_val ? SplitTag::validation : SplitTag::train);
      dataset.interactions[order[k]].split = tag;
    }
    if (n_test == 0) continue;

    auto count = [&](int label, SplitTag tag) {
      std::size_t c = 0;
      for (std::size_t k = begin; k < begin + n; ++k) {
        const auto& it = dataset.interactions[k];
        c += (it.label == label && it.split == tag) ? 1 : 0;
      }
      return c;
    };
    for (int missing : {0, 1}) {
      const std::size_t in_test = count(missing, SplitTag::test);
      const std::size_t in_train = count(missing, SplitTag::train);
      if (in_test > 0 || in_train + count(missing, SplitTag::validation) == 0) continue;
      if (in_train >= 2) {
        // swap the first train record of the missing label with the first test record
        std::size_t from = 0, to = 0;
        for (std::size_t k : order) {
          const auto& it = dataset.interactions[k];
          if (!from && it.split == SplitTag::train && it.label == missing) from = k + 1;
          if (!to && it.split == SplitTag::test) to = k + 1;
        }
        dataset.interactions[from - 1].split = SplitTag::test;
        dataset.interactions[to - 1].split = SplitTag::train;
      } else {
        dataset.single_class_test_users.push_back(u);
      }
    }
  }
  return dataset;
}

HistoryOutcome build_history(const InteractionDataset& dataset, std::size_t user, std::size_t b,
                             std::uint64_t seed) {
  if (user >= dataset.user_count()) throw UsageError("build_history: unknown user index " + std::to_string(user));
  if (b == 0) throw ConfigError("build_history: B must be positive");
  std::vector<std::size_t> prefer, dislike;
  for (const auto& it : dataset.user_records(user)) {
    if (it.split != SplitTag::train) continue;
    (it.label ? prefer : dislike).push_back(it.item);
  }
  const std::string& id = dataset.user_ids[user];
  if (prefer.empty()) return {std::nullopt, "user " + id + " has no train-split preferred items"};
  if (dislike.empty()) return {std::nullopt, "user " + id + " has no train-split disliked items"};

  Rng rng = make_rng(seed, "history", user);
  UserHistory h;
  h.user = user;
  h.prefer_items = sample_exactly(std::move(prefer), b, rng);
  h.dislike_items = sample_exactly(std::move(dislike), b, rng);
  return {std::move(h), {}};
}

std::size_t HistorySet::included() const {
  return static_cast<std::size_t>(std::count_if(by_user.begin(), by_user.end(),
                                                [](const auto& h) { return h.has_value(); }));
}

HistorySet build_histories(const InteractionDataset& dataset, std::size_t b, std::uint64_t seed) {
  HistorySet set;
  set.by_user.reserve(dataset.user_count());
  for (std::size_t u = 0; u < dataset.user_count(); ++u) {
    auto outcome = build_history(dataset, u, b, seed);
    if (!outcome.history) set.exclusions.push_back(outcome.exclusion_reason);
    set.by_user.push_back(std::move(outcome.history));
  }
  return set;
}

std::vector<std::vector<TrainExample>> sample_training_batches(const InteractionDataset& dataset,
                                                               const HistorySet& histories,
                                                               std::size_t r,
                                                               std::size_t batch_size,
                                                               std::uint64_t seed) {
  if (r == 0) throw ConfigError("negative sampling rate R must be at least 1");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<TrainExample> examples;
  for (std::size_t u = 0; u < dataset.user_count(); ++u) {
    if (u >= histories.by_user.size() || !histories.by_user[u]) continue;
    std::vector<std::size_t> positives, dislikes;
    for (const auto& it : dataset.user_records(u)) {
      if (it.split != SplitTag::train) continue;
      (it.label ? positives : dislikes).push_back(it.item);
    }
    Rng rng = make_rng(seed, "negatives", u);
    for (std::size_t pos : positives) {
      TrainExample ex{u, pos, {}};
      if (dislikes.size() >= r) {
        std::vector<std::size_t> pool = dislikes;
        for (std::size_t k = 0; k < r; ++k) {
          std::swap(pool[k], pool[k + uniform_index(rng, pool.size() - k)]);
        }
        ex.negative_items.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(r));
      } else {
        for (std::size_t k = 0; k < r; ++k) ex.negative_items.push_back(dislikes[uniform_index(rng, dislikes.size())]);
      }
      examples.push_back(std::move(ex));
    }
  }
  Rng rng = make_rng(seed, "shuffle");
  for (std::size_t i = examples.size(); i > 1; --i) std::swap(examples[i - 1], examples[uniform_index(rng, i)]);

  std::vector<std::vector<TrainExample>> batches;
  for (std::size_t i = 0; i < examples.size(); i += batch_size) {
    const std::size_t end = std::min(examples.size(), i + batch_size);
    batches.emplace_back(std::make_move_iterator(examples.begin() + static_cast<std::ptrdiff_t>(i)),
                         std::make_move_iterator(examples.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  return batches;
}

// ---------------------------------------------------------------------------

namespace {
constexpr const char* kDatasetHeader = "# crmman-dataset v1";
}

void write_dataset(const InteractionDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kDatasetHeader << '\n';
  char buf[64];
  for (const auto& it : dataset.interactions) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, it.rating);
    out << dataset.user_ids[it.user] << '\t' << dataset.item_ids[it.item] << '\t'
        << std::string_view(buf, static_cast<std::size_t>(end - buf)) << '\t' << it.label << '\t'
        << to_string(it.split) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

InteractionDataset read_dataset(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || trim(line) != kDatasetHeader) {
    throw IngestionError(path.string() + ": missing dataset header");
  }
  InteractionDataset ds;
  std::unordered_map<std::string, std::size_t> users, items;
  std::vector<double> rating_sum;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_line(line, '\t');
    const auto rating = f.size() == 5 ? parse_double(f[2]) : std::nullopt;
    if (!rating || (f[3] != "0" && f[3] != "1")) {
      throw IngestionError(path.string() + ": malformed line " + std::to_string(line_no));
    }
    auto [uit, new_user] = users.try_emplace(std::string(f[0]), ds.user_ids.size());
    if (new_user) {
      if (!ds.user_ids.empty() && ds.user_offset.back() != ds.interactions.size()) {
        ds.user_offset.push_back(ds.interactions.size());
      }
      ds.user_ids.emplace_back(f[0]);
      rating_sum.push_back(0.0);
    } else if (uit->second != ds.user_ids.size() - 1) {
      throw IngestionError(path.string() + ": records of user " + std::string(f[0]) + " are not contiguous");
    }
    auto [iit, new_item] = items.try_emplace(std::string(f[1]), ds.item_ids.size());
    if (new_item) ds.item_ids.emplace_back(f[1]);
    rating_sum[uit->second] += *rating;
    ds.interactions.push_back({uit->second, iit->second, *rating, f[3] == "1" ? 1 : 0,
                               split_tag_from_string(std::string(trim(f[4])))});
  }
  if (!ds.user_ids.empty()) ds.user_offset.push_back(ds.interactions.size());
  for (std::size_t u = 0; u < ds.user_count(); ++u) {
    const auto n = static_cast<double>(ds.user_offset[u + 1] - ds.user_offset[u]);
    ds.user_mean.push_back(rating_sum[u] / n);
  }
  ds.reindex();
  return ds;
}

std::string manifest_text(const InteractionDataset& dataset,
                          const std::vector<std::pair<std::string, std::string>>& extra) {
  const DatasetStats s = dataset.stats();
  std::ostringstream out;
  out.precision(6);
  out << "users=" << s.users << '\n'
      << "items=" << s.items << '\n'
      << "ratings=" << s.ratings << '\n'
      << "positive=" << s.positive << '\n'
      << "negative=" << s.negative << '\n'
      << "sparsity=" << s.sparsity << '\n'
      << "dropped_users=" << dataset.dropped_users << '\n';
  for (const auto& [k, v] : extra) out << k << '=' << v << '\n';
  return out.str();
}

}  // namespace crmman::data
