#include "crmman/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "crmman/errors.hpp"
#include "crmman/random.hpp"

namespace crmman::eval {

double auc(std::span<const ScoredLabel> samples) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start;
    while (end < order.size() && samples[order[end]].score == samples[order[start]].score) ++end;
    // Ranks start+1 .. end share their mean.
    const double mean_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) {
      if (samples[order[i]].label) {
        positive_rank_sum += mean_rank;
        ++positives;
      }
    }
    start = end;
  }
  const std::size_t negatives = samples.size() - positives;
  if (positives == 0 || negatives == 0) throw MetricError("AUC is undefined without both positive and negative samples");
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

double user_ndcg(std::vector<RankedItem> items, std::size_t k) {
  if (k == 0) throw ConfigError("NDCG cutoff K must be at least 1");
  std::stable_sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
  std::size_t positives = 0;
  for (const auto& it : items) positives += it.label ? 1 : 0;
  if (positives == 0) return -1.0;
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, items.size()); ++r) {
    if (items[r].label) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  double ideal = 0.0;
  for (std::size_t r = 0; r < std::min(k, positives); ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / ideal;
}

double ndcg_at_k(const std::vector<std::vector<RankedItem>>& per_user, std::size_t k) {
  if (k == 0) throw ConfigError("NDCG cutoff K must be at least 1");
  double total = 0.0;
  std::size_t users = 0;
  for (const auto& items : per_user) {
    const double v = user_ndcg(items, k);
    if (v < 0.0) continue;
    total += v;
    ++users;
  }
  if (users == 0) throw MetricError("NDCG is undefined: no user has a positive test item");
  return total / static_cast<double>(users);
}

std::vector<ScoredSample> score_split(Model& model, const ModelInputs& inputs, const data::InteractionDataset& dataset,
                                      const data::HistorySet& histories, data::SplitTag split,
                                      std::size_t* skipped_users) {
  const ad::Tensor items = model.item_embedding_values(inputs);
  std::vector<ScoredSample> out;
  std::size_t skipped = 0;
  for (std::size_t u = 0; u < dataset.user_count(); ++u) {
    const auto records = dataset.user_records(u);
    const bool any = std::any_of(records.begin(), records.end(), [&](const auto& r) { return r.split == split; });
    if (!any) continue;
    const auto& history = histories.by_user.at(u);
    if (!history) {
      ++skipped;
      continue;
    }
    const UserVectors user = model.user_vectors(items, *history, &inputs.item_ids);
    for (const auto& r : records) {
      if (r.split != split) continue;
      out.push_back({u, r.item, r.label, model.score(items, r.item, user)});
    }
  }
  if (skipped_users) *skipped_users = skipped;
  return out;
}

MetricReport compute_metrics(const std::vector<ScoredSample>& samples, const std::vector<std::size_t>& ks) {
  MetricReport report;
  report.samples = samples.size();
  std::vector<ScoredLabel> pooled;
  pooled.reserve(samples.size());
  std::vector<std::vector<RankedItem>> per_user;
  std::size_t current = static_cast<std::size_t>(-1);
  for (const auto& s : samples) {
    pooled.push_back({s.score, s.label});
    if (s.user != current || per_user.empty()) {
      per_user.emplace_back();
      current = s.user;
    }
    per_user.back().push_back({s.item, s.score, s.label});
  }
  report.users_scored = per_user.size();
  report.auc = auc(pooled);
  for (std::size_t k : ks) report.ndcg[k] = ndcg_at_k(per_user, k);
  return report;
}

MetricReport evaluate(Model& model, const ModelInputs& inputs, const data::InteractionDataset& dataset,
                      std::size_t history_size, std::uint64_t seed, const std::vector<std::size_t>& ks) {
  const auto histories = data::build_histories(dataset, history_size, evaluation_history_seed(seed));
  std::size_t skipped = 0;
  const auto samples = score_split(model, inputs, dataset, histories, data::SplitTag::test, &skipped);
  MetricReport report = compute_metrics(samples, ks);
  report.users_skipped = skipped;
  return report;
}

Model model_from_checkpoint(const Checkpoint& checkpoint, const ModelConfig& config,
                            const std::vector<std::string>& item_ids) {
  if (checkpoint.item_ids != item_ids) {
    const std::set<std::string> known(item_ids.begin(), item_ids.end());
    const std::set<std::string> stored(checkpoint.item_ids.begin(), checkpoint.item_ids.end());
    std::string unknown;
    for (const auto& id : stored) {
      if (!known.contains(id)) unknown += " " + id;
    }
    std::string missing;
    for (const auto& id : known) {
      if (!stored.contains(id)) missing += " " + id;
    }
    if (unknown.empty() && missing.empty()) {
      throw IngestionError("checkpoint item order differs from the dataset item order");
    }
    std::string msg = "checkpoint vocabulary does not match the dataset.";
    if (!unknown.empty()) msg += " Unknown to dataset:" + unknown + ".";
    if (!missing.empty()) msg += " Missing from checkpoint:" + missing + ".";
    throw IngestionError(msg);
  }
  return Model(config, checkpoint.params);
}

RunOutcome run_seed(const ExperimentData& data, const ModelConfig& model_config, const TrainConfig& train_config,
                    const data::SplitConfig& split_config, std::uint64_t seed) {
  const data::InteractionDataset dataset = data::split(data.dataset, split_config, derive_seed(seed, "split"));
  const ModelInputs inputs = make_model_inputs(dataset.item_ids, data.graph, data.texts, model_config, seed);
  TrainResult trained = train(dataset, inputs, model_config, train_config, seed);
  Model model(model_config, trained.best.params);
  RunOutcome outcome;
  outcome.seed = seed;
  outcome.test = evaluate(model, inputs, dataset, train_config.history_size, seed);
  outcome.w1 = model.w1();
  outcome.w2 = model.w2();
  outcome.best_epoch = trained.best_epoch;
  outcome.log = std::move(trained.log);
  return outcome;
}

Variant variant_from_string(const std::string& name) {
  for (Variant v : {Variant::full, Variant::semantic_only, Variant::structural_only, Variant::single_view,
                    Variant::concat, Variant::average}) {
    if (name == to_string(v)) return v;
  }
  throw ConfigError("unknown variant '" + name +
                    "' (expected full, semantic_only, structural_only, single_view, concat or average)");
}

const char* to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::semantic_only: return "semantic_only";
    case Variant::structural_only: return "structural_only";
    case Variant::single_view: return "single_view";
    case Variant::concat: return "concat";
    case Variant::average: return "average";
  }
  return "?";
}

ModelConfig apply_variant(ModelConfig base, Variant variant) {
  switch (variant) {
    case Variant::full: break;
    case Variant::semantic_only: base.use_structural = false; break;
    case Variant::structural_only: base.use_semantic = false; break;
    case Variant::single_view: base.user.multi_view = false; break;
    case Variant::concat: base.aggregation = aggregate::Aggregation::concatenate; break;
    case Variant::average: base.aggregation = aggregate::Aggregation::average; break;
  }
  return base;
}

SeriesSummary summarize(std::vector<double> values) {
  SeriesSummary s;
  s.values = std::move(values);
  if (s.values.empty()) return s;
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(s.values.size());
  if (s.values.size() > 1) {
    double sq = 0.0;
    for (double v : s.values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(s.values.size() - 1));
  }
  return s;
}

SeriesSummary VariantResult::auc() const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.test.auc);
  return summarize(std::move(v));
}

SeriesSummary VariantResult::ndcg(std::size_t k) const {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.test.ndcg.at(k));
  return summarize(std::move(v));
}

AblationReport ablate(const ExperimentData& data, const std::vector<Variant>& variants, const ModelConfig& base,
                      const TrainConfig& train_config, const data::SplitConfig& split_config,
                      const std::vector<std::uint64_t>& seeds, std::size_t threads) {
  AblationReport report;
  report.seeds = seeds;
  for (Variant v : variants) {
    apply_variant(base, v).validate();
    report.variants.push_back({v, std::vector<RunOutcome>(seeds.size())});
  }
  const std::size_t jobs = variants.size() * seeds.size();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      const std::size_t vi = job / seeds.size();
      const std::size_t si = job % seeds.size();
      try {
        report.variants[vi].runs[si] =
            run_seed(data, apply_variant(base, variants[vi]), train_config, split_config, seeds[si]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t count = std::max<std::size_t>(1, std::min(threads, jobs));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return report;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

const char* kMetricHeader =
    "# metrics: pooled test AUC (ties count 1/2); NDCG@K with binary gains, users without test positives skipped,\n"
    "# score ties ranked by ascending item index\n";

}  // namespace

std::string metric_report_text(const MetricReport& report, const std::string& config_text) {
  std::ostringstream out;
  out << kMetricHeader;
  out << "auc=" << num(report.auc) << '\n';
  for (const auto& [k, v] : report.ndcg) out << "ndcg@" << k << '=' << num(v) << '\n';
  out << "samples=" << report.samples << '\n';
  out << "users_scored=" << report.users_scored << '\n';
  out << "users_skipped=" << report.users_skipped << '\n';
  out << "[config]\n" << config_text;
  return out.str();
}

std::string report_text(const AblationReport& report, const std::string& config_text) {
  std::ostringstream out;
  out << kMetricHeader;
  out << "seeds=";
  for (std::size_t i = 0; i < report.seeds.size(); ++i) out << (i ? "," : "") << report.seeds[i];
  out << "\n\n";
  std::vector<std::size_t> ks;
  if (!report.variants.empty() && !report.variants.front().runs.empty()) {
    for (const auto& [k, v] : report.variants.front().runs.front().test.ndcg) ks.push_back(k);
  }
  auto metric_lines = [&](const VariantResult& vr) {
    std::vector<std::pair<std::string, SeriesSummary>> rows{{"auc", vr.auc()}};
    for (std::size_t k : ks) rows.emplace_back("ndcg@" + std::to_string(k), vr.ndcg(k));
    return rows;
  };
  for (const auto& vr : report.variants) {
    out << "[variant " << to_string(vr.variant) << "]\n";
    for (const auto& [name, s] : metric_lines(vr)) {
      out << name << " per_seed=";
      for (std::size_t i = 0; i < s.values.size(); ++i) out << (i ? "," : "") << num(s.values[i]);
      out << " mean=" << num(s.mean) << " std=" << num(s.stddev) << '\n';
    }
    bool multi = false;
    for (const auto& r : vr.runs) multi = multi || r.w2 != 0.0;
    if (multi) {
      for (const auto& r : vr.runs) {
        out << "weights seed=" << r.seed << " w1=" << num(r.w1) << " w2=" << num(r.w2) << '\n';
      }
    }
    out << "best_epochs=";
    for (std::size_t i = 0; i < vr.runs.size(); ++i) out << (i ? "," : "") << vr.runs[i].best_epoch;
    out << "\n\n";
  }
  if (report.variants.size() > 1) {
    const auto& reference = report.variants.front();
    const auto ref_rows = metric_lines(reference);
    out << "[deltas vs " << to_string(reference.variant) << "]\n";
    for (std::size_t v = 1; v < report.variants.size(); ++v) {
      const auto rows = metric_lines(report.variants[v]);
      for (std::size_t m = 0; m < rows.size(); ++m) {
        const auto& a = ref_rows[m].second.values;
        const auto& b = rows[m].second.values;
        std::size_t wins = 0;
        for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) wins += a[i] > b[i] ? 1 : 0;
        out << to_string(report.variants[v].variant) << ' ' << rows[m].first
            << " mean_delta=" << num(ref_rows[m].second.mean - rows[m].second.mean) << " reference_wins=" << wins
            << '/' << std::min(a.size(), b.size()) << '\n';
      }
    }
    out << '\n';
  }
  out << "[config]\n" << config_text;
  return out.str();
}

std::string plot_data(const AblationReport& report) {
  std::ostringstream out;
  out << "variant\tmetric\tmean\tstddev\n";
  for (const auto& vr : report.variants) {
    out << to_string(vr.variant) << "\tauc\t" << num(vr.auc().mean) << '\t' << num(vr.auc().stddev) << '\n';
    if (vr.runs.empty()) continue;
    for (const auto& [k, v] : vr.runs.front().test.ndcg) {
      const auto s = vr.ndcg(k);
      out << to_string(vr.variant) << "\tndcg@" << k << '\t' << num(s.mean) << '\t' << num(s.stddev) << '\n';
    }
  }
  return out.str();
}

}  // namespace crmman::eval
