// crmman: ingest, build-graph, synth, train, evaluate, ablate, predict,
// export-attention.
//
// Configuration layers, lowest first: built-in defaults, <data>/run.conf,
// --config FILE, CRMMAN_* environment variables, --<key> flags.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crmman/checkpoint.hpp"
#include "crmman/errors.hpp"
#include "crmman/evaluation.hpp"
#include "crmman/kg_structural.hpp"
#include "crmman/random.hpp"
#include "crmman/run_config.hpp"
#include "crmman/semantic_encoder.hpp"
#include "crmman/synthetic.hpp"

namespace fs = std::filesystem;
using namespace crmman;

namespace {

constexpr const char* kDatasetFile = "dataset.tsv";
constexpr const char* kGraphFile = "graph.tsv";
constexpr const char* kTextsFile = "texts.tsv";
constexpr const char* kRunConfigFile = "run.conf";

struct Layers {
  std::string config_file;
  std::map<std::string, std::string> flags;  // key -> value, only keys given on the command line
};

RunConfig layered_config(const Layers& layers, const fs::path& data_dir, const std::string& base = {}) {
  RunConfig cfg;
  if (!base.empty()) cfg.load_text(base, "preset");
  if (!data_dir.empty() && fs::exists(data_dir / kRunConfigFile)) cfg.load_file(data_dir / kRunConfigFile);
  if (!layers.config_file.empty()) cfg.load_file(layers.config_file);
  cfg.apply_environment();
  for (const auto& [k, v] : layers.flags) cfg.set(k, v);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw IoError("missing " + path.string() + " (" + hint + ")");
}

eval::ExperimentData load_data(const fs::path& dir) {
  const std::string hint = "run `crmman ingest` or `crmman synth` to create it";
  require_file(dir / kDatasetFile, hint);
  require_file(dir / kGraphFile, hint);
  eval::ExperimentData data;
  data.dataset = data::read_dataset(dir / kDatasetFile);
  data.graph = kg::read_edge_list(dir / kGraphFile, data.dataset.item_count());
  if (fs::exists(dir / kTextsFile)) data.texts = semantic::read_item_texts(dir / kTextsFile);
  return data;
}

/// Writes the artifacts shared by ingest and synth.
void write_artifacts(const fs::path& out, const data::InteractionDataset& dataset, const kg::ItemGraph& graph,
                     const std::map<std::string, std::string>& texts, const RunConfig& cfg,
                     std::vector<std::pair<std::string, std::string>> manifest_extra) {
  fs::create_directories(out);
  data::write_dataset(dataset, out / kDatasetFile);
  kg::write_edge_list(graph, out / kGraphFile);
  write_text(out / "graph_stats.json", kg::stats_json(kg::graph_stats(graph)));
  std::map<std::string, std::string> kept;
  for (const auto& id : dataset.item_ids) {
    if (auto it = texts.find(id); it != texts.end()) kept[id] = it->second;
  }
  semantic::write_item_texts(kept, out / kTextsFile);
  manifest_extra.emplace_back("graph_edges", std::to_string(graph.edge_count()));
  manifest_extra.emplace_back("seed", cfg.get("seed"));
  write_text(out / "manifest.txt", data::manifest_text(dataset, manifest_extra));
  write_text(out / kRunConfigFile, cfg.to_text());
}

int cmd_ingest(const Layers& layers, const fs::path& ratings_path, const fs::path& triples_path,
               const fs::path& texts_path, const fs::path& out) {
  const RunConfig cfg = layered_config(layers, {});
  const auto threshold = cfg.get_size("sm_threshold");
  if (!fs::exists(ratings_path)) throw IoError("ratings file not found: " + ratings_path.string());
  if (!fs::exists(triples_path)) throw IoError("triples file not found: " + triples_path.string());
  const auto ratings = data::parse_ratings(ratings_path, cfg.ratings_schema());
  const auto triples = kg::parse_triples(triples_path, cfg.get_double("max_malformed_fraction"));
  std::map<std::string, std::string> texts;
  if (!texts_path.empty()) {
    if (!fs::exists(texts_path)) throw IoError("texts file not found: " + texts_path.string());
    texts = semantic::read_item_texts(texts_path);
  } else {
    texts = kg::texts_from_triples(triples.triples);
  }

  std::vector<std::string> items;
  std::set<std::string> seen;
  for (const auto& r : ratings.records) {
    if (seen.insert(r.item_id).second) items.push_back(r.item_id);
  }
  const auto full = kg::build_item_graph(triples.triples, items, threshold);
  std::vector<std::string> keep;
  std::size_t no_text = 0, no_edge = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto it = texts.find(items[i]);
    const bool has_text = it != texts.end() && !it->second.empty();
    const bool has_edge = full.graph.degree(i) > 0;
    no_text += has_text ? 0 : 1;
    no_edge += has_edge ? 0 : 1;
    if (has_text && has_edge) keep.push_back(items[i]);
  }
  const auto filtered = data::filter_items(ratings.records, keep);
  const data::InteractionDataset dataset =
      data::binarize(filtered, cfg.get_size("min_user_records"));
  const auto build = kg::build_item_graph(triples.triples, dataset.item_ids, threshold);

  std::ostringstream report;
  report << "items_rated=" << items.size() << "\nitems_without_text=" << no_text << "\nitems_without_edge=" << no_edge
         << "\nitems_kept=" << keep.size() << "\nitems_in_dataset=" << dataset.item_count()
         << "\nisolated_after_user_filter=" << kg::graph_stats(build.graph).isolated.size()
         << "\nratings_malformed=" << ratings.malformed << "\ntriples_malformed=" << triples.malformed
         << "\ntriples_duplicates=" << triples.duplicates << "\nusers_dropped=" << dataset.dropped_users << '\n';
  fs::create_directories(out);
  write_text(out / "filter_report.txt", report.str());
  write_artifacts(out, dataset, build.graph, texts, cfg,
                  {{"sm_threshold", std::to_string(threshold)},
                   {"raw_ratings", std::to_string(ratings.records.size())},
                   {"malformed_ratings", std::to_string(ratings.malformed)}});
  std::cout << data::manifest_text(dataset, {{"sm_threshold", std::to_string(threshold)}});
  return 0;
}

int cmd_build_graph(const Layers& layers, const fs::path& triples_path, const fs::path& data_dir) {
  const RunConfig cfg = layered_config(layers, data_dir);
  require_file(data_dir / kDatasetFile, "run `crmman ingest` first");
  if (!fs::exists(triples_path)) throw IoError("triples file not found: " + triples_path.string());
  const auto dataset = data::read_dataset(data_dir / kDatasetFile);
  const auto triples = kg::parse_triples(triples_path, cfg.get_double("max_malformed_fraction"));
  const auto build = kg::build_item_graph(triples.triples, dataset.item_ids, cfg.get_size("sm_threshold"));
  kg::write_edge_list(build.graph, data_dir / kGraphFile);
  const std::string stats = kg::stats_json(kg::graph_stats(build.graph));
  write_text(data_dir / "graph_stats.json", stats);
  std::cout << stats << '\n';
  return 0;
}

int cmd_synth(const Layers& layers, const fs::path& out) {
  const RunConfig cfg = layered_config(layers, {}, desk_scale_overrides());
  const synth::SyntheticData syn = synth::generate_synthetic(cfg.synthetic_spec());
  fs::create_directories(out);
  {
    std::ofstream ratings(out / "ratings.tsv");
    for (const auto& r : syn.ratings) ratings << r.user_id << '\t' << r.item_id << '\t' << r.rating << '\n';
    std::ofstream triples(out / "triples.tsv");
    for (const auto& t : syn.triples) {
      triples << t.head << '\t' << t.relation << '\t' << t.tail << (t.text ? "\ttext" : "") << '\n';
    }
    if (!ratings || !triples) throw IoError("cannot write synthetic inputs under " + out.string());
  }
  RunConfig snapshot = cfg;
  snapshot.set("sm_threshold", cfg.get("synth_threshold"));
  write_artifacts(out, syn.dataset, syn.graph, syn.texts, snapshot,
                  {{"sm_threshold", cfg.get("synth_threshold")}, {"synthetic", "true"}});
  std::cout << data::manifest_text(syn.dataset, {{"graph_edges", std::to_string(syn.graph.edge_count())}});
  return 0;
}

data::InteractionDataset split_for(const RunConfig& cfg, const data::InteractionDataset& dataset) {
  return data::split(dataset, cfg.split_config(), derive_seed(cfg.get_u64("seed"), "split"));
}

int cmd_train(const Layers& layers, const fs::path& data_dir, const fs::path& out, const fs::path& log_path) {
  const RunConfig cfg = layered_config(layers, data_dir);
  const auto data = load_data(data_dir);
  const auto seed = cfg.get_u64("seed");
  const auto model_config = cfg.model_config();
  const auto dataset = split_for(cfg, data.dataset);
  const ModelInputs inputs = make_model_inputs(dataset.item_ids, data.graph, data.texts, model_config, seed);
  for (const auto& w : inputs.semantic.warnings) std::cerr << "warning: " << w << '\n';
  std::ofstream log_file;
  if (!log_path.empty()) {
    log_file.open(log_path);
    if (!log_file) throw IoError("cannot write " + log_path.string());
  }
  std::ostream& log = log_path.empty() ? std::cout : log_file;
  const TrainResult result = train(dataset, inputs, model_config, cfg.train_config(), seed, cfg.to_text(), &log);
  for (const auto& e : result.exclusions) std::cerr << "excluded: " << e << '\n';
  save_checkpoint(result.best, out);
  std::cout << "best_epoch=" << result.best_epoch << " checkpoint=" << out.string() << '\n';
  return 0;
}

struct Loaded {
  RunConfig cfg;
  eval::ExperimentData data;
  data::InteractionDataset dataset;  // split
  ModelInputs inputs;
  Checkpoint checkpoint;
};

/// Model configuration and split come from the checkpoint's own snapshot.
Loaded load_checkpoint_run(const fs::path& data_dir, const fs::path& checkpoint_path) {
  require_file(checkpoint_path, "run `crmman train` to create it");
  Loaded l;
  l.checkpoint = load_checkpoint(checkpoint_path);
  l.cfg.load_text(l.checkpoint.config_text, "checkpoint");
  l.data = load_data(data_dir);
  l.dataset = split_for(l.cfg, l.data.dataset);
  const auto model_config = l.cfg.model_config();
  ModelConfig inputs_config = model_config;
  inputs_config.use_structural = false;  // node vectors come from the checkpoint
  l.inputs = make_model_inputs(l.dataset.item_ids, l.data.graph, l.data.texts, inputs_config, 0);
  if (model_config.use_structural) {
    l.inputs.hoods = structural::Neighborhoods::from_graph(l.data.graph);
    l.inputs.init_vectors = l.checkpoint.init_vectors;
  }
  return l;
}

int cmd_evaluate(const fs::path& data_dir, const fs::path& checkpoint_path, const fs::path& out) {
  Loaded l = load_checkpoint_run(data_dir, checkpoint_path);
  Model model = eval::model_from_checkpoint(l.checkpoint, l.cfg.model_config(), l.dataset.item_ids);
  const auto report = eval::evaluate(model, l.inputs, l.dataset, l.cfg.get_size("history_size"),
                                     l.cfg.get_u64("seed"));
  const std::string text = eval::metric_report_text(report, l.cfg.to_text());
  if (!out.empty()) write_text(out, text);
  std::cout << text;
  return 0;
}

int cmd_ablate(const Layers& layers, const fs::path& data_dir, const std::string& variants_text, const fs::path& out) {
  const RunConfig cfg = layered_config(layers, data_dir);
  const auto data = load_data(data_dir);
  std::vector<eval::Variant> variants;
  std::stringstream in(variants_text);
  std::string name;
  while (std::getline(in, name, ',')) variants.push_back(eval::variant_from_string(name));
  if (variants.empty()) throw ConfigError("no variants given");
  const auto report = eval::ablate(data, variants, cfg.model_config(), cfg.train_config(), cfg.split_config(),
                                   cfg.get_u64_list("seeds"), cfg.get_size("threads"));
  const std::string text = eval::report_text(report, cfg.to_text());
  if (!out.empty()) {
    write_text(out, text);
    write_text(fs::path(out.string() + ".plot.tsv"), eval::plot_data(report));
  }
  std::cout << text;
  return 0;
}

const data::UserHistory& history_of(const Loaded& l, const data::HistorySet& histories, const std::string& user_id,
                                    std::size_t& user) {
  const auto found = l.dataset.find_user(user_id);
  if (!found) throw UsageError("unknown user id '" + user_id + "'");
  user = *found;
  const auto& h = histories.by_user[user];
  if (!h) throw UsageError("user '" + user_id + "' has no usable history: " + data::build_history(l.dataset, user, 1, 0).exclusion_reason);
  return *h;
}

int cmd_predict(const fs::path& data_dir, const fs::path& checkpoint_path, const std::string& user_id,
                std::size_t top_override) {
  Loaded l = load_checkpoint_run(data_dir, checkpoint_path);
  Model model = eval::model_from_checkpoint(l.checkpoint, l.cfg.model_config(), l.dataset.item_ids);
  const auto histories = data::build_histories(l.dataset, l.cfg.get_size("history_size"),
                                               evaluation_history_seed(l.cfg.get_u64("seed")));
  std::size_t user = 0;
  const auto& history = history_of(l, histories, user_id, user);
  const ad::Tensor items = model.item_embedding_values(l.inputs);
  const UserVectors vectors = model.user_vectors(items, history, &l.inputs.item_ids);
  std::set<std::size_t> seen;
  for (const auto& r : l.dataset.user_records(user)) {
    if (r.split != data::SplitTag::test) seen.insert(r.item);
  }
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < items.rows(); ++i) {
    if (!seen.contains(i)) ranked.emplace_back(model.score(items, i, vectors), i);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  const std::size_t top = top_override ? top_override : l.cfg.get_size("top_n");
  for (std::size_t r = 0; r < std::min(top, ranked.size()); ++r) {
    std::cout << r + 1 << '\t' << l.dataset.item_ids[ranked[r].second] << '\t' << ranked[r].first << '\n';
  }
  return 0;
}

int cmd_export_attention(const fs::path& data_dir, const fs::path& checkpoint_path, const std::string& user_id,
                         const fs::path& out) {
  Loaded l = load_checkpoint_run(data_dir, checkpoint_path);
  Model model = eval::model_from_checkpoint(l.checkpoint, l.cfg.model_config(), l.dataset.item_ids);
  const auto histories = data::build_histories(l.dataset, l.cfg.get_size("history_size"),
                                               evaluation_history_seed(l.cfg.get_u64("seed")));
  const ad::Tensor items = model.item_embedding_values(l.inputs);
  std::vector<std::size_t> users;
  if (!user_id.empty()) {
    std::size_t u = 0;
    history_of(l, histories, user_id, u);
    users.push_back(u);
  } else {
    for (std::size_t u = 0; u < l.dataset.user_count(); ++u) {
      if (histories.by_user[u]) users.push_back(u);
    }
  }
  std::ostringstream text;
  text.precision(17);
  for (std::size_t u : users) {
    const auto& h = *histories.by_user[u];
    const UserVectors v = model.user_vectors(items, h, &l.inputs.item_ids);
    auto emit = [&](const char* view, const std::vector<std::size_t>& rows, const std::vector<ad::Tensor>& heads) {
      for (std::size_t head = 0; head < heads.size(); ++head) {
        text << "# user=" << l.dataset.user_ids[u] << " view=" << view << " head=" << head << " items=";
        for (std::size_t i = 0; i < rows.size(); ++i) text << (i ? "," : "") << l.dataset.item_ids[rows[i]];
        text << '\n';
        const ad::Tensor& a = heads[head];
        for (std::size_t r = 0; r < a.rows(); ++r) {
          for (std::size_t c = 0; c < a.cols(); ++c) text << (c ? "\t" : "") << a(r, c);
          text << '\n';
        }
      }
    };
    emit("prefer", h.prefer_items, v.prefer_attention);
    emit("dislike", h.dislike_items, v.dislike_attention);
  }
  if (out.empty()) {
    std::cout << text.str();
  } else {
    write_text(out, text.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crmman: multi-modal, multi-view recommender"};
  app.require_subcommand(1);
  app.fallthrough();
  Layers layers;
  app.add_option("--config", layers.config_file, "key=value configuration file");
  std::map<std::string, std::string> flag_storage;
  std::map<std::string, CLI::Option*> flag_options;
  for (const auto& key : RunConfig::keys()) {
    flag_options[key.name] =
        app.add_option("--" + key.name, flag_storage[key.name], key.help + " (default " + key.default_value + ")")
            ->group("Configuration");
  }

  std::string ratings, triples, texts, out, data_dir, checkpoint, user, variants = "full,single_view,semantic_only,structural_only", log;
  std::size_t top = 0;

  auto* ingest = app.add_subcommand("ingest", "parse ratings and triples, binarize, build the co-item graph");
  ingest->add_option("--ratings", ratings, "ratings file")->required();
  ingest->add_option("--triples", triples, "knowledge-graph triples file")->required();
  ingest->add_option("--texts", texts, "item text file (default: text triples)");
  ingest->add_option("--out", out, "output directory")->required();

  auto* build_graph = app.add_subcommand("build-graph", "rebuild the co-item graph of an ingested dataset");
  build_graph->add_option("--triples", triples, "knowledge-graph triples file")->required();
  build_graph->add_option("--data", data_dir, "dataset directory")->required();

  auto* synth = app.add_subcommand("synth", "generate a planted synthetic dataset");
  synth->add_option("--out", out, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model and write its best checkpoint");
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--out", out, "checkpoint path")->required();
  train_cmd->add_option("--log", log, "training log file (default stdout)");

  auto* evaluate = app.add_subcommand("evaluate", "test-split metrics of a checkpoint");
  evaluate->add_option("--data", data_dir, "dataset directory")->required();
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  evaluate->add_option("--out", out, "report path");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate variants over the configured seeds");
  ablate->add_option("--data", data_dir, "dataset directory")->required();
  ablate->add_option("--variants", variants, "comma-separated variants");
  ablate->add_option("--out", out, "report path; plot data goes to <out>.plot.tsv");

  auto* predict = app.add_subcommand("predict", "top-N unseen items for a user");
  predict->add_option("--data", data_dir, "dataset directory")->required();
  predict->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  predict->add_option("--user", user, "user id")->required();
  predict->add_option("--top", top, "number of items (default top_n)");

  auto* export_attention = app.add_subcommand("export-attention", "dump self-attention matrices per user, view and head");
  export_attention->add_option("--data", data_dir, "dataset directory")->required();
  export_attention->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  export_attention->add_option("--user", user, "restrict to one user");
  export_attention->add_option("--out", out, "output file (default stdout)");

  CLI11_PARSE(app, argc, argv);
  for (const auto& [name, option] : flag_options) {
    if (option->count() > 0) layers.flags[name] = flag_storage[name];
  }

  try {
    if (*ingest) return cmd_ingest(layers, ratings, triples, texts, out);
    if (*build_graph) return cmd_build_graph(layers, triples, data_dir);
    if (*synth) return cmd_synth(layers, out);
    if (*train_cmd) return cmd_train(layers, data_dir, out, log);
    if (*evaluate) return cmd_evaluate(data_dir, checkpoint, out);
    if (*ablate) return cmd_ablate(layers, data_dir, variants, out);
    if (*predict) return cmd_predict(data_dir, checkpoint, user, top);
    if (*export_attention) return cmd_export_attention(data_dir, checkpoint, user, out);
  } catch (const crmman::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
