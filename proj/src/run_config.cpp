#include "crmman/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "crmman/errors.hpp"

extern char** environ;

namespace crmman {

const std::vector<ConfigKey>& RunConfig::keys() {
  static const std::vector<ConfigKey> table{
      {"seed", "1", "root seed of a single run"},
      {"seeds", "1,2,3,4,5", "seeds of repeated runs (evaluate, ablate)"},
      {"threads", "1", "worker threads for concurrent ablation runs"},
      // ingestion
      {"ratings_delimiter", "tab", "ratings column delimiter: tab, comma or a single character"},
      {"rating_min", "0", "lowest valid rating"},
      {"rating_max", "5", "highest valid rating"},
      {"max_malformed_fraction", "0.01", "malformed-line fraction above which ingestion fails"},
      {"min_user_records", "10", "users with fewer records are dropped"},
      {"sm_threshold", "2", "co-item edge iff more than this many shared entities"},
      {"train_fraction", "0.7", "per-user share of records on the training side"},
      {"validation_fraction", "0.1", "share of the training side held out for validation"},
      // semantic
      {"semantic_encoder", "hashed_bow", "hashed_bow or precomputed"},
      {"text_length", "50", "tokens per item text after padding or truncation"},
      {"d_e", "auto", "sentence-vector width; auto = 768 precomputed, 256 hashed_bow"},
      {"hash_buckets", "32768", "hashed bag-of-words table size"},
      {"d_h", "256", "semantic vector width"},
      // structural
      {"init_method", "sdne_lite", "sdne_lite, spectral or seeded_random"},
      {"d_k", "256", "node initialization width"},
      {"gat1_heads", "12", "heads of the concatenating attention layer"},
      {"gat1_head_dim", "32", "per-head width of the concatenating layer"},
      {"gat2_heads", "2", "heads of the averaging attention layer"},
      {"structural_dim", "256", "structural vector width"},
      {"leaky_slope", "0.2", "negative slope inside graph attention logits"},
      {"gat_dropout", "0.4", "dropout on graph attention weights"},
      {"freeze_structural", "false", "exclude graph attention weights from training"},
      {"sdne_epochs", "200", "sdne_lite training epochs"},
      {"sdne_learning_rate", "0.01", "sdne_lite Adam learning rate"},
      {"sdne_edge_weight", "5", "sdne_lite reconstruction weight of observed edges"},
      {"sdne_proximity_weight", "0.05", "sdne_lite first-order proximity weight"},
      // item and user model
      {"use_semantic", "true", "include the semantic modality"},
      {"use_structural", "true", "include the structural modality"},
      {"aggregation", "concatenate", "concatenate or average"},
      {"attention_heads", "4", "self-attention heads per view"},
      {"attention_dropout", "0.3", "dropout on self-attention weights"},
      {"tie_views", "false", "share self-attention parameters between views"},
      {"multi_view", "true", "false scores with the preference view alone"},
      {"w1_init", "1", "initial preference-view weight"},
      {"w2_init", "-1", "initial dislike-view weight"},
      // training
      {"learning_rate", "0.001", "Adam learning rate"},
      {"adam_beta1", "0.9", "Adam first-moment decay"},
      {"adam_beta2", "0.999", "Adam second-moment decay"},
      {"adam_epsilon", "1e-8", "Adam denominator offset"},
      {"batch_size", "16", "training examples per batch"},
      {"negatives", "4", "negatives per positive (R)"},
      {"history_size", "10", "sampled history items per view (B)"},
      {"epochs", "20", "maximum training epochs"},
      {"patience", "5", "epochs without validation improvement before stopping"},
      {"resample_histories", "true", "draw fresh histories each epoch"},
      // synthetic data
      {"synth_users", "200", "synthetic users"},
      {"synth_items", "100", "synthetic items"},
      {"synth_prefer_dim", "4", "synthetic prefer attributes"},
      {"synth_dislike_dim", "4", "synthetic dislike attributes"},
      {"synth_noise", "0.3", "synthetic affinity noise (standard deviation)"},
      {"synth_interaction_rate", "0.5", "probability of a user-item interaction"},
      {"synth_prefer_rate", "0.5", "probability of each prefer attribute"},
      {"synth_dislike_rate", "0.3", "probability of each dislike attribute"},
      {"synth_filler_words", "4", "uninformative words per item text"},
      {"synth_threshold", "2", "co-item threshold of the synthetic graph"},
      // prediction
      {"top_n", "10", "items listed by predict"},
  };
  return table;
}

bool RunConfig::known(const std::string& key) {
  const auto& table = keys();
  return std::any_of(table.begin(), table.end(), [&](const ConfigKey& k) { return k.name == key; });
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known(key)) throw ConfigError("unknown configuration key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("configuration key '" + key + "' has invalid value '" + text + "'");
  }
  return value;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

double RunConfig::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }
std::size_t RunConfig::get_size(const std::string& key) const { return parse_number<std::size_t>(key, get(key)); }
std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("configuration key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::uint64_t> RunConfig::get_u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  std::stringstream in(get(key));
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(parse_number<std::uint64_t>(key, trim(part)));
  if (out.empty()) throw ConfigError("configuration key '" + key + "' is empty");
  return out;
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#' || t.front() == '[') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (!known(key)) throw ConfigError(origin + ":" + std::to_string(number) + ": unknown configuration key '" + key + "'");
    set(key, trim(t.substr(eq + 1)));
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  load_text(buf.str(), path.string());
}

void RunConfig::apply_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq != std::string::npos) env[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  apply_environment(env);
}

void RunConfig::apply_environment(const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string key = name.substr(prefix.size());
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!known(key)) throw ConfigError("environment variable " + name + " names unknown configuration key '" + key + "'");
    set(key, value);
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += k.name + "=" + values_.at(k.name) + "\n";
  return out;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig c;
  c.semantic.kind = semantic::encoder_kind_from_string(get("semantic_encoder"));
  c.semantic.text_length = get_size("text_length");
  c.semantic.d_e = get("d_e") == "auto" ? (c.semantic.kind == semantic::EncoderKind::precomputed ? 768 : 256)
                                        : get_size("d_e");
  c.semantic.buckets = get_size("hash_buckets");
  c.semantic.d_h = get_size("d_h");
  auto& s = c.structural;
  s.init = structural::init_method_from_string(get("init_method"));
  s.d_k = get_size("d_k");
  s.layer1_heads = get_size("gat1_heads");
  s.layer1_head_dim = get_size("gat1_head_dim");
  s.layer2_heads = get_size("gat2_heads");
  s.output_dim = get_size("structural_dim");
  s.slope = get_double("leaky_slope");
  s.dropout = get_double("gat_dropout");
  s.freeze = get_bool("freeze_structural");
  s.sdne.epochs = get_size("sdne_epochs");
  s.sdne.learning_rate = get_double("sdne_learning_rate");
  s.sdne.edge_weight = get_double("sdne_edge_weight");
  s.sdne.proximity_weight = get_double("sdne_proximity_weight");
  c.use_semantic = get_bool("use_semantic");
  c.use_structural = get_bool("use_structural");
  c.aggregation = aggregate::aggregation_from_string(get("aggregation"));
  c.user.heads = get_size("attention_heads");
  c.user.dropout = get_double("attention_dropout");
  c.user.tie_views = get_bool("tie_views");
  c.user.multi_view = get_bool("multi_view");
  c.w1_init = get_double("w1_init");
  c.w2_init = get_double("w2_init");
  c.validate();
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.adam.learning_rate = get_double("learning_rate");
  t.adam.beta1 = get_double("adam_beta1");
  t.adam.beta2 = get_double("adam_beta2");
  t.adam.epsilon = get_double("adam_epsilon");
  t.batch_size = get_size("batch_size");
  t.negatives = get_size("negatives");
  t.history_size = get_size("history_size");
  t.epochs = get_size("epochs");
  t.patience = get_size("patience");
  t.resample_histories = get_bool("resample_histories");
  if (!(t.adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (t.batch_size == 0 || t.negatives == 0 || t.history_size == 0) {
    throw ConfigError("batch_size, negatives and history_size must be positive");
  }
  return t;
}

data::SplitConfig RunConfig::split_config() const {
  data::SplitConfig s;
  s.train_fraction = get_double("train_fraction");
  s.validation_fraction_of_train = get_double("validation_fraction");
  if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (!(s.validation_fraction_of_train >= 0.0 && s.validation_fraction_of_train < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
  return s;
}

data::RatingsSchema RunConfig::ratings_schema() const {
  data::RatingsSchema schema;
  const std::string& d = get("ratings_delimiter");
  if (d == "tab") {
    schema.delimiter = '\t';
  } else if (d == "comma") {
    schema.delimiter = ',';
  } else if (d.size() == 1) {
    schema.delimiter = d[0];
  } else {
    throw ConfigError("ratings_delimiter must be tab, comma or one character, got '" + d + "'");
  }
  schema.rating_min = get_double("rating_min");
  schema.rating_max = get_double("rating_max");
  schema.max_malformed_fraction = get_double("max_malformed_fraction");
  return schema;
}

synth::SyntheticSpec RunConfig::synthetic_spec() const {
  synth::SyntheticSpec s;
  s.users = get_size("synth_users");
  s.items = get_size("synth_items");
  s.prefer_dim = get_size("synth_prefer_dim");
  s.dislike_dim = get_size("synth_dislike_dim");
  s.noise = get_double("synth_noise");
  s.interaction_rate = get_double("synth_interaction_rate");
  s.prefer_attribute_rate = get_double("synth_prefer_rate");
  s.dislike_attribute_rate = get_double("synth_dislike_rate");
  s.filler_words = get_size("synth_filler_words");
  s.threshold = get_size("synth_threshold");
  s.seed = get_u64("seed");
  s.validate();
  return s;
}

std::string desk_scale_overrides() {
  return "d_e=16\n"
         "d_h=16\n"
         "hash_buckets=1024\n"
         "d_k=16\n"
         "gat1_heads=4\n"
         "gat1_head_dim=4\n"
         "gat2_heads=2\n"
         "structural_dim=16\n"
         "attention_heads=4\n"
         "learning_rate=0.005\n";
}

}  // namespace crmman
