#include "crmman/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "crmman/errors.hpp"
#include "crmman/random.hpp"

namespace crmman::synth {

namespace {

constexpr std::size_t kMinInteractions = 10;
constexpr std::size_t kFillerVocabulary = 50;

}  // namespace

std::string item_id(std::size_t index) { return "i" + std::to_string(index); }
std::string user_id(std::size_t index) { return "u" + std::to_string(index); }

void SyntheticSpec::validate() const {
  if (users == 0 || items < kMinInteractions) throw ConfigError("synthetic spec needs users and at least 10 items");
  if (prefer_dim < 2 || dislike_dim < 2) throw ConfigError("synthetic attribute dimensions must be at least 2");
  if (noise < 0.0) throw ConfigError("synthetic noise must be nonnegative");
  for (double p : {interaction_rate, prefer_attribute_rate, dislike_attribute_rate}) {
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("synthetic rates must lie in (0, 1]");
  }
}

double planted_affinity(const SyntheticData& data, std::size_t user, std::size_t item) {
  double a = 0.0;
  for (std::size_t k = 0; k < data.item_prefer.cols(); ++k) a += data.user_taste(user, k) * data.item_prefer(item, k);
  for (std::size_t k = 0; k < data.item_dislike.cols(); ++k) {
    a -= data.user_aversion(user, k) * data.item_dislike(item, k);
  }
  return a;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData out;
  out.item_prefer = ad::Tensor::matrix(spec.items, spec.prefer_dim);
  out.item_dislike = ad::Tensor::matrix(spec.items, spec.dislike_dim);
  out.user_taste = ad::Tensor::matrix(spec.users, spec.prefer_dim);
  out.user_aversion = ad::Tensor::matrix(spec.users, spec.dislike_dim);

  Rng item_rng = make_rng(spec.seed, "synthetic.items");
  for (std::size_t i = 0; i < spec.items; ++i) {
    for (std::size_t k = 0; k < spec.prefer_dim; ++k) {
      out.item_prefer(i, k) = uniform01(item_rng) < spec.prefer_attribute_rate ? 1.0 : 0.0;
    }
    for (std::size_t k = 0; k < spec.dislike_dim; ++k) {
      out.item_dislike(i, k) = uniform01(item_rng) < spec.dislike_attribute_rate ? 1.0 : 0.0;
    }
  }
  Rng user_rng = make_rng(spec.seed, "synthetic.users");
  for (std::size_t u = 0; u < spec.users; ++u) {
    for (std::size_t k = 0; k < spec.prefer_dim; ++k) out.user_taste(u, k) = standard_normal(user_rng);
    for (std::size_t k = 0; k < spec.dislike_dim; ++k) out.user_aversion(u, k) = std::abs(standard_normal(user_rng));
  }

  Rng pick_rng = make_rng(spec.seed, "synthetic.interactions");
  Rng noise_rng = make_rng(spec.seed, "synthetic.noise");
  for (std::size_t u = 0; u < spec.users; ++u) {
    std::vector<char> chosen(spec.items, 0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < spec.items; ++i) {
      if (uniform01(pick_rng) < spec.interaction_rate) {
        chosen[i] = 1;
        ++count;
      }
    }
    while (count < kMinInteractions) {
      const auto i = uniform_index(pick_rng, spec.items);
      if (!chosen[i]) {
        chosen[i] = 1;
        ++count;
      }
    }
    std::vector<std::size_t> items;
    std::vector<double> affinity;
    for (std::size_t i = 0; i < spec.items; ++i) {
      if (!chosen[i]) continue;
      items.push_back(i);
      affinity.push_back(planted_affinity(out, u, i) + spec.noise * standard_normal(noise_rng));
    }
    std::vector<double> sorted = affinity;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    for (std::size_t j = 0; j < items.size(); ++j) {
      out.ratings.push_back({user_id(u), item_id(items[j]), affinity[j] > median ? 4.0 : 2.0});
    }
  }

  Rng filler_rng = make_rng(spec.seed, "synthetic.text");
  const std::size_t text_prefer = spec.prefer_dim / 2;
  const std::size_t text_dislike = spec.dislike_dim / 2;
  for (std::size_t i = 0; i < spec.items; ++i) {
    const std::string id = item_id(i);
    std::string text;
    auto word = [&text](const std::string& w) {
      if (!text.empty()) text += ' ';
      text += w;
    };
    for (std::size_t k = 0; k < text_prefer; ++k) {
      if (out.item_prefer(i, k) > 0.0) word("like" + std::to_string(k));
    }
    for (std::size_t k = 0; k < text_dislike; ++k) {
      if (out.item_dislike(i, k) > 0.0) word("avoid" + std::to_string(k));
    }
    for (std::size_t f = 0; f < spec.filler_words; ++f) {
      word("word" + std::to_string(uniform_index(filler_rng, kFillerVocabulary)));
    }
    out.texts[id] = text;
    out.triples.push_back({id, kg::kTextRelation, text, true});
    for (std::size_t k = text_prefer; k < spec.prefer_dim; ++k) {
      const bool has = out.item_prefer(i, k) > 0.0;
      out.triples.push_back({id, has ? "has_trait" : "lacks_trait", (has ? "trait" : "no_trait") + std::to_string(k)});
    }
    for (std::size_t k = text_dislike; k < spec.dislike_dim; ++k) {
      const bool has = out.item_dislike(i, k) > 0.0;
      out.triples.push_back({id, has ? "has_flaw" : "lacks_flaw", (has ? "flaw" : "no_flaw") + std::to_string(k)});
    }
  }

  out.dataset = data::binarize(out.ratings);
  out.graph = kg::build_item_graph(out.triples, out.dataset.item_ids, spec.threshold).graph;
  return out;
}

}  // namespace crmman::synth
