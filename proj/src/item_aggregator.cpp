#include "crmman/item_aggregator.hpp"

#include "crmman/errors.hpp"

namespace crmman::aggregate {

using ad::Tensor;

Aggregation aggregation_from_string(const std::string& name) {
  if (name == "concatenate" || name == "concat") return Aggregation::concatenate;
  if (name == "average") return Aggregation::average;
  throw ConfigError("unknown aggregation '" + name + "'");
}

const char* to_string(Aggregation mode) {
  return mode == Aggregation::concatenate ? "concatenate" : "average";
}

namespace {

void check_rows(const Tensor& s, const Tensor& p) {
  if (s.rows() != p.rows()) {
    throw DimensionError("aggregate: " + ad::shape_string(s.shape()) + " and " + ad::shape_string(p.shape()) +
                         " cover different item counts");
  }
}

void check_average(std::size_t semantic_dim, std::size_t structural_dim) {
  if (semantic_dim != structural_dim) {
    throw ConfigError("average aggregation needs equal widths, semantic d_h = " + std::to_string(semantic_dim) +
                      " vs structural d_k'' = " + std::to_string(structural_dim));
  }
}

}  // namespace

Tensor aggregate_concat(const Tensor& semantic, const Tensor& structural) {
  check_rows(semantic, structural);
  Tensor out = Tensor::matrix(semantic.rows(), semantic.cols() + structural.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    std::copy(semantic.row(r).begin(), semantic.row(r).end(), row.begin());
    std::copy(structural.row(r).begin(), structural.row(r).end(), row.begin() + static_cast<std::ptrdiff_t>(semantic.cols()));
  }
  return out;
}

Tensor aggregate_average(const Tensor& semantic, const Tensor& structural) {
  check_average(semantic.cols(), structural.cols());
  check_rows(semantic, structural);
  Tensor out = semantic;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (semantic[i] + structural[i]);
  return out;
}

ad::Var aggregate(ad::Var semantic, ad::Var structural, Aggregation mode) {
  check_rows(semantic.value(), structural.value());
  if (mode == Aggregation::concatenate) return ad::concat_cols({semantic, structural});
  check_average(semantic.cols(), structural.cols());
  return ad::scale(ad::add(semantic, structural), 0.5);
}

std::size_t fused_dim(std::size_t semantic_dim, std::size_t structural_dim, Aggregation mode) {
  if (mode == Aggregation::concatenate) return semantic_dim + structural_dim;
  check_average(semantic_dim, structural_dim);
  return semantic_dim;
}

}  // namespace crmman::aggregate
