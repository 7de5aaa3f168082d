#pragma once

// Fusion of the semantic vector s and the structural vector p'' into the
// item representation r.

#include <string>

#include "crmman/autodiff.hpp"

namespace crmman::aggregate {

enum class Aggregation { concatenate, average };

Aggregation aggregation_from_string(const std::string& name);
const char* to_string(Aggregation mode);

/// r = s || p''. Row-aligned matrices (one item per row) or single rows.
ad::Tensor aggregate_concat(const ad::Tensor& semantic, const ad::Tensor& structural);
/// r = (s + p'') / 2. Throws ConfigError naming both widths on mismatch.
ad::Tensor aggregate_average(const ad::Tensor& semantic, const ad::Tensor& structural);

ad::Var aggregate(ad::Var semantic, ad::Var structural, Aggregation mode);

/// Width of r for the given input widths.
std::size_t fused_dim(std::size_t semantic_dim, std::size_t structural_dim, Aggregation mode);

}  // namespace crmman::aggregate
