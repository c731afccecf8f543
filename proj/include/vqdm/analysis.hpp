#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vqdm/bundle.hpp"
#include "vqdm/mixture.hpp"

namespace vqdm {

struct CdfMode {
  enum class Kind { exhaustive, sampled } kind = Kind::exhaustive;
  // Prior draws for the sampled mode.
  std::size_t draws = 0;
  std::uint64_t seed = 0;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  std::size_t threads = 1;
};

// Sorted prior mass over latent codes. In sampled mode the cdf is built from
// the distinct sampled codes only, so every value is a lower bound on the true
// cumulative mass at that rank.
struct UtilizationReport {
  bool exhaustive = true;
  double space_size = 0.0;
  std::vector<double> sorted_logprobs;
  std::vector<double> cdf;
  // 1-based ranks; nullopt when the covered mass never reaches the level.
  std::optional<std::size_t> idx_90;
  std::optional<std::size_t> idx_99;
  std::optional<double> fraction_90;
  std::optional<double> fraction_99;
  double covered_mass = 0.0;
  std::size_t draws = 0;
};

UtilizationReport utilization_cdf(const ModelBundle& bundle, const CdfMode& mode);

// Delimited text: a commented summary block, then "rank,logprob,cdf" rows.
std::string format_utilization(const UtilizationReport& report);

// Entry (n, t) = log_weight_n + log p(x_t | component n) over all pixels.
std::vector<std::vector<double>> component_loglike_matrix(const DistilledMixture& m,
                                                          const std::vector<Tensor>& dataset,
                                                          std::size_t threads = 1);

// Header "component,code,sample_0,...", then one row per component.
std::string format_loglike_matrix(const DistilledMixture& m,
                                  const std::vector<std::vector<double>>& matrix);

}  // namespace vqdm
