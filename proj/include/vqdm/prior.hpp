#pragma once

// Class-conditioned autoregressive prior over latent codes, evaluated in
// raster order with masked convolutions. All arithmetic is in log space.

#include <cstdint>
#include <vector>

#include "vqdm/bundle.hpp"
#include "vqdm/vq.hpp"

namespace vqdm {

// A partially filled code. Cells at raster positions < filled are set; the
// rest are placeholders the prior never reads. per_class_logprob[j] is
// log p(z_<filled | classes[j]).
struct PrefixState {
  LatentCode code;
  std::size_t filled = 0;
  std::vector<std::size_t> classes;
  std::vector<double> per_class_logprob;
};

// Builds a prefix state over `classes`, scoring the first `filled` cells of z.
PrefixState make_prefix(const ModelBundle& bundle, LatentCode z, std::size_t filled,
                        std::vector<std::size_t> classes);

// log p(z_i = k | z_<i, c) for every position i in one causal pass:
// a cells x K row-major matrix. Row i only reads cells < `filled`
// and < i, so rows at or below `filled` are exact conditionals.
std::vector<double> prior_log_conditionals(const ModelBundle& bundle, const LatentCode& z,
                                           std::size_t filled, std::size_t class_id);

// Normalized distribution over K for the next cell of `state`.
std::vector<double> next_token_probs(const ModelBundle& bundle, const PrefixState& state,
                                     std::size_t class_id);
std::vector<double> next_token_logprobs(const ModelBundle& bundle, const PrefixState& state,
                                        std::size_t class_id);

// log p(z | c), one causal pass over the complete code.
double chain_logprob(const ModelBundle& bundle, const LatentCode& z, std::size_t class_id);

// Same quantity by one network evaluation per position, each seeing only
// the prefix. Kept as the reference for the single-pass route.
double chain_logprob_sequential(const ModelBundle& bundle, const LatentCode& z,
                                std::size_t class_id);

// log sum_c p(c) p(z | c).
double marginal_logprob(const ModelBundle& bundle, const LatentCode& z);

// Combines per-class prefix log-probabilities into log sum_c p(c) h_c.
double mix_classes(const ModelBundle& bundle, const std::vector<std::size_t>& classes,
                   const std::vector<double>& per_class_logprob);

// Ancestral sample z ~ p(z | c).
LatentCode sample_prior(const ModelBundle& bundle, std::size_t class_id, std::uint64_t seed);

class Rng;
LatentCode sample_prior(const ModelBundle& bundle, std::size_t class_id, Rng& rng);

void check_class(const ModelBundle& bundle, std::size_t class_id);

}  // namespace vqdm
