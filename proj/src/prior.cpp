#include "vqdm/prior.hpp"

#include <cmath>
#include <limits>

#include "vqdm/error.hpp"
#include "vqdm/network.hpp"
#include "vqdm/rng.hpp"

namespace vqdm {

namespace {

Tensor one_hot_prefix(const ModelBundle& b, const LatentCode& z, std::size_t filled) {
  const std::size_t K = b.num_codes(), cells = z.size();
  Tensor x({K, z.height, z.width});
  for (std::size_t i = 0; i < filled && i < cells; ++i) x[z.indices[i] * cells + i] = 1.0;
  return x;
}

}  // namespace

void check_class(const ModelBundle& bundle, std::size_t class_id) {
  if (class_id >= bundle.num_classes) {
    throw Error(Errc::invalid_argument, "class id " + std::to_string(class_id) +
                                            " out of range for " +
                                            std::to_string(bundle.num_classes) + " classes");
  }
}

std::vector<double> prior_log_conditionals(const ModelBundle& bundle, const LatentCode& z,
                                           std::size_t filled, std::size_t class_id) {
  check_class(bundle, class_id);
  check_code(bundle, z);
  const std::size_t K = bundle.num_codes(), cells = z.size();
  const Tensor logits = run_chain(bundle.prior, bundle, one_hot_prefix(bundle, z, filled),
                                  class_id);
  std::vector<double> out(cells * K);
  std::vector<double> row(K);
  for (std::size_t i = 0; i < cells; ++i) {
    for (std::size_t k = 0; k < K; ++k) row[k] = logits[k * cells + i];
    const double norm = log_sum_exp(row);
    for (std::size_t k = 0; k < K; ++k) out[i * K + k] = row[k] - norm;
  }
  return out;
}

std::vector<double> next_token_logprobs(const ModelBundle& bundle, const PrefixState& state,
                                        std::size_t class_id) {
  const std::size_t cells = state.code.size();
  if (state.filled >= cells) {
    throw Error(Errc::invalid_argument, "next_token: prefix is already complete");
  }
  const std::size_t K = bundle.num_codes();
  const auto all = prior_log_conditionals(bundle, state.code, state.filled, class_id);
  return {all.begin() + static_cast<std::ptrdiff_t>(state.filled * K),
          all.begin() + static_cast<std::ptrdiff_t>((state.filled + 1) * K)};
}

std::vector<double> next_token_probs(const ModelBundle& bundle, const PrefixState& state,
                                     std::size_t class_id) {
  auto lp = next_token_logprobs(bundle, state, class_id);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

double chain_logprob(const ModelBundle& bundle, const LatentCode& z, std::size_t class_id) {
  const std::size_t K = bundle.num_codes();
  const auto all = prior_log_conditionals(bundle, z, z.size(), class_id);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += all[i * K + z.indices[i]];
  return total;
}

double chain_logprob_sequential(const ModelBundle& bundle, const LatentCode& z,
                                std::size_t class_id) {
  const std::size_t K = bundle.num_codes();
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto all = prior_log_conditionals(bundle, z, i, class_id);
    total += all[i * K + z.indices[i]];
  }
  return total;
}

double mix_classes(const ModelBundle& bundle, const std::vector<std::size_t>& classes,
                   const std::vector<double>& per_class_logprob) {
  std::vector<double> terms(classes.size());
  for (std::size_t j = 0; j < classes.size(); ++j) {
    const double pc = bundle.class_prior.at(classes[j]);
    terms[j] = pc > 0.0 ? std::log(pc) + per_class_logprob[j]
                        : -std::numeric_limits<double>::infinity();
  }
  return log_sum_exp(terms);
}

double marginal_logprob(const ModelBundle& bundle, const LatentCode& z) {
  std::vector<std::size_t> classes(bundle.num_classes);
  std::vector<double> lp(bundle.num_classes);
  for (std::size_t c = 0; c < bundle.num_classes; ++c) {
    classes[c] = c;
    lp[c] = chain_logprob(bundle, z, c);
  }
  return mix_classes(bundle, classes, lp);
}

PrefixState make_prefix(const ModelBundle& bundle, LatentCode z, std::size_t filled,
                        std::vector<std::size_t> classes) {
  check_code(bundle, z);
  if (filled > z.size()) {
    throw Error(Errc::invalid_argument, "prefix length exceeds the latent grid");
  }
  PrefixState s{std::move(z), filled, std::move(classes), {}};
  const std::size_t K = bundle.num_codes();
  for (std::size_t c : s.classes) {
    double lp = 0.0;
    if (filled > 0) {
      const auto all = prior_log_conditionals(bundle, s.code, filled, c);
      for (std::size_t i = 0; i < filled; ++i) lp += all[i * K + s.code.indices[i]];
    } else {
      check_class(bundle, c);
    }
    s.per_class_logprob.push_back(lp);
  }
  return s;
}

LatentCode sample_prior(const ModelBundle& bundle, std::size_t class_id, Rng& rng) {
  check_class(bundle, class_id);
  const std::size_t K = bundle.num_codes();
  LatentCode z{bundle.latent_shape.at(0), bundle.latent_shape.at(1),
               std::vector<std::uint32_t>(bundle.latent_cells(), 0)};
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto all = prior_log_conditionals(bundle, z, i, class_id);
    const std::span<const double> row(all.data() + i * K, K);
    z.indices[i] = static_cast<std::uint32_t>(rng.categorical_log(row));
  }
  return z;
}

LatentCode sample_prior(const ModelBundle& bundle, std::size_t class_id, std::uint64_t seed) {
  Rng rng(seed);
  return sample_prior(bundle, class_id, rng);
}

}  // namespace vqdm
