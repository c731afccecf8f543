#pragma once

// Construction of the latent subset used to distill the mixture: full
// enumeration, ancestral sampling from the prior, or class-conditioned beam
// search with a stochastic first token.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vqdm/bundle.hpp"
#include "vqdm/prior.hpp"
#include "vqdm/vq.hpp"

namespace vqdm {

inline constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

enum class SelectMethod { exhaustive, random_sampling, beam_search };

const char* select_method_name(SelectMethod m);
std::optional<SelectMethod> parse_select_method(std::string_view name);

struct SelectionConfig {
  SelectMethod method = SelectMethod::beam_search;
  std::size_t n = 1;
  // Initial first-token samples per class (beam search).
  std::size_t s = 1;
  // Empty means every class of the bundle.
  std::vector<std::size_t> class_set;
  std::uint64_t seed = 0;
  // Random sampling draw budget; 0 means 20 * n.
  std::size_t max_draws = 0;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  std::size_t threads = 1;
};

struct ScoredCode {
  LatentCode code;
  // log p(z) under the class-marginal prior.
  double log_marginal = 0.0;
  // Class that produced the code; empty for enumeration.
  std::optional<std::size_t> class_id;
};

struct Selection {
  SelectMethod method = SelectMethod::beam_search;
  std::vector<ScoredCode> codes;
  std::size_t requested = 0;
  // Prior draws consumed (random sampling).
  std::size_t draws = 0;
  // Candidate extensions scored, total and per beam run.
  std::uint64_t extensions = 0;
  std::vector<std::uint64_t> run_extensions;
  std::size_t beam_width = 0;
};

// K^(HW), or nullopt when it does not fit in 64 bits.
std::optional<std::uint64_t> latent_space_size(const ModelBundle& bundle);

// The code with lexicographic rank `rank` (cell 0 most significant).
LatentCode code_from_rank(const ModelBundle& bundle, std::uint64_t rank);

// Every code in lexicographic order with its marginal log-probability.
// Throws Errc::capacity_exceeded when K^(HW) > cap.
std::vector<ScoredCode> enumerate_all(const ModelBundle& bundle,
                                      std::uint64_t cap = kDefaultEnumerationCap,
                                      std::size_t threads = 1);

Selection select_random(const ModelBundle& bundle, const SelectionConfig& cfg);

struct BeamItem {
  PrefixState state;
  // log m = log sum_c p(c) h_c over the state's classes.
  double score_m = 0.0;
};

struct BeamResult {
  // Complete codes, score descending; equal scores in lexicographic order.
  std::vector<BeamItem> items;
  std::uint64_t extensions = 0;
};

// Fixed-width beam of B slots started from `init` (cells < init.filled are
// kept). Every step evaluates all B slots and scores K children per slot;
// slots with no live candidate carry score -inf and are never returned.
BeamResult beam_search(const ModelBundle& bundle, const PrefixState& init, std::size_t beam_width,
                       std::size_t threads = 1);

Selection select_beam(const ModelBundle& bundle, const SelectionConfig& cfg);

// Dispatches on cfg.method.
Selection select_codes(const ModelBundle& bundle, const SelectionConfig& cfg);

// Text artifact: one code per line, "<log_marginal> i0 i1 ...".
void write_code_set(const std::vector<ScoredCode>& codes, const std::filesystem::path& path);
std::string format_code_set(const std::vector<ScoredCode>& codes);
std::vector<ScoredCode> read_code_set(const ModelBundle& bundle, const std::filesystem::path& path);

}  // namespace vqdm
