#include "vqdm/select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "vqdm/error.hpp"
#include "vqdm/parallel.hpp"
#include "vqdm/rng.hpp"

namespace vqdm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::size_t> resolve_classes(const ModelBundle& bundle,
                                         const std::vector<std::size_t>& requested) {
  std::vector<std::size_t> classes = requested;
  if (classes.empty()) {
    for (std::size_t c = 0; c < bundle.num_classes; ++c) classes.push_back(c);
  }
  for (std::size_t c : classes) check_class(bundle, c);
  return classes;
}

struct Slot {
  LatentCode code;
  std::vector<double> per_class_logprob;
  double score = kNegInf;
  bool live = false;
};

struct Candidate {
  double score;
  std::size_t slot;
  std::uint32_t token;
};

}  // namespace

const char* select_method_name(SelectMethod m) {
  switch (m) {
    case SelectMethod::exhaustive: return "exhaustive";
    case SelectMethod::random_sampling: return "random_sampling";
    case SelectMethod::beam_search: return "beam_search";
  }
  return "unknown";
}

std::optional<SelectMethod> parse_select_method(std::string_view name) {
  if (name == "exhaustive") return SelectMethod::exhaustive;
  if (name == "random_sampling" || name == "random") return SelectMethod::random_sampling;
  if (name == "beam_search" || name == "beam") return SelectMethod::beam_search;
  return std::nullopt;
}

std::optional<std::uint64_t> latent_space_size(const ModelBundle& bundle) {
  const std::uint64_t K = bundle.num_codes();
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < bundle.latent_cells(); ++i) {
    if (total > std::numeric_limits<std::uint64_t>::max() / K) return std::nullopt;
    total *= K;
  }
  return total;
}

LatentCode code_from_rank(const ModelBundle& bundle, std::uint64_t rank) {
  const std::uint64_t K = bundle.num_codes();
  LatentCode z{bundle.latent_shape.at(0), bundle.latent_shape.at(1),
               std::vector<std::uint32_t>(bundle.latent_cells(), 0)};
  for (std::size_t i = z.size(); i-- > 0;) {
    z.indices[i] = static_cast<std::uint32_t>(rank % K);
    rank /= K;
  }
  return z;
}

std::vector<ScoredCode> enumerate_all(const ModelBundle& bundle, std::uint64_t cap,
                                      std::size_t threads) {
  const auto size = latent_space_size(bundle);
  if (!size || *size > cap) {
    std::ostringstream os;
    os << "latent space K^(HW) = " << bundle.num_codes() << "^" << bundle.latent_cells();
    if (size) os << " = " << *size;
    os << " exceeds the enumeration cap of " << cap
       << "; use beam search (or random sampling) to select a subset instead";
    throw Error(Errc::capacity_exceeded, os.str());
  }
  std::vector<ScoredCode> out(static_cast<std::size_t>(*size));
  parallel_for(out.size(), threads, [&](std::size_t r) {
    LatentCode z = code_from_rank(bundle, r);
    const double lm = marginal_logprob(bundle, z);
    out[r] = ScoredCode{std::move(z), lm, std::nullopt};
  });
  return out;
}

Selection select_random(const ModelBundle& bundle, const SelectionConfig& cfg) {
  if (cfg.n == 0) throw Error(Errc::invalid_argument, "selection needs N >= 1");
  const auto classes = resolve_classes(bundle, cfg.class_set);
  const std::size_t budget = cfg.max_draws > 0 ? cfg.max_draws : 20 * cfg.n;

  Selection sel;
  sel.method = SelectMethod::random_sampling;
  sel.requested = cfg.n;
  Rng rng(cfg.seed);
  std::set<LatentCode> seen;
  while (sel.codes.size() < cfg.n && sel.draws < budget) {
    const std::size_t c = classes[rng.below(classes.size())];
    LatentCode z = sample_prior(bundle, c, rng);
    ++sel.draws;
    if (seen.insert(z).second) sel.codes.push_back(ScoredCode{std::move(z), 0.0, c});
  }
  parallel_for(sel.codes.size(), cfg.threads, [&](std::size_t i) {
    sel.codes[i].log_marginal = marginal_logprob(bundle, sel.codes[i].code);
  });
  return sel;
}

BeamResult beam_search(const ModelBundle& bundle, const PrefixState& init,
                       std::size_t beam_width, std::size_t threads) {
  if (beam_width == 0) throw Error(Errc::invalid_argument, "beam width must be >= 1");
  if (init.classes.empty()) throw Error(Errc::invalid_argument, "beam search needs a class");
  if (init.per_class_logprob.size() != init.classes.size()) {
    throw Error(Errc::invalid_argument, "prefix state class scores do not match its classes");
  }
  check_code(bundle, init.code);
  const std::size_t K = bundle.num_codes(), cells = init.code.size();
  const std::size_t n_classes = init.classes.size();

  LatentCode start = init.code;
  for (std::size_t i = init.filled; i < cells; ++i) start.indices[i] = 0;

  std::vector<Slot> beam(beam_width);
  for (auto& slot : beam) {
    slot.code = start;
    slot.per_class_logprob.assign(n_classes, kNegInf);
  }
  beam[0].per_class_logprob = init.per_class_logprob;
  beam[0].score = mix_classes(bundle, init.classes, init.per_class_logprob);
  beam[0].live = true;

  BeamResult result;
  std::vector<std::vector<double>> cond(beam_width, std::vector<double>(n_classes * K));
  std::vector<Candidate> candidates;
  candidates.reserve(beam_width * K);
  std::vector<double> child(n_classes);

  for (std::size_t pos = init.filled; pos < cells; ++pos) {
    parallel_for(beam_width, threads, [&](std::size_t b) {
      for (std::size_t j = 0; j < n_classes; ++j) {
        const auto all = prior_log_conditionals(bundle, beam[b].code, pos, init.classes[j]);
        std::copy_n(all.begin() + static_cast<std::ptrdiff_t>(pos * K), K,
                    cond[b].begin() + static_cast<std::ptrdiff_t>(j * K));
      }
    });
    result.extensions += static_cast<std::uint64_t>(beam_width) * K;

    candidates.clear();
    for (std::size_t b = 0; b < beam_width; ++b) {
      if (!beam[b].live) continue;
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < n_classes; ++j) {
          child[j] = beam[b].per_class_logprob[j] + cond[b][j * K + k];
        }
        candidates.push_back({mix_classes(bundle, init.classes, child), b,
                              static_cast<std::uint32_t>(k)});
      }
    }

    const auto ranks_before = [&](const Candidate& a, const Candidate& c) {
      if (a.score != c.score) return a.score > c.score;
      const auto& za = beam[a.slot].code.indices;
      const auto& zc = beam[c.slot].code.indices;
      for (std::size_t i = 0; i < pos; ++i) {
        if (za[i] != zc[i]) return za[i] < zc[i];
      }
      return a.token < c.token;
    };
    const std::size_t keep = std::min(beam_width, candidates.size());
    std::partial_sort(candidates.begin(),
                      candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      ranks_before);

    std::vector<Slot> next(beam_width);
    for (std::size_t t = 0; t < beam_width; ++t) {
      if (t < keep) {
        const Candidate& cand = candidates[t];
        const Slot& parent = beam[cand.slot];
        next[t].code = parent.code;
        next[t].code.indices[pos] = cand.token;
        next[t].per_class_logprob.resize(n_classes);
        for (std::size_t j = 0; j < n_classes; ++j) {
          next[t].per_class_logprob[j] =
              parent.per_class_logprob[j] + cond[cand.slot][j * K + cand.token];
        }
        next[t].score = cand.score;
        next[t].live = true;
      } else {
        // Dead slot: evaluated on the leading code so the network input stays valid.
        next[t].code = next[0].code;
        next[t].per_class_logprob.assign(n_classes, kNegInf);
      }
    }
    beam = std::move(next);
  }

  for (auto& slot : beam) {
    if (!slot.live) continue;
    PrefixState st{std::move(slot.code), cells, init.classes, std::move(slot.per_class_logprob)};
    result.items.push_back(BeamItem{std::move(st), slot.score});
  }
  return result;
}

Selection select_beam(const ModelBundle& bundle, const SelectionConfig& cfg) {
  if (cfg.n == 0 || cfg.s == 0) throw Error(Errc::invalid_argument, "beam selection needs N, s >= 1");
  const auto classes = resolve_classes(bundle, cfg.class_set);
  const std::size_t runs = cfg.s * classes.size();
  if (cfg.n % runs != 0) {
    throw Error(Errc::invalid_argument,
                "N=" + std::to_string(cfg.n) + " is not divisible by s*|C|=" +
                    std::to_string(runs) + " (beam width B = N / (s*|C|))");
  }
  const std::size_t B = cfg.n / runs;
  const std::size_t K = bundle.num_codes();

  // First tokens are drawn up front in (class, repeat) order so the runs can
  // proceed independently without touching the generator.
  Rng rng(cfg.seed);
  std::vector<PrefixState> starts;
  for (std::size_t c : classes) {
    for (std::size_t i = 0; i < cfg.s; ++i) {
      LatentCode z{bundle.latent_shape.at(0), bundle.latent_shape.at(1),
                   std::vector<std::uint32_t>(bundle.latent_cells(), 0)};
      const auto all = prior_log_conditionals(bundle, z, 0, c);
      z.indices[0] = static_cast<std::uint32_t>(rng.categorical_log({all.data(), K}));
      starts.push_back(make_prefix(bundle, std::move(z), 1, {c}));
    }
  }

  std::vector<BeamResult> results(starts.size());
  parallel_for(starts.size(), cfg.threads,
               [&](std::size_t r) { results[r] = beam_search(bundle, starts[r], B, 1); });

  Selection sel;
  sel.method = SelectMethod::beam_search;
  sel.requested = cfg.n;
  sel.beam_width = B;
  std::set<LatentCode> seen;
  for (std::size_t r = 0; r < results.size(); ++r) {
    sel.extensions += results[r].extensions;
    sel.run_extensions.push_back(results[r].extensions);
    for (auto& item : results[r].items) {
      if (seen.insert(item.state.code).second) {
        sel.codes.push_back(ScoredCode{item.state.code, 0.0, starts[r].classes.front()});
      }
    }
  }
  parallel_for(sel.codes.size(), cfg.threads, [&](std::size_t i) {
    sel.codes[i].log_marginal = marginal_logprob(bundle, sel.codes[i].code);
  });
  return sel;
}

Selection select_codes(const ModelBundle& bundle, const SelectionConfig& cfg) {
  switch (cfg.method) {
    case SelectMethod::exhaustive: {
      Selection sel;
      sel.method = SelectMethod::exhaustive;
      sel.codes = enumerate_all(bundle, cfg.enumeration_cap, cfg.threads);
      sel.requested = sel.codes.size();
      return sel;
    }
    case SelectMethod::random_sampling:
      return select_random(bundle, cfg);
    case SelectMethod::beam_search:
      return select_beam(bundle, cfg);
  }
  throw Error(Errc::invalid_argument, "unknown selection method");
}

std::string format_code_set(const std::vector<ScoredCode>& codes) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& sc : codes) {
    os << sc.log_marginal;
    for (auto idx : sc.code.indices) os << ' ' << idx;
    os << '\n';
  }
  return os.str();
}

void write_code_set(const std::vector<ScoredCode>& codes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot open " + path.string() + " for writing");
  out << format_code_set(codes);
  if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

std::vector<ScoredCode> read_code_set(const ModelBundle& bundle,
                                      const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string() + " for reading");
  std::vector<ScoredCode> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    ScoredCode sc;
    std::vector<std::uint32_t> idx;
    if (!(is >> sc.log_marginal)) {
      throw Error(Errc::malformed_metadata, path.string() + ":" + std::to_string(line_no) +
                                                ": expected a log-probability");
    }
    std::uint64_t v;
    while (is >> v) idx.push_back(static_cast<std::uint32_t>(v));
    if (!is.eof()) {
      throw Error(Errc::malformed_metadata,
                  path.string() + ":" + std::to_string(line_no) + ": bad index");
    }
    sc.code = make_code(bundle, std::move(idx));
    out.push_back(std::move(sc));
  }
  return out;
}

}  // namespace vqdm
