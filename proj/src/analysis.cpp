#include "vqdm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "vqdm/error.hpp"
#include "vqdm/parallel.hpp"
#include "vqdm/prior.hpp"
#include "vqdm/rng.hpp"

namespace vqdm {

namespace {

// Absorbs rounding in the running sum so that, e.g., 15 uniform masses of
// 1/16 still count as reaching 0.9.
constexpr double kLevelSlack = 1e-12;

std::optional<std::size_t> first_reaching(const std::vector<double>& cdf, double level) {
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    if (cdf[i] >= level - kLevelSlack) return i + 1;
  }
  return std::nullopt;
}

}  // namespace

UtilizationReport utilization_cdf(const ModelBundle& bundle, const CdfMode& mode) {
  UtilizationReport r;
  r.exhaustive = mode.kind == CdfMode::Kind::exhaustive;
  r.space_size = std::pow(static_cast<double>(bundle.num_codes()),
                          static_cast<double>(bundle.latent_cells()));

  if (r.exhaustive) {
    for (const auto& sc : enumerate_all(bundle, mode.enumeration_cap, mode.threads)) {
      r.sorted_logprobs.push_back(sc.log_marginal);
    }
  } else {
    if (mode.draws == 0) throw Error(Errc::invalid_argument, "sampled cdf needs draws >= 1");
    Rng rng(mode.seed);
    std::set<LatentCode> distinct;
    for (std::size_t i = 0; i < mode.draws; ++i) {
      const std::size_t c = static_cast<std::size_t>(rng.categorical(bundle.class_prior));
      distinct.insert(sample_prior(bundle, c, rng));
    }
    r.draws = mode.draws;
    const std::vector<LatentCode> codes(distinct.begin(), distinct.end());
    r.sorted_logprobs.resize(codes.size());
    parallel_for(codes.size(), mode.threads, [&](std::size_t i) {
      r.sorted_logprobs[i] = marginal_logprob(bundle, codes[i]);
    });
  }

  std::stable_sort(r.sorted_logprobs.begin(), r.sorted_logprobs.end(), std::greater<>());
  r.cdf.resize(r.sorted_logprobs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < r.cdf.size(); ++i) {
    acc += std::exp(r.sorted_logprobs[i]);
    r.cdf[i] = acc;
  }
  r.covered_mass = acc;
  r.idx_90 = first_reaching(r.cdf, 0.90);
  r.idx_99 = first_reaching(r.cdf, 0.99);
  if (r.idx_90) r.fraction_90 = static_cast<double>(*r.idx_90) / r.space_size;
  if (r.idx_99) r.fraction_99 = static_cast<double>(*r.idx_99) / r.space_size;
  return r;
}

std::string format_utilization(const UtilizationReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  const auto opt = [](const auto& v) -> std::string {
    if (!v) return "none";
    std::ostringstream s;
    s << std::setprecision(17) << *v;
    return s.str();
  };
  os << "# mode," << (r.exhaustive ? "exhaustive" : "sampled") << '\n';
  os << "# space_size," << r.space_size << '\n';
  os << "# distinct_codes," << r.sorted_logprobs.size() << '\n';
  if (!r.exhaustive) {
    os << "# draws," << r.draws << '\n';
    os << "# note,sampled cdf is a lower bound on covered mass\n";
  }
  os << "# covered_mass," << r.covered_mass << '\n';
  os << "# idx_90," << opt(r.idx_90) << '\n';
  os << "# idx_99," << opt(r.idx_99) << '\n';
  os << "# fraction_90," << opt(r.fraction_90) << '\n';
  os << "# fraction_99," << opt(r.fraction_99) << '\n';
  os << "rank,logprob,cdf\n";
  for (std::size_t i = 0; i < r.cdf.size(); ++i) {
    os << (i + 1) << ',' << r.sorted_logprobs[i] << ',' << r.cdf[i] << '\n';
  }
  return os.str();
}

std::vector<std::vector<double>> component_loglike_matrix(const DistilledMixture& m,
                                                          const std::vector<Tensor>& dataset,
                                                          std::size_t threads) {
  std::vector<std::vector<double>> out(m.size(), std::vector<double>(dataset.size()));
  const EvidenceMask full = EvidenceMask::all(m.pixels());
  parallel_for(dataset.size(), threads, [&](std::size_t t) {
    const auto joint = joint_logpdfs(m, dataset[t], full);
    for (std::size_t n = 0; n < m.size(); ++n) out[n][t] = joint[n];
  });
  return out;
}

std::string format_loglike_matrix(const DistilledMixture& m,
                                  const std::vector<std::vector<double>>& matrix) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "component,code";
  const std::size_t T = matrix.empty() ? 0 : matrix.front().size();
  for (std::size_t t = 0; t < T; ++t) os << ",sample_" << t;
  os << '\n';
  for (std::size_t n = 0; n < matrix.size(); ++n) {
    os << n << ',';
    if (n < m.provenance().size()) os << code_str(m.provenance()[n].code);
    for (double v : matrix[n]) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

}  // namespace vqdm
