#pragma once

// The distilled model: a finite mixture whose components are fully
// factorized leaf distributions, one per selected latent code. Once compiled
// it answers likelihood, marginal, conditional, MAP and sampling queries
// without touching the neural decoder again.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqdm/bundle.hpp"
#include "vqdm/select.hpp"
#include "vqdm/vq.hpp"

namespace vqdm {

enum class Weighting { uniform, prior };

const char* weighting_name(Weighting w);
std::optional<Weighting> parse_weighting(std::string_view name);

struct ComponentInfo {
  LatentCode code;
  std::optional<std::size_t> class_id;
  double log_marginal = 0.0;

  bool operator==(const ComponentInfo&) const = default;
};

class DistilledMixture {
 public:
  DistilledMixture() = default;
  // Checks that every component matches `image_shape`, that leaf invariants
  // hold and that log_weights log-sum-exp to 0 within 1e-9.
  DistilledMixture(PixelModel model, Shape image_shape, std::vector<LeafParams> components,
                   std::vector<double> log_weights, std::vector<ComponentInfo> provenance = {},
                   std::string method = "manual", Weighting weighting = Weighting::uniform);

  PixelModel model() const noexcept { return model_; }
  const Shape& image_shape() const noexcept { return image_shape_; }
  std::size_t pixels() const noexcept { return shape_numel(image_shape_); }
  std::size_t size() const noexcept { return components_.size(); }
  const std::vector<LeafParams>& components() const noexcept { return components_; }
  const std::vector<double>& log_weights() const noexcept { return log_weights_; }
  const std::vector<ComponentInfo>& provenance() const noexcept { return provenance_; }
  const std::string& method() const noexcept { return method_; }
  Weighting weighting() const noexcept { return weighting_; }

  // leaf_logpdf of component n over the observed pixels of `mask`.
  double component_logpdf(std::size_t n, const Tensor& x, const EvidenceMask& mask) const;

  bool operator==(const DistilledMixture& other) const;

 private:
  PixelModel model_ = PixelModel::gaussian;
  Shape image_shape_;
  std::vector<LeafParams> components_;
  std::vector<double> log_weights_;
  std::vector<ComponentInfo> provenance_;
  std::string method_;
  Weighting weighting_ = Weighting::uniform;
  // Gaussian only: -0.5 log(2 pi) - log(std), per component and pixel.
  std::vector<std::vector<double>> log_norm_;
};

// Decodes each code once and weights the components. Codes are put in
// lexicographic order first, so the result does not depend on input order.
// Prior weighting renormalizes p(z) over the given set.
DistilledMixture compile(const ModelBundle& bundle, std::vector<ScoredCode> codes,
                         Weighting weighting, std::string method = "manual",
                         std::size_t threads = 1);

// log_weight_n + component_logpdf_n for every component.
std::vector<double> joint_logpdfs(const DistilledMixture& m, const Tensor& x,
                                  const EvidenceMask& mask);

double logpdf(const DistilledMixture& m, const Tensor& x, const EvidenceMask& mask);

// log p(x_query | x_observed): components reweighted by their posterior on
// the observed pixels. The masks must be disjoint.
double conditional_logpdf(const DistilledMixture& m, const Tensor& x,
                          const EvidenceMask& observed, const EvidenceMask& query);

std::vector<double> posterior_over_components(const DistilledMixture& m, const Tensor& x,
                                              const EvidenceMask& mask);

// Average of (-log2 p(x) / S + offset); offset is 8 for Gaussian leaves on
// [0,1]-rescaled 8-bit data and 0 for categorical leaves.
double bpd_from_logliks(std::span<const double> logliks, std::size_t pixels, double offset);
double bpd_offset(PixelModel model);
double bpd(const DistilledMixture& m, const std::vector<Tensor>& dataset,
           std::size_t threads = 1);

enum class InpaintMode { mean, sample };

// Unobserved pixels are filled; observed pixels are copied through.
Tensor inpaint(const DistilledMixture& m, const Tensor& x_obs, const EvidenceMask& mask,
               InpaintMode mode = InpaintMode::mean, std::uint64_t seed = 0);

// Fills unobserved pixels with the leaf modes of the posterior-argmax component.
Tensor map_complete(const DistilledMixture& m, const Tensor& x_obs, const EvidenceMask& mask);

struct MixtureSample {
  Tensor image;
  std::size_t component = 0;
};

// Component drawn by weight (restricted to components from `class_filter` if
// given), then every pixel from its leaf. Gaussian draws are clamped to [0,1].
MixtureSample sample(const DistilledMixture& m, std::uint64_t seed,
                     std::optional<std::size_t> class_filter = std::nullopt);
std::vector<MixtureSample> sample_many(const DistilledMixture& m, std::size_t count,
                                       std::uint64_t seed,
                                       std::optional<std::size_t> class_filter = std::nullopt);

// Binary sidecar in the bundle container layout (magic "VQDMMIXT"), float64 blobs.
std::string serialize_mixture(const DistilledMixture& m);
DistilledMixture parse_mixture(const std::string& bytes);
void save_mixture(const DistilledMixture& m, const std::filesystem::path& path);
DistilledMixture load_mixture(const std::filesystem::path& path);

}  // namespace vqdm
