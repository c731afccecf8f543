#include "vqdm/cli.hpp"

#include <CLI11.hpp>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "container.hpp"
#include "vqdm/analysis.hpp"
#include "vqdm/bundle.hpp"
#include "vqdm/dataset.hpp"
#include "vqdm/error.hpp"
#include "vqdm/mixture.hpp"
#include "vqdm/parallel.hpp"
#include "vqdm/select.hpp"
#include "vqdm/synthetic.hpp"

namespace vqdm {

namespace {

struct DistillArgs {
  std::string bundle, method = "beam", weighting, out, codes_out, classes;
  std::size_t n = 16, s = 1, max_draws = 0;
  std::uint64_t seed = 0, cap = kDefaultEnumerationCap;
};

struct DataArgs {
  std::string images, preprocess = "jitter";
  std::uint64_t jitter_seed = 0;
  std::size_t limit = 0;
};

struct EvalArgs {
  std::string mixture, out;
  DataArgs data;
};

struct InpaintArgs {
  std::string mixture, mask = "none", mode = "mean", out;
  DataArgs data;
  std::uint64_t seed = 0;
  std::size_t columns = 10;
};

struct SampleArgs {
  std::string mixture, out;
  std::size_t count = 16, columns = 8;
  std::uint64_t seed = 0;
  std::optional<std::size_t> class_id;
};

struct CdfArgs {
  std::string bundle, mode = "exhaustive", out;
  std::size_t draws = 10000;
  std::uint64_t seed = 0, cap = kDefaultEnumerationCap;
};

struct MatrixArgs {
  std::string mixture, out;
  DataArgs data;
};

struct VerifyArgs {
  std::string bundle, out;
};

struct SynthArgs {
  std::string out, pixel_model = "gaussian", latent = "2x2", image = "1x4x4";
  std::size_t num_codes = 4, code_dim = 2, classes = 1, prior_hidden = 8, prior_depth = 1;
  std::uint64_t seed = 0;
  double weight_scale = 0.5;
  bool uniform_prior = false;
};

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoul(tok));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, "bad integer '" + tok + "' in list '" + text + "'");
    }
  }
  return out;
}

Shape parse_dims(const std::string& text, std::size_t rank) {
  std::string csv = text;
  std::replace(csv.begin(), csv.end(), 'x', ',');
  Shape out = parse_list(csv);
  if (out.size() != rank) {
    throw Error(Errc::invalid_argument, "expected " + std::to_string(rank) +
                                            " dimensions in '" + text + "'");
  }
  return out;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    detail::write_file(path, text);
  }
}

void log_config(std::ostream& err, const std::string& command, const nlohmann::json& cfg,
                std::size_t threads) {
  nlohmann::json line = cfg;
  line["command"] = command;
  line["threads"] = threads;
  err << "[vqdm] config " << line.dump() << '\n';
}

std::vector<Tensor> load_dataset(const DataArgs& a, const Shape& image_shape) {
  IdxImages raw = read_idx_images(a.images);
  if (a.limit > 0 && raw.images.size() > a.limit) raw.images.resize(a.limit);
  Preprocess mode;
  if (a.preprocess == "jitter") {
    mode = Preprocess::jitter;
  } else if (a.preprocess == "scale") {
    mode = Preprocess::scale;
  } else {
    throw Error(Errc::invalid_argument, "unknown --preprocess '" + a.preprocess + "'");
  }
  return preprocess_images(raw, image_shape, mode, a.jitter_seed);
}

nlohmann::json data_json(const DataArgs& a) {
  return {{"images", a.images},
          {"preprocess", a.preprocess},
          {"jitter_seed", a.jitter_seed},
          {"limit", a.limit}};
}

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--images", a.images, "IDX ubyte image file")->required();
  cmd->add_option("--preprocess", a.preprocess, "jitter | scale")
      ->check(CLI::IsMember({"jitter", "scale"}));
  cmd->add_option("--jitter-seed", a.jitter_seed, "seed for uniform dequantization noise");
  cmd->add_option("--limit", a.limit, "use only the first N images (0 = all)");
}

int cmd_distill(const DistillArgs& a, std::size_t threads, std::ostream& out,
                std::ostream& err) {
  const ModelBundle bundle = load_bundle(a.bundle);
  SelectionConfig cfg;
  const auto method = parse_select_method(a.method);
  if (!method) throw Error(Errc::invalid_argument, "unknown --method '" + a.method + "'");
  cfg.method = *method;
  cfg.n = a.n;
  cfg.s = a.s;
  cfg.class_set = parse_list(a.classes);
  cfg.seed = a.seed;
  cfg.max_draws = a.max_draws;
  cfg.enumeration_cap = a.cap;
  cfg.threads = threads;

  std::string weighting_text = a.weighting;
  if (weighting_text.empty()) {
    weighting_text = cfg.method == SelectMethod::exhaustive ? "prior" : "uniform";
  }
  const auto weighting = parse_weighting(weighting_text);
  if (!weighting) throw Error(Errc::invalid_argument, "unknown --weighting '" + weighting_text + "'");

  log_config(err, "distill",
             {{"bundle", a.bundle},
              {"method", select_method_name(cfg.method)},
              {"n", cfg.n},
              {"s", cfg.s},
              {"classes", cfg.class_set},
              {"seed", cfg.seed},
              {"max_draws", cfg.max_draws},
              {"cap", cfg.enumeration_cap},
              {"weighting", weighting_text},
              {"out", a.out}},
             threads);

  Selection sel = select_codes(bundle, cfg);
  if (!a.codes_out.empty()) write_code_set(sel.codes, a.codes_out);
  const std::size_t achieved = sel.codes.size();
  const DistilledMixture m =
      compile(bundle, std::move(sel.codes), *weighting, select_method_name(cfg.method), threads);
  save_mixture(m, a.out);

  out << "method," << select_method_name(sel.method) << '\n'
      << "requested," << sel.requested << '\n'
      << "components," << achieved << '\n';
  if (sel.method == SelectMethod::random_sampling) out << "draws," << sel.draws << '\n';
  if (sel.method == SelectMethod::beam_search) {
    out << "beam_width," << sel.beam_width << '\n' << "extensions," << sel.extensions << '\n';
  }
  if (achieved < sel.requested) {
    err << "[vqdm] note: selection produced " << achieved << " distinct codes of "
        << sel.requested << " requested\n";
  }
  return 0;
}

int cmd_eval(const EvalArgs& a, std::size_t threads, std::ostream& out, std::ostream& err) {
  nlohmann::json cfg = data_json(a.data);
  cfg["mixture"] = a.mixture;
  log_config(err, "eval", cfg, threads);
  const DistilledMixture m = load_mixture(a.mixture);
  const auto data = load_dataset(a.data, m.image_shape());
  const double value = bpd(m, data, threads);
  std::ostringstream os;
  os << std::setprecision(17) << "bpd," << value << '\n'
     << "images," << data.size() << '\n'
     << "components," << m.size() << '\n'
     << "pixel_model," << pixel_model_name(m.model()) << '\n';
  write_text(a.out, os.str(), out);
  return 0;
}

int cmd_inpaint(const InpaintArgs& a, std::size_t threads, std::ostream& out,
                std::ostream& err) {
  nlohmann::json cfg = data_json(a.data);
  cfg.update({{"mixture", a.mixture}, {"mask", a.mask}, {"mode", a.mode}, {"seed", a.seed},
              {"out", a.out}});
  log_config(err, "inpaint", cfg, threads);
  const DistilledMixture m = load_mixture(a.mixture);
  const auto data = load_dataset(a.data, m.image_shape());
  const EvidenceMask mask = parse_mask_spec(a.mask, m.image_shape());
  std::vector<Tensor> filled(data.size());
  parallel_for(data.size(), threads, [&](std::size_t t) {
    if (a.mode == "mean") {
      filled[t] = inpaint(m, data[t], mask, InpaintMode::mean);
    } else if (a.mode == "sample") {
      filled[t] = inpaint(m, data[t], mask, InpaintMode::sample, a.seed + t);
    } else {
      filled[t] = map_complete(m, data[t], mask);
    }
  });
  if (filled.empty()) throw Error(Errc::invalid_argument, "inpaint: no images");
  write_pgm_grid(a.out, filled, a.columns);
  out << "images," << filled.size() << '\n'
      << "unobserved_pixels," << (mask.pixels() - mask.observed_count()) << '\n';
  return 0;
}

int cmd_sample(const SampleArgs& a, std::size_t threads, std::ostream& out, std::ostream& err) {
  nlohmann::json cfg{{"mixture", a.mixture}, {"count", a.count}, {"seed", a.seed},
                     {"out", a.out}};
  cfg["class"] = a.class_id ? nlohmann::json(*a.class_id) : nlohmann::json(nullptr);
  log_config(err, "sample", cfg, threads);
  const DistilledMixture m = load_mixture(a.mixture);
  std::vector<Tensor> images;
  for (auto& s : sample_many(m, a.count, a.seed, a.class_id)) images.push_back(std::move(s.image));
  if (images.empty()) throw Error(Errc::invalid_argument, "sample: --count must be >= 1");
  write_pgm_grid(a.out, images, a.columns);
  out << "samples," << images.size() << '\n';
  return 0;
}

int cmd_cdf(const CdfArgs& a, std::size_t threads, std::ostream& out, std::ostream& err) {
  log_config(err, "cdf",
             {{"bundle", a.bundle}, {"mode", a.mode}, {"draws", a.draws}, {"seed", a.seed},
              {"cap", a.cap}, {"out", a.out}},
             threads);
  const ModelBundle bundle = load_bundle(a.bundle);
  CdfMode mode;
  mode.kind = a.mode == "exhaustive" ? CdfMode::Kind::exhaustive : CdfMode::Kind::sampled;
  mode.draws = a.draws;
  mode.seed = a.seed;
  mode.enumeration_cap = a.cap;
  mode.threads = threads;
  write_text(a.out, format_utilization(utilization_cdf(bundle, mode)), out);
  return 0;
}

int cmd_matrix(const MatrixArgs& a, std::size_t threads, std::ostream& out, std::ostream& err) {
  nlohmann::json cfg = data_json(a.data);
  cfg.update({{"mixture", a.mixture}, {"out", a.out}});
  log_config(err, "loglike-matrix", cfg, threads);
  const DistilledMixture m = load_mixture(a.mixture);
  const auto data = load_dataset(a.data, m.image_shape());
  write_text(a.out, format_loglike_matrix(m, component_loglike_matrix(m, data, threads)), out);
  return 0;
}

int cmd_verify(const VerifyArgs& a, std::size_t threads, std::ostream& out, std::ostream& err) {
  log_config(err, "verify", {{"bundle", a.bundle}, {"out", a.out}}, threads);
  const ModelBundle b = load_bundle(a.bundle);
  std::ostringstream os;
  os << std::setprecision(17);
  os << "status,ok\n"
     << "format_version," << b.format_version << '\n'
     << "pixel_model," << pixel_model_name(b.pixel_model) << '\n'
     << "image_shape," << shape_str(b.image_shape) << '\n'
     << "latent_shape," << shape_str(b.latent_shape) << '\n'
     << "num_codes," << b.num_codes() << '\n'
     << "code_dim," << b.code_dim() << '\n'
     << "num_classes," << b.num_classes << '\n';
  const auto size = latent_space_size(b);
  os << "latent_space_size," << (size ? std::to_string(*size) : std::string("overflow")) << '\n'
     << "enumerable," << (size && *size <= kDefaultEnumerationCap ? "yes" : "no") << '\n'
     << "encoder_layers," << b.encoder.size() << '\n'
     << "decoder_layers," << b.decoder.size() << '\n'
     << "prior_layers," << b.prior.size() << '\n'
     << "blobs," << b.tensors.size() << '\n';
  write_text(a.out, os.str(), out);
  return 0;
}

int cmd_synth(const SynthArgs& a, std::size_t threads, std::ostream& out, std::ostream& err) {
  log_config(err, "synth",
             {{"out", a.out}, {"K", a.num_codes}, {"D", a.code_dim}, {"latent", a.latent},
              {"image", a.image}, {"classes", a.classes}, {"pixel_model", a.pixel_model},
              {"seed", a.seed}, {"weight_scale", a.weight_scale},
              {"uniform_prior", a.uniform_prior}},
             threads);
  SyntheticSpec spec;
  spec.num_codes = a.num_codes;
  spec.code_dim = a.code_dim;
  const Shape latent = parse_dims(a.latent, 2);
  spec.latent_h = latent[0];
  spec.latent_w = latent[1];
  spec.image_shape = parse_dims(a.image, 3);
  spec.pixel_model = a.pixel_model == "categorical" ? PixelModel::categorical : PixelModel::gaussian;
  spec.num_classes = a.classes;
  spec.prior_hidden = a.prior_hidden;
  spec.prior_depth = a.prior_depth;
  spec.weight_scale = a.weight_scale;
  spec.seed = a.seed;
  ModelBundle b = make_synthetic_bundle(spec);
  if (a.uniform_prior) zero_prior(b);
  save_bundle(b, a.out);
  out << "wrote," << a.out << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"vqdm: distill VQ-VAE latent priors into tractable mixtures and query them"};
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = $VQDM_THREADS or all cores)");

  DistillArgs distill;
  auto* c_distill = app.add_subcommand("distill", "select latent codes and compile a mixture");
  c_distill->add_option("--bundle", distill.bundle, "model bundle")->required();
  c_distill->add_option("--method", distill.method, "exhaustive | random | beam")
      ->check(CLI::IsMember({"exhaustive", "random", "random_sampling", "beam", "beam_search"}));
  c_distill->add_option("--n", distill.n, "target component count N");
  c_distill->add_option("--s", distill.s, "first-token samples per class (beam)");
  c_distill->add_option("--classes", distill.classes, "comma-separated class ids (default all)");
  c_distill->add_option("--seed", distill.seed, "selection seed");
  c_distill->add_option("--max-draws", distill.max_draws, "random sampling budget (0 = 20N)");
  c_distill->add_option("--cap", distill.cap, "enumeration cap on K^(HW)");
  c_distill->add_option("--weighting", distill.weighting,
                        "uniform | prior (default: prior for exhaustive, else uniform)");
  c_distill->add_option("--codes-out", distill.codes_out, "write the selected code set as text");
  c_distill->add_option("--out", distill.out, "mixture sidecar path")->required();

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "bits per dimension of a dataset");
  c_eval->add_option("--mixture", eval.mixture, "mixture sidecar")->required();
  add_data_options(c_eval, eval.data);
  c_eval->add_option("--out", eval.out, "report path (default stdout)");

  InpaintArgs inp;
  auto* c_inpaint = app.add_subcommand("inpaint", "fill occluded pixels");
  c_inpaint->add_option("--mixture", inp.mixture, "mixture sidecar")->required();
  add_data_options(c_inpaint, inp.data);
  c_inpaint->add_option("--mask", inp.mask, "occlusion: none|top|bottom|left|right|rect:r0,c0,r1,c1 (join with +)");
  c_inpaint->add_option("--mode", inp.mode, "mean | sample | map")
      ->check(CLI::IsMember({"mean", "sample", "map"}));
  c_inpaint->add_option("--seed", inp.seed, "seed for sample mode");
  c_inpaint->add_option("--columns", inp.columns, "images per grid row");
  c_inpaint->add_option("--out", inp.out, "PGM grid path")->required();

  SampleArgs smp;
  auto* c_sample = app.add_subcommand("sample", "draw images from a mixture");
  c_sample->add_option("--mixture", smp.mixture, "mixture sidecar")->required();
  c_sample->add_option("--count", smp.count, "number of samples");
  c_sample->add_option("--seed", smp.seed, "sampling seed");
  c_sample->add_option("--class", smp.class_id, "restrict to components from this class");
  c_sample->add_option("--columns", smp.columns, "images per grid row");
  c_sample->add_option("--out", smp.out, "PGM grid path")->required();

  CdfArgs cdf;
  auto* c_cdf = app.add_subcommand("cdf", "latent-space utilization CDF of the prior");
  c_cdf->add_option("--bundle", cdf.bundle, "model bundle")->required();
  c_cdf->add_option("--mode", cdf.mode, "exhaustive | sampled")
      ->check(CLI::IsMember({"exhaustive", "sampled"}));
  c_cdf->add_option("--draws", cdf.draws, "prior draws in sampled mode");
  c_cdf->add_option("--seed", cdf.seed, "seed in sampled mode");
  c_cdf->add_option("--cap", cdf.cap, "enumeration cap on K^(HW)");
  c_cdf->add_option("--out", cdf.out, "report path (default stdout)");

  MatrixArgs mat;
  auto* c_matrix =
      app.add_subcommand("loglike-matrix", "per-component joint log-likelihood matrix");
  c_matrix->add_option("--mixture", mat.mixture, "mixture sidecar")->required();
  add_data_options(c_matrix, mat.data);
  c_matrix->add_option("--out", mat.out, "CSV path (default stdout)");

  VerifyArgs ver;
  auto* c_verify = app.add_subcommand("verify", "validate a model bundle");
  c_verify->add_option("--bundle", ver.bundle, "model bundle")->required();
  c_verify->add_option("--out", ver.out, "report path (default stdout)");

  SynthArgs syn;
  auto* c_synth = app.add_subcommand("synth", "write a random-weight bundle for smoke tests");
  c_synth->add_option("--out", syn.out, "bundle path")->required();
  c_synth->add_option("--K", syn.num_codes, "codebook size");
  c_synth->add_option("--D", syn.code_dim, "codeword length");
  c_synth->add_option("--latent", syn.latent, "latent grid HxW");
  c_synth->add_option("--image", syn.image, "image shape dxhxw");
  c_synth->add_option("--classes", syn.classes, "number of classes");
  c_synth->add_option("--pixel-model", syn.pixel_model, "gaussian | categorical")
      ->check(CLI::IsMember({"gaussian", "categorical"}));
  c_synth->add_option("--prior-hidden", syn.prior_hidden, "prior channel width");
  c_synth->add_option("--prior-depth", syn.prior_depth, "hidden masked layers");
  c_synth->add_option("--weight-scale", syn.weight_scale, "weight standard deviation");
  c_synth->add_option("--seed", syn.seed, "weight seed");
  c_synth->add_flag("--uniform-prior", syn.uniform_prior, "zero the prior weights");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream help_out, help_err;
    const int code = app.exit(e, help_out, help_err);
    out << help_out.str();
    err << help_err.str();
    return code == 0 ? 0 : 2;
  }

  const std::size_t workers = resolve_threads(threads);
  try {
    if (*c_distill) return cmd_distill(distill, workers, out, err);
    if (*c_eval) return cmd_eval(eval, workers, out, err);
    if (*c_inpaint) return cmd_inpaint(inp, workers, out, err);
    if (*c_sample) return cmd_sample(smp, workers, out, err);
    if (*c_cdf) return cmd_cdf(cdf, workers, out, err);
    if (*c_matrix) return cmd_matrix(mat, workers, out, err);
    if (*c_verify) return cmd_verify(ver, workers, out, err);
    if (*c_synth) return cmd_synth(syn, workers, out, err);
  } catch (const Error& e) {
    err << "[vqdm] error (" << errc_name(e.code()) << "): " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "[vqdm] error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace vqdm
