#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vqdm/analysis.hpp"
#include "vqdm/bundle.hpp"
#include "vqdm/error.hpp"
#include "vqdm/mixture.hpp"
#include "vqdm/select.hpp"
#include "vqdm/synthetic.hpp"

namespace py = pybind11;
using namespace vqdm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a, const Shape& want) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape_numel(shape) != shape_numel(want)) {
    throw Error(Errc::shape_mismatch, "array of shape " + shape_str(shape) +
                                          " does not match image shape " + shape_str(want));
  }
  return Tensor(want, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
  return out;
}

std::vector<Tensor> to_batch(const Array& a, const Shape& image_shape) {
  const std::size_t S = shape_numel(image_shape);
  if (a.size() == 0 || static_cast<std::size_t>(a.size()) % S != 0) {
    throw Error(Errc::shape_mismatch, "batch size is not a multiple of the image size " +
                                          std::to_string(S));
  }
  std::vector<Tensor> out;
  for (std::size_t off = 0; off < static_cast<std::size_t>(a.size()); off += S) {
    out.emplace_back(image_shape, std::vector<double>(a.data() + off, a.data() + off + S));
  }
  return out;
}

EvidenceMask to_mask(const std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>& m,
                     std::size_t pixels) {
  if (!m) return EvidenceMask::all(pixels);
  if (static_cast<std::size_t>(m->size()) != pixels) {
    throw Error(Errc::shape_mismatch, "mask has " + std::to_string(m->size()) + " entries for " +
                                          std::to_string(pixels) + " pixels");
  }
  EvidenceMask out{std::vector<std::uint8_t>(pixels)};
  for (std::size_t i = 0; i < pixels; ++i) out.observed[i] = m->data()[i] ? 1 : 0;
  return out;
}

using BoolArray = std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>;

}  // namespace

PYBIND11_MODULE(_vqdm, m) {
  m.doc() = "Distill VQ-VAE latent priors into tractable mixtures";

  static py::exception<Error> error_type(m, "VqdmError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      error_type(("[" + std::string(errc_name(e.code())) + "] " + e.what()).c_str());
    }
  });

  py::class_<ModelBundle>(m, "Bundle")
      .def_property_readonly("num_codes", &ModelBundle::num_codes)
      .def_property_readonly("code_dim", &ModelBundle::code_dim)
      .def_property_readonly("num_classes", [](const ModelBundle& b) { return b.num_classes; })
      .def_property_readonly("class_prior", [](const ModelBundle& b) { return b.class_prior; })
      .def_property_readonly("image_shape", [](const ModelBundle& b) { return b.image_shape; })
      .def_property_readonly("latent_shape", [](const ModelBundle& b) { return b.latent_shape; })
      .def_property_readonly("pixel_model",
                             [](const ModelBundle& b) { return pixel_model_name(b.pixel_model); })
      .def("save", [](const ModelBundle& b, const std::filesystem::path& p) { save_bundle(b, p); })
      .def("__eq__", [](const ModelBundle& a, const ModelBundle& b) { return a == b; });

  m.def("load_bundle", &load_bundle, py::arg("path"));
  m.def("synthetic_bundle",
        [](std::size_t K, std::size_t D, std::size_t latent_h, std::size_t latent_w,
           std::size_t image_h, std::size_t image_w, std::size_t classes,
           const std::string& pixel_model, std::uint64_t seed, bool uniform_prior) {
          SyntheticSpec s;
          s.num_codes = K;
          s.code_dim = D;
          s.latent_h = latent_h;
          s.latent_w = latent_w;
          s.image_shape = {1, image_h, image_w};
          s.num_classes = classes;
          s.pixel_model =
              pixel_model == "categorical" ? PixelModel::categorical : PixelModel::gaussian;
          s.seed = seed;
          ModelBundle b = make_synthetic_bundle(s);
          if (uniform_prior) zero_prior(b);
          return b;
        },
        py::arg("num_codes") = 4, py::arg("code_dim") = 2, py::arg("latent_h") = 2,
        py::arg("latent_w") = 2, py::arg("image_h") = 4, py::arg("image_w") = 4,
        py::arg("num_classes") = 1, py::arg("pixel_model") = "gaussian", py::arg("seed") = 0,
        py::arg("uniform_prior") = false);

  m.def("marginal_logprob",
        [](const ModelBundle& b, std::vector<std::uint32_t> code) {
          return marginal_logprob(b, make_code(b, std::move(code)));
        },
        py::arg("bundle"), py::arg("code"));
  m.def("latent_space_size", &latent_space_size, py::arg("bundle"));

  py::class_<ScoredCode>(m, "ScoredCode")
      .def_property_readonly("code", [](const ScoredCode& s) { return s.code.indices; })
      .def_readonly("log_marginal", &ScoredCode::log_marginal)
      .def_readonly("class_id", &ScoredCode::class_id);

  py::class_<Selection>(m, "Selection")
      .def_property_readonly("method", [](const Selection& s) { return select_method_name(s.method); })
      .def_readonly("codes", &Selection::codes)
      .def_readonly("requested", &Selection::requested)
      .def_readonly("draws", &Selection::draws)
      .def_readonly("extensions", &Selection::extensions)
      .def_readonly("run_extensions", &Selection::run_extensions)
      .def_readonly("beam_width", &Selection::beam_width);

  m.def("select_codes",
        [](const ModelBundle& b, const std::string& method, std::size_t n, std::size_t s,
           std::vector<std::size_t> classes, std::uint64_t seed, std::size_t max_draws,
           std::uint64_t cap, std::size_t threads) {
          const auto parsed = parse_select_method(method);
          if (!parsed) throw Error(Errc::invalid_argument, "unknown method '" + method + "'");
          SelectionConfig cfg;
          cfg.method = *parsed;
          cfg.n = n;
          cfg.s = s;
          cfg.class_set = std::move(classes);
          cfg.seed = seed;
          cfg.max_draws = max_draws;
          cfg.enumeration_cap = cap;
          cfg.threads = threads;
          py::gil_scoped_release release;
          return select_codes(b, cfg);
        },
        py::arg("bundle"), py::arg("method") = "beam", py::arg("n") = 16, py::arg("s") = 1,
        py::arg("classes") = std::vector<std::size_t>{}, py::arg("seed") = 0,
        py::arg("max_draws") = 0, py::arg("cap") = kDefaultEnumerationCap,
        py::arg("threads") = 1);

  py::class_<DistilledMixture>(m, "Mixture")
      .def_property_readonly("size", &DistilledMixture::size)
      .def_property_readonly("pixels", &DistilledMixture::pixels)
      .def_property_readonly("image_shape", &DistilledMixture::image_shape)
      .def_property_readonly("method", &DistilledMixture::method)
      .def_property_readonly("weighting",
                             [](const DistilledMixture& x) { return weighting_name(x.weighting()); })
      .def_property_readonly("log_weights", &DistilledMixture::log_weights)
      .def_property_readonly("codes",
                             [](const DistilledMixture& x) {
                               std::vector<std::vector<std::uint32_t>> out;
                               for (const auto& p : x.provenance()) out.push_back(p.code.indices);
                               return out;
                             })
      .def("logpdf",
           [](const DistilledMixture& x, const Array& img, const BoolArray& mask) {
             return logpdf(x, to_tensor(img, x.image_shape()), to_mask(mask, x.pixels()));
           },
           py::arg("image"), py::arg("observed") = py::none())
      .def("conditional_logpdf",
           [](const DistilledMixture& x, const Array& img, const BoolArray& observed,
              const BoolArray& query) {
             return conditional_logpdf(x, to_tensor(img, x.image_shape()),
                                       to_mask(observed, x.pixels()), to_mask(query, x.pixels()));
           },
           py::arg("image"), py::arg("observed"), py::arg("query"))
      .def("posterior",
           [](const DistilledMixture& x, const Array& img, const BoolArray& mask) {
             return posterior_over_components(x, to_tensor(img, x.image_shape()),
                                              to_mask(mask, x.pixels()));
           },
           py::arg("image"), py::arg("observed") = py::none())
      .def("bpd",
           [](const DistilledMixture& x, const Array& batch, std::size_t threads) {
             const auto data = to_batch(batch, x.image_shape());
             py::gil_scoped_release release;
             return bpd(x, data, threads);
           },
           py::arg("images"), py::arg("threads") = 1)
      .def("inpaint",
           [](const DistilledMixture& x, const Array& img, const BoolArray& mask,
              const std::string& mode, std::uint64_t seed) {
             const Tensor t = to_tensor(img, x.image_shape());
             const EvidenceMask em = to_mask(mask, x.pixels());
             if (mode == "map") return to_array(map_complete(x, t, em));
             if (mode != "mean" && mode != "sample") {
               throw Error(Errc::invalid_argument, "inpaint mode must be mean, sample or map");
             }
             return to_array(inpaint(x, t, em, mode == "mean" ? InpaintMode::mean : InpaintMode::sample, seed));
           },
           py::arg("image"), py::arg("observed"), py::arg("mode") = "mean", py::arg("seed") = 0)
      .def("sample",
           [](const DistilledMixture& x, std::size_t count, std::uint64_t seed,
              std::optional<std::size_t> class_id) {
             py::list out;
             for (const auto& s : sample_many(x, count, seed, class_id)) {
               out.append(py::make_tuple(to_array(s.image), s.component));
             }
             return out;
           },
           py::arg("count"), py::arg("seed") = 0, py::arg("class_id") = py::none())
      .def("loglike_matrix",
           [](const DistilledMixture& x, const Array& batch, std::size_t threads) {
             return component_loglike_matrix(x, to_batch(batch, x.image_shape()), threads);
           },
           py::arg("images"), py::arg("threads") = 1)
      .def("save", [](const DistilledMixture& x, const std::filesystem::path& p) { save_mixture(x, p); })
      .def("to_bytes", [](const DistilledMixture& x) { return py::bytes(serialize_mixture(x)); })
      .def("__len__", &DistilledMixture::size)
      .def("__eq__", [](const DistilledMixture& a, const DistilledMixture& b) { return a == b; });

  m.def("compile",
        [](const ModelBundle& b, const Selection& sel, const std::string& weighting,
           std::size_t threads) {
          const auto w = parse_weighting(weighting);
          if (!w) throw Error(Errc::invalid_argument, "weighting must be uniform or prior");
          py::gil_scoped_release release;
          return compile(b, sel.codes, *w, select_method_name(sel.method), threads);
        },
        py::arg("bundle"), py::arg("selection"), py::arg("weighting") = "uniform",
        py::arg("threads") = 1);
  m.def("load_mixture", &load_mixture, py::arg("path"));

  m.def("utilization_cdf",
        [](const ModelBundle& b, const std::string& mode, std::size_t draws, std::uint64_t seed) {
          CdfMode cm;
          cm.kind = mode == "sampled" ? CdfMode::Kind::sampled : CdfMode::Kind::exhaustive;
          cm.draws = draws;
          cm.seed = seed;
          const UtilizationReport r = utilization_cdf(b, cm);
          py::dict out;
          out["sorted_logprobs"] = r.sorted_logprobs;
          out["cdf"] = r.cdf;
          out["idx_90"] = r.idx_90;
          out["idx_99"] = r.idx_99;
          out["fraction_90"] = r.fraction_90;
          out["fraction_99"] = r.fraction_99;
          out["covered_mass"] = r.covered_mass;
          out["report"] = format_utilization(r);
          return out;
        },
        py::arg("bundle"), py::arg("mode") = "exhaustive", py::arg("draws") = 10000,
        py::arg("seed") = 0);
}
