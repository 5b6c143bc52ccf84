// numpy <-> sok glue. Arrays are copied in and out (C order, float64/complex128).

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli.hpp"
#include "sok/data.hpp"
#include "sok/errors.hpp"
#include "sok/fft.hpp"
#include "sok/fno.hpp"
#include "sok/spectral_ops.hpp"
#include "sok/train.hpp"

namespace py = pybind11;
using namespace sok;

namespace {

using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<Complex, py::array::c_style | py::array::forcecast>;

template <class T, class A>
Tensor<T> to_tensor(const A& a) {
  Shape s(a.shape(), a.shape() + a.ndim());
  return Tensor<T>(s, std::vector<T>(a.data(), a.data() + a.size()));
}

template <class T>
py::array_t<T> to_array(const Tensor<T>& t) {
  std::vector<py::ssize_t> s(t.shape().begin(), t.shape().end());
  py::array_t<T> out(s);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<std::size_t> all_axes(std::size_t rank) {
  std::vector<std::size_t> a(rank);
  for (std::size_t i = 0; i < rank; ++i) a[i] = i;
  return a;
}

py::dict dataset_dict(const Dataset& ds) {
  py::dict d;
  d["problem"] = ds.problem;
  d["inputs"] = to_array(ds.inputs);
  d["outputs"] = to_array(ds.outputs);
  d["n_train"] = ds.n_train;
  d["attrs"] = ds.attrs;
  d["resolution"] = ds.grid.resolution;
  d["domain_length"] = ds.grid.domain_length;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spectral operators, Fourier neural operators and datasets";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<LayoutError>(m, "LayoutError", base);
  py::register_exception<NyquistError>(m, "NyquistError", base);
  py::register_exception<NumericalError>(m, "NumericalError", base);
  auto fmt = py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<IntegrityError>(m, "IntegrityError", fmt);

  m.def(
      "fft",
      [](const ComplexArray& x, std::optional<std::vector<std::size_t>> axes) {
        const auto t = to_tensor<Complex>(x);
        return to_array(fft(t, axes ? *axes : all_axes(t.rank())).coeffs);
      },
      py::arg("x"), py::arg("axes") = py::none(), "Orthonormal FFT over the given axes (default all).");
  m.def(
      "ifft",
      [](const ComplexArray& x, std::optional<std::vector<std::size_t>> axes) {
        auto t = to_tensor<Complex>(x);
        const auto ax = axes ? *axes : all_axes(t.rank());
        return to_array(ifft_axes(std::move(t), ax));
      },
      py::arg("x"), py::arg("axes") = py::none());
  m.def(
      "power_spectrum",
      [](const RealArray& x, std::optional<std::vector<std::size_t>> axes) {
        const auto t = to_tensor<double>(x);
        return to_array(power_spectrum(t, axes ? *axes : all_axes(t.rank())));
      },
      py::arg("x"), py::arg("axes") = py::none());
  m.def(
      "spectral_resample",
      [](const RealArray& x, const std::vector<std::size_t>& res) {
        return to_array(spectral_resample(to_tensor<double>(x), res));
      },
      py::arg("x"), py::arg("resolution"), "Resample the trailing axes by zero-padding or truncating the spectrum.");

  m.def(
      "sample_grf",
      [](std::size_t resolution, std::size_t dim, double gamma, std::size_t k_max, double amplitude,
         std::uint64_t seed, std::uint64_t index) {
        GrfSpec s;
        s.resolution = resolution;
        s.dim = dim;
        s.gamma = gamma;
        s.k_max = k_max;
        s.amplitude = amplitude;
        s.seed = seed;
        return to_array(sample_grf(s, index));
      },
      py::arg("resolution") = 64, py::arg("dim") = 1, py::arg("gamma") = 2.0, py::arg("k_max") = 16,
      py::arg("amplitude") = 1.0, py::arg("seed") = 0, py::arg("index") = 0);

  m.def(
      "generate_dataset",
      [](const std::string& problem, std::size_t samples, std::size_t n_train, std::size_t resolution,
         std::size_t dim, double nu, double t, std::size_t k_max, std::uint64_t seed) {
        GenSpec g;
        g.problem = problem;
        g.samples = samples;
        g.n_train = n_train;
        g.grf.resolution = resolution;
        g.grf.dim = dim;
        g.grf.k_max = k_max;
        g.grf.seed = seed;
        g.nu = nu;
        g.t = t;
        return dataset_dict(generate_dataset(g));
      },
      py::arg("problem") = "heat", py::arg("samples") = 16, py::arg("n_train") = 0, py::arg("resolution") = 64,
      py::arg("dim") = 1, py::arg("nu") = 0.05, py::arg("t") = 1.0, py::arg("k_max") = 16, py::arg("seed") = 0);
  m.def(
      "read_dataset", [](const std::filesystem::path& p) { return dataset_dict(read_dataset(p)); }, py::arg("path"));

  py::class_<FnoModel>(m, "FnoModel")
      .def(py::init([](std::vector<std::size_t> n_modes, std::size_t hidden_channels, std::size_t n_layers,
                       std::size_t in_channels, std::size_t out_channels, const std::string& activation,
                       const std::string& factorization, double rank, std::uint64_t seed) {
             FnoConfig c;
             c.n_modes = std::move(n_modes);
             c.hidden_channels = hidden_channels;
             c.n_layers = n_layers;
             c.in_channels = in_channels;
             c.out_channels = out_channels;
             c.activation = parse_activation(activation);
             c.factorization = parse_factorization(factorization);
             c.rank = rank;
             return FnoModel(c, seed);
           }),
           py::arg("n_modes") = std::vector<std::size_t>{16}, py::arg("hidden_channels") = 16,
           py::arg("n_layers") = 4, py::arg("in_channels") = 1, py::arg("out_channels") = 1,
           py::arg("activation") = "gelu", py::arg("factorization") = "dense", py::arg("rank") = 1.0,
           py::arg("seed") = 0)
      .def("__call__", [](const FnoModel& mdl, const RealArray& x) { return to_array(mdl.forward(to_tensor<double>(x))); })
      .def_property_readonly("n_params", [](const FnoModel& mdl) { return mdl.params().scalar_count(); })
      .def_property_readonly("counted_params", [](const FnoModel& mdl) { return count_params(mdl.config()).total; })
      .def("config_json", [](const FnoModel& mdl) { return config_json(mdl.config()); })
      .def("save", [](const FnoModel& mdl, const std::filesystem::path& p) { write_checkpoint(p, mdl); });

  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& p) {
        auto ck = read_checkpoint(p);
        return py::make_tuple(std::move(ck.model), ck.input_stats.mean, ck.input_stats.std, ck.output_stats.mean,
                              ck.output_stats.std);
      },
      py::arg("path"), "Returns (model, in_mean, in_std, out_mean, out_std).");
  m.def(
      "predict",
      [](const std::filesystem::path& ckpt, const RealArray& x) {
        const auto ck = read_checkpoint(ckpt);
        return to_array(predict(ck.model, to_tensor<double>(x), ck.input_stats, ck.output_stats));
      },
      py::arg("checkpoint"), py::arg("x"), "Forward pass of a saved model in physical units.");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release nogil;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command line in-process; returns (exit_code, stdout, stderr).");
}
