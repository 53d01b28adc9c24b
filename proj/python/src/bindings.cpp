#include "rbno/experiment.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace rbno;

PYBIND11_MODULE(_rbno, m) {
  m.doc() = "Reduced-basis neural operators with derivative-informed training";

  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  // field
  py::class_<Mesh1D>(m, "Mesh1D")
      .def_readonly("n_el", &Mesh1D::n_el)
      .def_readonly("h", &Mesh1D::h)
      .def_readonly("nodes", &Mesh1D::nodes)
      .def_readonly("M", &Mesh1D::M)
      .def_readonly("K", &Mesh1D::K)
      .def_property_readonly("dim", &Mesh1D::dim);
  m.def("assemble_mesh", &assemble_mesh, py::arg("n_el"));

  py::class_<SpectralCovariance>(m, "SpectralCovariance")
      .def_readonly("mesh", &SpectralCovariance::mesh)
      .def_readonly("Phi", &SpectralCovariance::Phi)
      .def_readonly("rho", &SpectralCovariance::rho)
      .def_readonly("mu", &SpectralCovariance::mu)
      .def_property_readonly("dim", &SpectralCovariance::dim);
  m.def("build_covariance", &build_covariance, py::arg("mesh"), py::arg("a_delta"), py::arg("a_I"), py::arg("alpha"));
  m.def("whiten", &whiten);
  m.def("unwhiten", &unwhiten);
  m.def("cm_inner", &cm_inner);
  m.def(
      "sample_field",
      [](const SpectralCovariance& cov, std::uint64_t seed, std::uint64_t stream) {
        CounterRng rng(seed, stream);
        return sample_field(cov, rng);
      },
      py::arg("cov"), py::arg("seed"), py::arg("stream") = 0);

  // pde
  py::enum_<ProblemKind>(m, "ProblemKind")
      .value("SemilinearElliptic", ProblemKind::SemilinearElliptic)
      .value("SteadyBurgers", ProblemKind::SteadyBurgers);
  py::class_<PdeProblem>(m, "PdeProblem")
      .def_readonly("kind", &PdeProblem::kind)
      .def_readonly("mesh", &PdeProblem::mesh)
      .def_readonly("dirichlet_dofs", &PdeProblem::dirichlet_dofs);
  py::class_<Benchmark>(m, "Benchmark").def_readonly("problem", &Benchmark::problem).def_readonly("cov", &Benchmark::cov);
  m.def("make_benchmark", py::overload_cast<ProblemKind, int>(&make_benchmark), py::arg("kind"), py::arg("n_el") = 256);
  m.def("solve", py::overload_cast<const PdeProblem&, const Vec&, SolveStats*>(&solve), py::arg("problem"), py::arg("x"),
        py::arg("stats") = nullptr);
  m.def("jacobian", &jacobian, py::arg("problem"), py::arg("x"), py::arg("y"));
  m.def("residual", &residual, py::arg("problem"), py::arg("y"), py::arg("x"));
  py::class_<SampleSet>(m, "SampleSet")
      .def_readonly("problem", &SampleSet::problem)
      .def_readonly("seed", &SampleSet::seed)
      .def_readonly("X", &SampleSet::X)
      .def_readonly("Y", &SampleSet::Y)
      .def_readonly("J", &SampleSet::J)
      .def_readonly("iterations", &SampleSet::iterations)
      .def_property_readonly("size", &SampleSet::size);
  m.def("generate_dataset", &generate_dataset, py::arg("benchmark"), py::arg("n"), py::arg("seed"),
        py::arg("with_jacobians") = true);

  // reduction
  py::enum_<BasisKind>(m, "BasisKind")
      .value("InputPCA", BasisKind::InputPCA)
      .value("OutputPCA", BasisKind::OutputPCA)
      .value("InputDIS", BasisKind::InputDIS)
      .value("OutputDIS", BasisKind::OutputDIS);
  py::class_<ReducedBasis>(m, "ReducedBasis")
      .def_readonly("kind", &ReducedBasis::kind)
      .def_readonly("r", &ReducedBasis::r)
      .def_readonly("cols", &ReducedBasis::cols)
      .def_readonly("encoder", &ReducedBasis::encoder)
      .def_readonly("eigs", &ReducedBasis::eigs)
      .def_readonly("mean", &ReducedBasis::mean);
  m.def("input_pca", &input_pca, py::arg("cov"), py::arg("r"));
  m.def("output_pca", py::overload_cast<const SampleSet&, const Mesh1D&, Index>(&output_pca), py::arg("set"),
        py::arg("mesh"), py::arg("r"));
  m.def("input_dis", py::overload_cast<const SampleSet&, const SpectralCovariance&, Index>(&input_dis), py::arg("set"),
        py::arg("cov"), py::arg("r"));
  m.def("output_dis", py::overload_cast<const SampleSet&, const SpectralCovariance&, Index>(&output_dis),
        py::arg("set"), py::arg("cov"), py::arg("r"));
  m.def("truncate", [](const ReducedBasis& b, Index r) { return rbno::truncate(b, r); });
  m.def("trailing_sum", &trailing_sum);
  m.def("encode_input", &encode_input);
  m.def("decode_input", &decode_input);
  m.def("encode_output", &encode_output);
  m.def("decode_output", &decode_output);

  // surrogate
  py::enum_<Activation>(m, "Activation")
      .value("Softplus", Activation::Softplus)
      .value("SiLU", Activation::SiLU)
      .value("GeLU", Activation::GeLU);
  py::class_<LatentNetwork>(m, "LatentNetwork")
      .def_readonly("r", &LatentNetwork::r)
      .def_readonly("width", &LatentNetwork::width)
      .def_readonly("depth", &LatentNetwork::depth)
      .def_property_readonly("n_params", &LatentNetwork::n_params)
      .def("params", &LatentNetwork::params)
      .def("set_params", &LatentNetwork::set_params);
  m.def("make_network", &make_network, py::arg("r"), py::arg("depth"), py::arg("width"),
        py::arg("activation") = Activation::Softplus);
  m.def("xavier_init", &xavier_init, py::arg("net"), py::arg("seed"));
  m.def("forward", &forward);
  m.def("net_jacobian", &net_jacobian);
  py::class_<Surrogate>(m, "Surrogate")
      .def(py::init([](ReducedBasis in, ReducedBasis out, LatentNetwork net) {
             Surrogate s{std::move(in), std::move(out), std::move(net)};
             s.validate();
             return s;
           }),
           py::arg("input_basis"), py::arg("output_basis"), py::arg("net"))
      .def_readonly("input_basis", &Surrogate::in)
      .def_readonly("output_basis", &Surrogate::out)
      .def_readonly("net", &Surrogate::net);
  m.def("predict", &predict);
  m.def("predict_jacobian", &predict_jacobian);

  // metrics
  py::class_<ErrorReport>(m, "ErrorReport")
      .def_readonly("name", &ErrorReport::name)
      .def_readonly("value", &ErrorReport::value)
      .def_readonly("denominator", &ErrorReport::denominator)
      .def_readonly("n_test", &ErrorReport::n_test);
  py::class_<GeneralizationResult>(m, "GeneralizationResult")
      .def_readonly("l2", &GeneralizationResult::l2)
      .def_readonly("h1", &GeneralizationResult::h1);
  m.def("evaluate_surrogate", &evaluate_surrogate, py::arg("test"), py::arg("cov"), py::arg("surrogate"));
  py::enum_<Reconstruction>(m, "Reconstruction")
      .value("Output", Reconstruction::Output)
      .value("JacobianByOutput", Reconstruction::JacobianByOutput)
      .value("JacobianByInput", Reconstruction::JacobianByInput);
  m.def("reconstruction_error",
        py::overload_cast<const SampleSet&, const SpectralCovariance&, const ReducedBasis&, Reconstruction>(
            &reconstruction_error),
        py::arg("test"), py::arg("cov"), py::arg("basis"), py::arg("quantity"));
  m.def("csv_header", &csv_header);

  // theory and configuration
  py::class_<TheoryRow>(m, "TheoryRow")
      .def_readonly("degree", &TheoryRow::degree)
      .def_readonly("dim_in", &TheoryRow::dim_in)
      .def_readonly("k_d", &TheoryRow::k_d)
      .def_readonly("k_h", &TheoryRow::k_h)
      .def_readonly("poincare_max_gap", &TheoryRow::poincare_max_gap);
  m.def("theory_suite", &theory_suite, py::arg("count"), py::arg("seed"));
  m.def(
      "preset_config",
      [](const std::string& name, ProblemKind kind) { return preset(name, kind).to_json().dump(); },
      py::arg("name"), py::arg("problem"), "Preset experiment config as a JSON string.");

  // artifacts
  m.def("load_sample_set", &load_sample_set, py::arg("dir"));
  m.def("load_basis", &load_basis, py::arg("dir"));
  m.def("load_network", &load_network, py::arg("dir"));
}
