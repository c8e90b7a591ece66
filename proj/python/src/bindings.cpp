#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>

#include "difiv/denoiser.hpp"
#include "difiv/errors.hpp"
#include "difiv/io.hpp"
#include "difiv/metrics.hpp"
#include "difiv/operators.hpp"
#include "difiv/optimizer.hpp"
#include "difiv/scene.hpp"
#include "difiv/sensor.hpp"

namespace py = pybind11;
using namespace difiv;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

HyperImage to_image(const Array& a, std::vector<double> wavelengths = {}) {
  if (a.ndim() != 3) throw DimensionError("expected a (bands, rows, cols) array");
  const Shape s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                static_cast<std::size_t>(a.shape(2))};
  return HyperImage(s, std::vector<double>(a.data(), a.data() + a.size()), std::move(wavelengths));
}

Array to_array(const HyperImage& img) {
  Array a({img.bands(), img.rows(), img.cols()});
  std::copy(img.data().begin(), img.data().end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hyperspectral/multispectral fusion with inter-image variability";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "ValueError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<SceneParams>(m, "SceneParams")
      .def(py::init<>())
      .def_readwrite("rows", &SceneParams::rows)
      .def_readwrite("cols", &SceneParams::cols)
      .def_readwrite("bands", &SceneParams::bands)
      .def_readwrite("endmembers", &SceneParams::endmembers)
      .def_readwrite("min_wavelength", &SceneParams::min_wavelength)
      .def_readwrite("max_wavelength", &SceneParams::max_wavelength);

  py::class_<VariabilityParams>(m, "VariabilityParams")
      .def(py::init<>())
      .def_readwrite("scaling_amplitude", &VariabilityParams::scaling_amplitude)
      .def_readwrite("patch_amplitude", &VariabilityParams::patch_amplitude)
      .def_readwrite("patch_radius", &VariabilityParams::patch_radius);

  py::class_<SensorParams>(m, "SensorParams")
      .def(py::init<>())
      .def_readwrite("kernel_size", &SensorParams::kernel_size)
      .def_readwrite("kernel_sigma", &SensorParams::kernel_sigma)
      .def_readwrite("decim_factor", &SensorParams::decim_factor)
      .def_readwrite("decim_offset", &SensorParams::decim_offset)
      .def_readwrite("msi_bands", &SensorParams::msi_bands);

  py::class_<SensorModel>(m, "SensorModel")
      .def_property_readonly("hsi_bands", &SensorModel::hsi_bands)
      .def_property_readonly("msi_bands", &SensorModel::msi_bands)
      .def_readonly("decim_factor", &SensorModel::decim_factor)
      .def_readonly("srf", &SensorModel::srf);

  py::class_<FusionConfig>(m, "FusionConfig")
      .def(py::init<>())
      .def_static("moderate", &FusionConfig::moderate)
      .def_static("significant", &FusionConfig::significant)
      .def_readwrite("p", &FusionConfig::p)
      .def_readwrite("lambda_", &FusionConfig::lambda)
      .def_readwrite("lambda_h", &FusionConfig::lambda_h)
      .def_readwrite("lambda_m", &FusionConfig::lambda_m)
      .def_readwrite("rho", &FusionConfig::rho)
      .def_readwrite("epsilon", &FusionConfig::epsilon)
      .def_readwrite("bcd_iters", &FusionConfig::bcd_iters)
      .def_readwrite("cg_iters", &FusionConfig::cg_iters)
      .def_readwrite("cg_tol", &FusionConfig::cg_tol)
      .def_readwrite("red_steps", &FusionConfig::red_steps)
      .def_readwrite("stop_tol", &FusionConfig::stop_tol)
      .def_readwrite("seed", &FusionConfig::seed);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_static("full_scale", &TrainConfig::full_scale)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("epochs_initial", &TrainConfig::epochs_initial)
      .def_readwrite("epochs_finetune", &TrainConfig::epochs_finetune)
      .def_readwrite("resample_noise", &TrainConfig::resample_noise)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<MetricReport>(m, "MetricReport")
      .def_readonly("psnr_db", &MetricReport::psnr_db)
      .def_readonly("sam_rad", &MetricReport::sam_rad)
      .def_readonly("ergas", &MetricReport::ergas)
      .def_readonly("uiqi", &MetricReport::uiqi)
      .def_property_readonly("sam_deg", &MetricReport::sam_deg);

  m.def("synthetic_scene", [](const SceneParams& p, std::uint64_t seed) {
    const HyperImage z = synthetic_scene(p, seed);
    return py::make_tuple(to_array(z), z.wavelengths());
  }, py::arg("params"), py::arg("seed"), "Returns (cube, wavelengths).");

  m.def("apply_variability", [](const Array& z, const VariabilityParams& p, std::uint64_t seed) {
    return to_array(apply_variability(to_image(z), p, seed));
  }, py::arg("cube"), py::arg("params"), py::arg("seed"));

  m.def("make_sensor", &make_sensor, py::arg("params"), py::arg("hsi_bands"));

  m.def("simulate_pair", [](const Array& z_h, const Array& z_m, const SensorModel& s, double snr_db,
                            std::uint64_t seed) {
    auto [y_h, y_m] = simulate_pair(to_image(z_h), to_image(z_m), s, snr_db, seed);
    return py::make_tuple(to_array(y_h), to_array(y_m));
  }, py::arg("z_h"), py::arg("z_m"), py::arg("sensor"), py::arg("snr_db"), py::arg("seed"));

  m.def("bicubic_baseline", [](const Array& y_h, const SensorModel& s) {
    return to_array(bicubic_baseline(to_image(y_h), s));
  }, py::arg("y_h"), py::arg("sensor"));

  m.def("fuse", [](const Array& y_h, const Array& y_m, const SensorModel& s, const FusionConfig& cfg,
                   const TrainConfig& tc_h, const TrainConfig& tc_m, std::size_t subspace_dim) {
    const HyperImage yh = to_image(y_h), ym = to_image(y_m);
    FusionResult r = [&] {
      py::gil_scoped_release release;
      ZeroShotDenoiser dh(subspace_dim, tc_h), dm(subspace_dim, tc_m);
      return run_fusion(yh, ym, s, GradientOperator{}, cfg, dh, dm);
    }();
    return py::make_tuple(to_array(r.z_h), to_array(r.z_m));
  }, py::arg("y_h"), py::arg("y_m"), py::arg("sensor"), py::arg("config") = FusionConfig{},
     py::arg("train_h") = TrainConfig{}, py::arg("train_m") = TrainConfig{},
     py::arg("subspace_dim") = kDefaultSubspaceDim, "Returns (Z_h, Z_m).");

  m.def("denoise", [](const Array& v, std::size_t subspace_dim, const TrainConfig& tc) {
    const HyperImage img = to_image(v);
    HyperImage out = [&] {
      py::gil_scoped_release release;
      DenoiserModel model(subspace_dim);
      return difiv::denoise(model, img, subspace_dim, tc, DenoiseMode::kTrain);
    }();
    return to_array(out);
  }, py::arg("cube"), py::arg("subspace_dim") = kDefaultSubspaceDim, py::arg("train") = TrainConfig{});

  m.def("psnr", [](const Array& e, const Array& r) { return psnr(to_image(e), to_image(r)); });
  m.def("sam", [](const Array& e, const Array& r) { return sam(to_image(e), to_image(r)); });
  m.def("uiqi", [](const Array& e, const Array& r) { return uiqi(to_image(e), to_image(r)); });
  m.def("ergas", [](const Array& e, const Array& r, double hr, double lr) {
    return ergas(to_image(e), to_image(r), hr, lr);
  }, py::arg("est"), py::arg("ref"), py::arg("hr_pixels"), py::arg("lr_pixels"));
  m.def("evaluate", [](const Array& e, const Array& r, double hr, double lr) {
    return evaluate(to_image(e), to_image(r), hr, lr);
  }, py::arg("est"), py::arg("ref"), py::arg("hr_pixels"), py::arg("lr_pixels"));

  m.def("read_hsc", [](const std::filesystem::path& path) {
    const HyperImage img = read_hsc(path);
    return py::make_tuple(to_array(img), img.wavelengths());
  }, py::arg("path"), "Returns (cube, wavelengths).");
  m.def("write_hsc", [](const Array& cube, const std::filesystem::path& path,
                        std::vector<double> wavelengths) {
    write_hsc(to_image(cube, std::move(wavelengths)), path);
  }, py::arg("cube"), py::arg("path"), py::arg("wavelengths") = std::vector<double>{});

  m.attr("DEFAULT_SUBSPACE_DIM") = kDefaultSubspaceDim;
}
