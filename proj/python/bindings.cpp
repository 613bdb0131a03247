#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "specrec/checkpoint.hpp"
#include "specrec/error.hpp"
#include "specrec/gradcheck.hpp"
#include "specrec/hsio.hpp"
#include "specrec/loss.hpp"
#include "specrec/resnet3d.hpp"
#include "specrec/spectral.hpp"
#include "specrec/synthgen.hpp"
#include "specrec/trainer.hpp"

namespace py = pybind11;
using namespace specrec;

namespace {

using Cube = py::array_t<float, py::array::c_style | py::array::forcecast>;

ModelConfig profile_config(const std::string& profile) {
    if (profile == "paper") return ModelConfig::paper();
    if (profile == "desk") return ModelConfig::desk();
    throw ArgumentError("unknown profile '" + profile + "' (valid: paper, desk)");
}

Spectrum make_spectrum(std::vector<double> values, std::vector<double> wavelengths) {
    if (wavelengths.empty()) wavelengths = uniform_wavelengths(values.size());
    Spectrum s{std::move(values), std::move(wavelengths), {}};
    s.validate();
    return s;
}

SpectralCube to_cube(const Cube& data, std::vector<double> wavelengths) {
    if (data.ndim() != 3) throw ShapeError("cube array must be [bands][rows][cols]");
    const auto b = std::size_t(data.shape(0)), h = std::size_t(data.shape(1)), w = std::size_t(data.shape(2));
    if (wavelengths.empty()) wavelengths = uniform_wavelengths(b);
    std::vector<float> v(data.data(), data.data() + data.size());
    return SpectralCube(b, h, w, std::move(v), std::move(wavelengths));
}

Cube from_cube(const SpectralCube& c) {
    Cube out({c.bands(), c.height(), c.width()});
    std::memcpy(out.mutable_data(), c.data().data(), c.data().size() * sizeof(float));
    return out;
}

} // namespace

PYBIND11_MODULE(_specrec, m) {
    m.doc() = "Spectral illuminant recovery core";

    static py::exception<Error> base(m, "SpecrecError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            switch (e.error_class()) {
            case ErrorClass::usage: PyErr_SetString(PyExc_ValueError, e.what()); break;
            case ErrorClass::data: PyErr_SetString(base.ptr(), e.what()); break;
            case ErrorClass::numerical: PyErr_SetString(PyExc_ArithmeticError, e.what()); break;
            }
        }
    });

    m.def("roughness", [](std::vector<double> y, const std::string& form) {
        return roughness(y, parse_roughness_form(form));
    }, py::arg("y"), py::arg("form") = "squared");
    m.def("mse", [](std::vector<double> y, std::vector<double> yhat) { return mse(y, yhat).value; });
    m.def("mae", [](std::vector<double> y, std::vector<double> yhat) { return mae(y, yhat).value; });
    m.def("csse", [](std::vector<double> y, std::vector<double> yhat, double alpha, const std::string& form) {
        return csse(y, yhat, alpha, parse_roughness_form(form)).value;
    }, py::arg("y"), py::arg("yhat"), py::arg("alpha"), py::arg("form") = "squared");
    m.def("smooth", [](std::vector<double> y, double lam) { return smooth_values(y, lam); }, py::arg("y"),
          py::arg("lam"));

    m.def("gen_illuminant", [](const std::string& family, std::uint64_t seed, std::vector<double> wavelengths) {
        if (wavelengths.empty()) wavelengths = uniform_wavelengths(204);
        return gen_illuminant(sample_illuminant(parse_family(family), seed), wavelengths).values;
    }, py::arg("family"), py::arg("seed") = 0, py::arg("wavelengths") = std::vector<double>{});
    m.def("families", [] {
        std::vector<std::string> names;
        for (auto f : all_families()) names.emplace_back(to_string(f));
        return names;
    });

    m.def("normalize", [](const Cube& radiance, std::vector<double> white, std::vector<double> dark, double clamp) {
        const auto res = normalize_cube(to_cube(radiance, {}), make_spectrum(std::move(white), {}),
                                        make_spectrum(std::move(dark), {}), clamp);
        return py::make_tuple(from_cube(res.cube), res.clipped_count, res.degenerate_bands);
    }, py::arg("radiance"), py::arg("white"), py::arg("dark"), py::arg("clamp_max") = kDefaultClampMax,
          "Reflectance (p - d) / (white - d) of a [bands][rows][cols] cube; returns (cube, clipped, degenerate_bands)");

    m.def("read_cube", [](const std::filesystem::path& header) {
        const auto c = read_cube(header, payload_path_for(header));
        return py::make_tuple(from_cube(c), c.wavelengths());
    });
    m.def("write_cube", [](const std::filesystem::path& header, const Cube& data, std::vector<double> wavelengths,
                           const std::string& interleave, const std::string& dtype) {
        if (dtype != "f32" && dtype != "u16") throw ArgumentError("dtype must be f32 or u16");
        write_cube(to_cube(data, std::move(wavelengths)), header, payload_path_for(header),
                   parse_interleave(interleave), dtype == "u16" ? DataType::u16 : DataType::f32);
    }, py::arg("header"), py::arg("data"), py::arg("wavelengths") = std::vector<double>{},
          py::arg("interleave") = "bsq", py::arg("dtype") = "f32");

    m.def("infer_shapes", [](const std::string& profile, std::vector<std::size_t> input) {
        const auto cfg = profile_config(profile);
        if (input.empty()) input = {cfg.input_bands, cfg.input_size, cfg.input_size};
        if (input.size() != 3) throw ArgumentError("input must be (bands, height, width)");
        const auto r = infer_shapes(cfg, {input[0], input[1], input[2]});
        std::vector<std::pair<std::string, std::vector<std::size_t>>> rows;
        for (const auto& s : r.stages) rows.push_back({s.name, {s.channels, s.depth, s.height, s.width}});
        rows.push_back({"fc", {r.head}});
        return rows;
    }, py::arg("profile") = "paper", py::arg("input") = std::vector<std::size_t>{});
    m.def("parameter_count", [](const std::string& profile) {
        return build_model<float>(profile_config(profile), 0).parameter_count();
    }, py::arg("profile") = "desk");

    m.def("infer", [](const std::filesystem::path& checkpoint, const std::filesystem::path& header, bool tile) {
        auto model = load_model<float>(load_archive(checkpoint));
        const auto s = infer_illuminant(model, read_cube(header, payload_path_for(header)), {tile});
        return py::make_tuple(s.wavelengths, s.values);
    }, py::arg("checkpoint"), py::arg("header"), py::arg("tile") = false);

    m.def("gradcheck", [](std::size_t trials, std::uint64_t seed) {
        GradCheckOptions o;
        o.trials = trials;
        o.seed = seed;
        py::list out;
        for (const auto& r : run_gradcheck(o)) {
            out.append(py::dict(py::arg("op") = r.op, py::arg("max_error") = r.max_error,
                                py::arg("passed") = r.passed));
        }
        return out;
    }, py::arg("trials") = 20, py::arg("seed") = 0);
}
