#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "eventfield/accum_index.hpp"
#include "eventfield/analysis.hpp"
#include "eventfield/cli.hpp"
#include "eventfield/config.hpp"
#include "eventfield/edi.hpp"
#include "eventfield/error.hpp"
#include "eventfield/io.hpp"
#include "eventfield/multiseg.hpp"
#include "eventfield/pipeline.hpp"

namespace py = pybind11;
using namespace evf;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const F64& a) {
    if (a.ndim() != 2 && a.ndim() != 3) {
        throw InvalidInput("image must have shape (h, w) or (h, w, c)");
    }
    const int h = static_cast<int>(a.shape(0));
    const int w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    Image img(w, h, c);
    std::copy(a.data(), a.data() + a.size(), img.values.begin());
    return img;
}

py::array_t<double> from_image(const Image& img) {
    std::vector<py::ssize_t> shape{img.height, img.width};
    if (img.channels != 1) {
        shape.push_back(img.channels);
    }
    py::array_t<double> out(shape);
    std::copy(img.values.begin(), img.values.end(), out.mutable_data());
    return out;
}

py::array_t<double> from_accum(const AccumulationImage& a) {
    py::array_t<double> out({a.height, a.width});
    std::copy(a.values.begin(), a.values.end(), out.mutable_data());
    return out;
}

EventStream make_stream(py::array_t<Timestamp, py::array::forcecast> t, py::array_t<int, py::array::forcecast> x,
                        py::array_t<int, py::array::forcecast> y, py::array_t<int, py::array::forcecast> p, int width,
                        int height, Timestamp t_end) {
    const auto n = static_cast<std::size_t>(t.size());
    if (static_cast<std::size_t>(x.size()) != n || static_cast<std::size_t>(y.size()) != n ||
        static_cast<std::size_t>(p.size()) != n) {
        throw InvalidInput("t, x, y and p must have equal length");
    }
    EventStream s;
    s.width = static_cast<std::uint16_t>(width);
    s.height = static_cast<std::uint16_t>(height);
    s.t_end = t_end;
    s.events.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.events[i] = {t.data()[i], static_cast<std::uint16_t>(x.data()[i]), static_cast<std::uint16_t>(y.data()[i]),
                       static_cast<std::int8_t>(p.data()[i] > 0 ? 1 : -1)};
    }
    const StreamReport report = validate_stream(s);
    if (!report.ok()) {
        throw InvalidInput(report.message);
    }
    return s;
}

py::dict stream_arrays(const EventStream& s) {
    const auto n = static_cast<py::ssize_t>(s.events.size());
    py::array_t<Timestamp> t(n);
    py::array_t<int> x(n);
    py::array_t<int> y(n);
    py::array_t<int> p(n);
    for (py::ssize_t i = 0; i < n; ++i) {
        const Event& e = s.events[static_cast<std::size_t>(i)];
        t.mutable_data()[i] = e.t;
        x.mutable_data()[i] = e.x;
        y.mutable_data()[i] = e.y;
        p.mutable_data()[i] = e.p;
    }
    py::dict d;
    d["t"] = t;
    d["x"] = x;
    d["y"] = y;
    d["p"] = p;
    return d;
}

}  // namespace

PYBIND11_MODULE(_evf, m) {
    m.doc() = "Event accumulation, deblurring and dynamic-scene field tools";
    m.attr("__version__") = cli::kVersion;

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<OutOfRange>(m, "OutOfRange", PyExc_IndexError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

    py::class_<Thresholds>(m, "Thresholds")
        .def(py::init([](double c_pos, double c_neg) { return Thresholds{c_pos, c_neg}; }), py::arg("c_pos") = 0.25,
             py::arg("c_neg") = 0.25)
        .def_readwrite("c_pos", &Thresholds::c_pos)
        .def_readwrite("c_neg", &Thresholds::c_neg);

    py::class_<EventStream>(m, "EventStream")
        .def(py::init(&make_stream), py::arg("t"), py::arg("x"), py::arg("y"), py::arg("p"), py::arg("width"),
             py::arg("height"), py::arg("t_end") = 0)
        .def_readonly("width", &EventStream::width)
        .def_readonly("height", &EventStream::height)
        .def_readonly("t_end", &EventStream::t_end)
        .def("__len__", [](const EventStream& s) { return s.events.size(); })
        .def("span_end", &EventStream::span_end)
        .def("arrays", &stream_arrays);

    m.def(
        "read_evt1",
        [](const std::string& path) {
            io::EventFile f = io::read_evt1(std::filesystem::path(path));
            return py::make_tuple(std::move(f.stream), f.thresholds);
        },
        py::arg("path"));
    m.def(
        "write_evt1",
        [](const std::string& path, const EventStream& s, const Thresholds& th) {
            io::write_evt1(std::filesystem::path(path), s, th);
        },
        py::arg("path"), py::arg("stream"), py::arg("thresholds"));

    m.def(
        "naive_accumulate",
        [](const EventStream& s, Timestamp t0, Timestamp t1, const Thresholds& th, double decay) {
            return from_accum(naive_accumulate(s, t0, t1, th, decay));
        },
        py::arg("stream"), py::arg("t0"), py::arg("t1"), py::arg("thresholds"), py::arg("decay") = kDefaultDecay);

    py::class_<DecayAccumulator>(m, "DecayAccumulator")
        .def_static(
            "build",
            [](const EventStream& s, const Thresholds& th, double decay) {
                py::gil_scoped_release release;
                return DecayAccumulator::build(s, th, decay);
            },
            py::arg("stream"), py::arg("thresholds"), py::arg("decay") = kDefaultDecay)
        .def(
            "query_window",
            [](const DecayAccumulator& d, Timestamp t0, Timestamp t1) { return from_accum(d.query_window(t0, t1)); },
            py::arg("t0"), py::arg("t1"))
        .def("query_pixel", &DecayAccumulator::query_pixel, py::arg("x"), py::arg("y"), py::arg("t0"), py::arg("t1"))
        .def("__len__", &DecayAccumulator::size)
        .def_property_readonly("width", &DecayAccumulator::width)
        .def_property_readonly("height", &DecayAccumulator::height)
        .def_property_readonly("decay", &DecayAccumulator::decay);

    m.def(
        "edi_deblur",
        [](const F64& blurry, Timestamp t_start, Timestamp t_end, const DecayAccumulator& index) {
            return from_image(edi_deblur(to_image(blurry), {t_start, t_end}, index));
        },
        py::arg("blurry"), py::arg("t_start"), py::arg("t_end"), py::arg("index"));
    m.def(
        "edi_reblur",
        [](const F64& sharp, Timestamp t_start, Timestamp t_end, const DecayAccumulator& index) {
            return from_image(edi_reblur(to_image(sharp), {t_start, t_end}, index));
        },
        py::arg("sharp"), py::arg("t_start"), py::arg("t_end"), py::arg("index"));

    m.def("expectation_no_decay", &expectation_no_decay, py::arg("n"), py::arg("p_pos"), py::arg("p_neg"));
    m.def("variance_no_decay", &variance_no_decay, py::arg("n"), py::arg("p_pos"), py::arg("p_neg"));
    m.def("variance_no_decay_exact", &variance_no_decay_exact, py::arg("n"), py::arg("p_pos"), py::arg("p_neg"));
    m.def("expectation_decay", &expectation_decay, py::arg("n"), py::arg("p_pos"), py::arg("p_neg"), py::arg("b"));
    m.def("variance_decay", &variance_decay, py::arg("n"), py::arg("p_pos"), py::arg("p_neg"), py::arg("b"));
    m.def("variance_decay_limit", &variance_decay_limit, py::arg("p_pos"), py::arg("p_neg"), py::arg("b"));
    m.def(
        "monte_carlo_noise",
        [](std::int64_t n, double p_pos, double p_neg, double b, std::int64_t trials, std::uint64_t seed) {
            const MonteCarloStats s = monte_carlo_noise({p_pos, p_neg, n, b}, trials, seed);
            return py::make_tuple(s.mean, s.variance);
        },
        py::arg("n"), py::arg("p_pos") = 0.5, py::arg("p_neg") = 0.5, py::arg("b") = 1.0, py::arg("trials") = 10000,
        py::arg("seed") = 0);
    m.def(
        "crf_fit",
        [](F64 exposure, F64 value, bool outlier_clip) {
            if (exposure.size() != value.size()) {
                throw InvalidInput("exposure and value must have equal length");
            }
            std::vector<CrfSample> samples;
            for (py::ssize_t i = 0; i < exposure.size(); ++i) {
                samples.push_back({exposure.data()[i], value.data()[i]});
            }
            const CrfFit f = crf_fit(samples, outlier_clip);
            py::dict d;
            d["slope"] = f.slope;
            d["epsilon"] = f.epsilon;
            d["residual_rms"] = f.residual_rms;
            d["used"] = f.used;
            d["rejected"] = f.rejected;
            return d;
        },
        py::arg("exposure"), py::arg("value"), py::arg("outlier_clip") = true);
    m.def(
        "psnr", [](const F64& a, const F64& b, double peak) { return psnr(to_image(a), to_image(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
    m.def(
        "ssim", [](const F64& a, const F64& b, double peak) { return ssim(to_image(a), to_image(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);

    m.def(
        "make_schedule",
        [](double t_end, double length) {
            std::vector<std::pair<double, double>> spans;
            for (const SegmentSpan& s : make_schedule(t_end, length).segments) {
                spans.emplace_back(s.t_start, s.t_end);
            }
            return spans;
        },
        py::arg("t_end"), py::arg("length"));
    m.def(
        "blend_at",
        [](double t_end, double length, double t) {
            const BlendWeights w = blend_at(make_schedule(t_end, length), t);
            return py::make_tuple(w.first, w.second, w.alpha);
        },
        py::arg("t_end"), py::arg("length"), py::arg("t"));

    m.def(
        "desk_toy_config", [] { return config::to_json(config::desk_toy_config()).dump(); },
        "Default toy experiment configuration as a JSON string.");
    m.def(
        "run_toy",
        [](const std::string& config_json, std::optional<std::string> out_dir) {
            const ToyConfig cfg = config::toy_from_json(nlohmann::json::parse(config_json), config::desk_toy_config());
            ToyResult r;
            {
                py::gil_scoped_release release;
                r = end_to_end_toy(cfg, out_dir ? std::optional<std::filesystem::path>(*out_dir) : std::nullopt);
            }
            py::dict d;
            d["mean_psnr"] = r.metrics.mean_psnr;
            d["mean_ssim"] = r.metrics.mean_ssim;
            d["psnr"] = r.metrics.psnr;
            d["ssim"] = r.metrics.ssim;
            d["times_us"] = r.metrics.times_us;
            d["train_seconds"] = r.train_seconds;
            return d;
        },
        py::arg("config_json"), py::arg("out_dir") = py::none());

    m.def(
        "cli", [](const std::vector<std::string>& args) { return cli::run(args); }, py::arg("args"),
        "Runs an evf subcommand in-process and returns its exit code.");
}
