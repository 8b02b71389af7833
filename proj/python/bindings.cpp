#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "p808/analysis.hpp"
#include "p808/audio.hpp"
#include "p808/error.hpp"
#include "p808/localization.hpp"
#include "p808/metrics.hpp"
#include "p808/report.hpp"
#include "p808/simulator.hpp"
#include "p808/store.hpp"

namespace py = pybind11;
using namespace p808;

namespace {

AudioBuffer to_buffer(py::array_t<double, py::array::c_style | py::array::forcecast> a,
                      int rate) {
  if (a.ndim() != 1) throw InvalidArgument("audio must be one-dimensional");
  AudioBuffer b;
  b.sample_rate = rate;
  b.samples.assign(a.data(), a.data() + a.size());
  return b;
}

py::array_t<double> to_array(const AudioBuffer& b) {
  py::array_t<double> out(static_cast<py::ssize_t>(b.samples.size()));
  std::copy(b.samples.begin(), b.samples.end(), out.mutable_data());
  return out;
}

PhoneSequence phones(const py::object& o) {
  if (py::isinstance<py::str>(o)) return PhoneSequence::parse(o.cast<std::string>());
  PhoneSequence s;
  s.tokens = o.cast<std::vector<std::string>>();
  return s;
}

}  // namespace

PYBIND11_MODULE(_p808, m) {
  m.doc() = "Core operations of the p808 listening-test toolkit";

  static PyObject* error_type =
      PyErr_NewException("p808._p808.Error", PyExc_RuntimeError, nullptr);
  m.add_object("Error", py::handle(error_type));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(e.kind()) + ": " + e.what();
      PyErr_SetString(error_type, msg.c_str());
    }
  });

  m.def("levenshtein", [](const py::object& a, const py::object& b) {
    return levenshtein(phones(a), phones(b));
  });
  m.def("lpd", [](const py::object& ref, const py::object& hyp) {
    return lpd(phones(ref), phones(hyp));
  });
  m.def("lps", [](const py::object& ref, const py::object& hyp) {
    return lps(phones(ref), phones(hyp));
  });

  m.def("hallucination_flags", [](const std::string& csv_text, double fraction) {
    QuartileRule rule;
    rule.fraction = fraction;
    const auto flags = hallucination_flags(read_metric_csv(csv_text), rule);
    return std::vector<std::string>(flags.begin(), flags.end());
  }, py::arg("csv_text"), py::arg("fraction") = 0.25);

  m.def("group_stats", [](const std::vector<double>& scores) {
    const auto r = group_stats(scores);
    return py::make_tuple(r.mean, r.ci95_halfwidth, r.n);
  });

  m.def("generate_wgn", [](double duration, int rate, std::uint64_t seed) {
    return to_array(generate_wgn(duration, rate, seed));
  }, py::arg("duration"), py::arg("sample_rate") = kStimulusRate, py::arg("seed") = 0);
  m.def("bandlimit", [](py::array_t<double> x, int rate, double low,
                        std::optional<double> high) {
    return to_array(bandlimit(to_buffer(x, rate), BandSpec{low, high}));
  }, py::arg("signal"), py::arg("sample_rate"), py::arg("low") = 0.0,
     py::arg("high") = py::none());
  m.def("mix_at_snr", [](py::array_t<double> speech, py::array_t<double> noise,
                         int rate, double snr) {
    const Mixture mix = mix_components(to_buffer(speech, rate), to_buffer(noise, rate), snr);
    return py::make_tuple(to_array(mix.mixture), measured_snr(mix));
  });
  m.def("rms_dbfs", [](py::array_t<double> x, int rate) {
    return rms_dbfs(to_buffer(x, rate));
  }, py::arg("signal"), py::arg("sample_rate") = kStimulusRate);

  m.def("validate_catalog", [](const std::string& text) {
    std::vector<py::tuple> out;
    for (const auto& i : validate_catalog(parse_catalog_syntax(text))) {
      out.push_back(py::make_tuple(to_string(i.kind), i.key, i.detail));
    }
    return out;
  });
  m.def("trapping_prompts", [](const std::string& text) {
    std::vector<std::pair<int, std::string>> out;
    for (const auto& [label, prompt] : build_trapping_prompts(parse_catalog(text))) {
      out.emplace_back(label.value, prompt);
    }
    return out;
  });

  m.def("_simulate", [](const std::string& scenario_json) {
    const Scenario sc = parse_scenario(nlohmann::json::parse(scenario_json));
    py::gil_scoped_release release;
    const auto outcome =
        run_campaign(sc.config, sc.clips, sc.truth, sc.population, sc.options);
    return outcome_report(outcome, sc.truth, sc.population).dump();
  });
  m.def("_campaign_status", [](const std::string& dir) {
    return to_json(campaign_status(replay_directory(dir))).dump();
  });
  m.def("_render_report", [](const std::string& metric_csv, const std::string& grouping,
                             const std::vector<std::string>& columns, bool ci) {
    ReportSpec spec;
    spec.grouping = parse_grouping(grouping);
    for (const auto& c : columns) spec.columns.push_back(ColumnSpec::parse(c));
    spec.ci = ci;
    const auto t = compute_table(read_metric_csv(metric_csv), spec);
    return py::make_tuple(render_text(t), render_csv(t));
  });
}
