#include <iostream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stepalign/align.hpp"
#include "stepalign/cli.hpp"
#include "stepalign/eval.hpp"
#include "stepalign/infer.hpp"
#include "stepalign/losses.hpp"

namespace py = pybind11;
using namespace stepalign;

namespace {

MatchMode parse_mode(const std::string& mode) {
  if (mode == "one_to_one") return MatchMode::one_to_one;
  if (mode == "many_to_one") return MatchMode::many_to_one;
  throw py::value_error("mode must be one_to_one or many_to_one");
}

py::dict to_dict(const Correspondence& c) {
  py::dict d;
  d["pairs"] = c.matched_pairs();
  d["dropped_rows"] = c.dropped_rows();
  d["dropped_cols"] = c.dropped_cols();
  d["total_cost"] = c.total_cost();
  return d;
}

py::list segments_list(const SegmentLabeling& l) {
  py::list out;
  for (const auto& s : l.segments()) out.append(py::make_tuple(s.label, s.start, s.end));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Drop-DTW alignment, step localization and evaluation";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<InvariantError>(m, "InvariantError", base.ptr());

  m.attr("BACKGROUND") = kBackground;

  m.def("match_cost_matrix", py::overload_cast<const Matrix&, const Matrix&>(&match_cost_matrix), py::arg("rows"),
        py::arg("cols"));
  m.def("percentile_drop_cost", &percentile_drop_cost, py::arg("costs"), py::arg("p") = kDefaultDropPercentile);
  m.def(
      "drop_dtw",
      [](const Matrix& costs, std::optional<double> row_drop, std::optional<double> col_drop, const std::string& mode) {
        return to_dict(drop_dtw(CostSpec{costs, row_drop, col_drop}, parse_mode(mode)));
      },
      py::arg("costs"), py::arg("row_drop"), py::arg("col_drop"), py::arg("mode") = "one_to_one");
  m.def(
      "brute_force_align",
      [](const Matrix& costs, std::optional<double> row_drop, std::optional<double> col_drop, const std::string& mode) {
        return to_dict(brute_force_align(CostSpec{costs, row_drop, col_drop}, parse_mode(mode)));
      },
      py::arg("costs"), py::arg("row_drop"), py::arg("col_drop"), py::arg("mode") = "one_to_one");
  m.def("dtw", [](const Matrix& costs) { return to_dict(dtw(costs)); }, py::arg("costs"));

  m.def(
      "localize_steps",
      [](const Matrix& slots, const Matrix& video, double p) {
        const auto loc = localize_steps(slots, video, p);
        return py::make_tuple(loc.labeling.frame_labels(), segments_list(loc.labeling));
      },
      py::arg("slots"), py::arg("video"), py::arg("percentile") = kDefaultDropPercentile);
  m.def(
      "zero_shot_localize",
      [](const Matrix& slots, const Matrix& step_texts, const Matrix& video, double p) {
        const auto z = zero_shot_localize(slots, step_texts, video, p);
        return py::make_tuple(z.labeling.frame_labels(), z.slot_for_step);
      },
      py::arg("slots"), py::arg("step_texts"), py::arg("video"), py::arg("percentile") = kDefaultDropPercentile);

  m.def(
      "framewise_metrics",
      [](const std::vector<int>& pred, const std::vector<int>& gt) {
        const auto r = framewise_metrics(pred, gt).overall;
        py::dict d;
        d["precision"] = r.precision;
        d["recall"] = r.recall;
        d["f1"] = r.f1;
        d["mof"] = r.mof;
        d["iou"] = r.iou;
        return d;
      },
      py::arg("pred"), py::arg("gt"));
  m.def("hungarian", &hungarian, py::arg("cost"));
  m.def(
      "kmeans",
      [](const Matrix& points, int k, std::uint64_t seed) {
        auto r = kmeans(points, k, seed);
        return py::make_tuple(r.assignments, r.centroids);
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0);

  m.def("info_nce", py::overload_cast<const RowVector&, const Matrix&, int, double>(&info_nce), py::arg("anchor"),
        py::arg("candidates"), py::arg("positive_index"), py::arg("gamma"));
  m.def("diversity_reg", py::overload_cast<const Matrix&>(&diversity_reg), py::arg("slots"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "stepalign");
        py::gil_scoped_release release;
        return cli::run(args, std::cout, std::cerr);
      },
      py::arg("args"), "Runs a stepalign subcommand and returns its exit code.");
}
