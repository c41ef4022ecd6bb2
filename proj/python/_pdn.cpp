#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pdn/numeric.h"
#include "pdn/pipeline.h"

namespace py = pybind11;
using namespace pdn;

namespace {

nlohmann::json to_json(const py::handle& obj) {
  const auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["method"] = r.method;
  d["protocol"] = r.protocol;
  d["K"] = r.K;
  d["cases"] = r.cases;
  d["skipped"] = r.skipped;
  d["hr"] = r.hr;
  d["ndcg"] = r.ndcg;
  d["diversity"] = r.diversity;
  py::list buckets;
  for (const auto& s : r.buckets) {
    py::dict b;
    b["label"] = s.label;
    b["cases"] = s.cases;
    b["hr"] = s.hr;
    b["ndcg"] = s.ndcg;
    buckets.append(b);
  }
  d["buckets"] = buckets;
  return d;
}

py::dict train_dict(const TrainResult& r) {
  py::dict d;
  d["initial_loss"] = r.initial_loss;
  d["epoch_loss"] = r.epoch_loss;
  d["examples_per_epoch"] = r.examples_per_epoch;
  d["seconds"] = r.seconds;
  return d;
}

/// Stage runner over one resolved configuration.
class Pipeline {
 public:
  explicit Pipeline(const py::dict& config) : config_(RunConfig::from_json(to_json(config))) {}

  py::object config() const { return from_json(config_.to_json()); }

  py::dict prepare() {
    const auto r = run_prepare(config_);
    py::dict d;
    d["users"] = r.stats.users;
    d["items"] = r.stats.items;
    d["interactions"] = r.stats.interactions;
    d["dropped_users"] = r.stats.dropped_users;
    d["test_cases"] = r.test_cases;
    return d;
  }

  py::dict train() {
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = run_train(config_);
    }
    return train_dict(r);
  }

  py::dict build_index() {
    IndexBuildSummary s;
    {
      py::gil_scoped_release release;
      s = run_build_index(config_);
    }
    py::dict d;
    d["pairs_scored"] = s.pairs_scored;
    d["pairs_skipped"] = s.pairs_skipped;
    d["items_with_neighbors"] = s.items_with_neighbors;
    d["seconds"] = s.seconds;
    return d;
  }

  py::list retrieve(const std::string& user, std::size_t K, std::size_t m, bool allow_model_mismatch) {
    const auto items = run_retrieve(config_, user, K, m, allow_model_mismatch);
    py::list out;
    for (const auto& r : items) out.append(py::make_tuple(r.item, r.score, r.triggers));
    return out;
  }

  py::list evaluate(bool allow_model_mismatch) {
    std::vector<EvalReport> reports;
    {
      py::gil_scoped_release release;
      reports = run_eval(config_, allow_model_mismatch);
    }
    py::list out;
    for (const auto& r : reports) out.append(report_dict(r));
    return out;
  }

 private:
  RunConfig config_;
};

}  // namespace

PYBIND11_MODULE(_pdn, m) {
  m.doc() = "Path-based deep network matching: numerics, synthetic data and the training/retrieval pipeline";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ModelMismatchError>(m, "ModelMismatchError", base.ptr());
  py::register_exception<UnknownEntityError>(m, "UnknownEntityError", base.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", base.ptr());

  m.def("softplus", &softplus, py::arg("x"));
  m.def("merge_path", &merge_path, py::arg("trigger_score"), py::arg("sim_score"));
  m.def("log1mexp", &log1mexp, py::arg("x"));
  m.def("click_probability", &click_probability, py::arg("score"));
  m.def("loss", &pdn_loss, py::arg("score"), py::arg("label"));
  m.def("loss_grad", &pdn_loss_grad, py::arg("score"), py::arg("label"));

  m.def(
      "hr_ndcg",
      [](const std::vector<ItemId>& ranked, ItemId target, std::size_t K) {
        const auto r = pdn::hr_ndcg(ranked, target, K);
        return py::make_tuple(r.hr, r.ndcg);
      },
      py::arg("ranked"), py::arg("target"), py::arg("K") = 10);

  m.def(
      "write_synthetic",
      [](const std::filesystem::path& path, const py::dict& config) {
        write_log_tsv(generate_synthetic(SyntheticConfig::from_json(to_json(config))), path);
      },
      py::arg("path"), py::arg("config") = py::dict(), "Writes a synthetic user/item/timestamp/category TSV log.");

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init<const py::dict&>(), py::arg("config"))
      .def_property_readonly("config", &Pipeline::config)
      .def("prepare", &Pipeline::prepare)
      .def("train", &Pipeline::train)
      .def("build_index", &Pipeline::build_index)
      .def("retrieve", &Pipeline::retrieve, py::arg("user"), py::arg("K") = 10, py::arg("m") = 20,
           py::arg("allow_model_mismatch") = false)
      .def("evaluate", &Pipeline::evaluate, py::arg("allow_model_mismatch") = false);
}
