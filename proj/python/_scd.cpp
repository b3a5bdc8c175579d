#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "scd/commands.hpp"
#include "scd/errors.hpp"
#include "scd/losses.hpp"
#include "scd/metrics.hpp"
#include "scd/trainer.hpp"

namespace py = pybind11;
using json = nlohmann::json;

namespace {

using Overrides = std::map<std::string, std::string>;

scd::CommonOptions common(const std::optional<std::string>& config, const std::optional<uint64_t>& seed,
                          const std::string& out, const std::optional<std::string>& run_dir,
                          const Overrides& overrides) {
  scd::CommonOptions o;
  if (config) o.config = *config;
  o.seed = seed;
  o.out = out;
  if (run_dir) o.run_dir = *run_dir;
  o.overrides.assign(overrides.begin(), overrides.end());
  return o;
}

template <typename T>
torch::Tensor to_tensor(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<T*>(a.data()), shape, torch::TensorOptions().dtype(c10::CppTypeToScalarType<T>::value)).clone();
}

using Labels = py::array_t<int64_t, py::array::c_style | py::array::forcecast>;
using Probs = py::array_t<double, py::array::c_style | py::array::forcecast>;

}  // namespace

PYBIND11_MODULE(_scd, m) {
  m.doc() = "Bi-temporal semantic change detection core";
  py::register_exception<scd::Error>(m, "ScdError", PyExc_RuntimeError);

#define COMMON_ARGS                                                                                      \
  py::arg("config") = py::none(), py::arg("seed") = py::none(), py::arg("out") = "runs",                 \
      py::arg("run_dir") = py::none(), py::arg("overrides") = Overrides {}

  m.def(
      "train",
      [](std::optional<std::string> config, std::optional<uint64_t> seed, std::string out,
         std::optional<std::string> run_dir, Overrides overrides) {
        return scd::cmd_train(common(config, seed, out, run_dir, overrides)).string();
      },
      COMMON_ARGS, py::call_guard<py::gil_scoped_release>());

  m.def(
      "evaluate",
      [](std::optional<std::string> checkpoint, std::string split, bool oracle, std::optional<std::string> config,
         std::optional<uint64_t> seed, std::string out, std::optional<std::string> run_dir, Overrides overrides) {
        scd::EvaluateOptions e;
        if (checkpoint) e.checkpoint = *checkpoint;
        e.split = split;
        e.oracle = oracle;
        return scd::cmd_evaluate(common(config, seed, out, run_dir, overrides), e).string();
      },
      py::arg("checkpoint") = py::none(), py::arg("split") = "", py::arg("oracle") = false, COMMON_ARGS,
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "predict",
      [](std::string checkpoint, std::string image1, std::string image2, std::optional<std::string> config,
         std::optional<uint64_t> seed, std::string out, std::optional<std::string> run_dir, Overrides overrides) {
        return scd::cmd_predict(common(config, seed, out, run_dir, overrides),
                                scd::PredictOptions{checkpoint, image1, image2})
            .string();
      },
      py::arg("checkpoint"), py::arg("image1"), py::arg("image2"), COMMON_ARGS,
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "synth_gen",
      [](std::optional<std::string> config, std::optional<uint64_t> seed, std::string out,
         std::optional<std::string> run_dir, Overrides overrides) {
        return scd::cmd_synth_gen(common(config, seed, out, run_dir, overrides)).string();
      },
      COMMON_ARGS, py::call_guard<py::gil_scoped_release>());

  m.def(
      "ablate",
      [](std::string plan, std::optional<std::string> config, std::optional<uint64_t> seed, std::string out,
         std::optional<std::string> run_dir, Overrides overrides) {
        const auto r = scd::cmd_ablate(common(config, seed, out, run_dir, overrides), plan);
        return std::make_tuple(r.run_dir.string(), scd::format_ablation_table(r.rows), r.any_failed);
      },
      py::arg("plan"), COMMON_ARGS, py::call_guard<py::gil_scoped_release>());
#undef COMMON_ARGS

  m.def("default_config_json", [] { return scd::default_config_json().dump(); });

  m.def(
      "lr_at",
      [](double epoch, double base_lr, int64_t total_epochs, double poly_power) {
        scd::TrainConfig c;
        c.base_lr = base_lr;
        c.total_epochs = total_epochs;
        c.poly_power = poly_power;
        return scd::lr_at(epoch, c);
      },
      py::arg("epoch"), py::arg("base_lr") = 0.1, py::arg("total_epochs") = 50, py::arg("poly_power") = 1.5);

  // Label maps are [H,W] or [B,H,W] int arrays with values in 0..K.
  m.def(
      "scd_metrics_json",
      [](const Labels& pred1, const Labels& pred2, const Labels& gt1, const Labels& gt2, int64_t num_classes) {
        scd::MetricAccumulator acc(num_classes);
        acc.add(to_tensor(pred1), to_tensor(pred2), to_tensor(gt1), to_tensor(gt2));
        auto j = acc.report().to_json();
        j["confusion_matrix"] = acc.cm.to_json();
        return j.dump();
      },
      py::arg("pred1"), py::arg("pred2"), py::arg("gt1"), py::arg("gt2"), py::arg("num_classes"));

  // y1/y2: [B,K,H,W] probabilities, yc: [B,H,W] change probability, l1/l2: [B,H,W] labels.
  m.def(
      "loss_terms",
      [](const Probs& y1, const Probs& y2, const Probs& yc, const Labels& l1, const Labels& l2, double alpha,
         double beta, double gamma, double lambda1, double change, double tau) {
        const scd::LossWeights w{alpha, beta, gamma, lambda1, change, tau};
        scd::validate(w);
        const auto t1 = to_tensor(l1), t2 = to_tensor(l2);
        const auto terms = scd::compute_loss_terms(to_tensor(y1), to_tensor(y2), to_tensor(yc), t1, t2, t1.ne(0), w);
        std::map<std::string, double> out{{"ce", terms.ce.item<double>()},
                                          {"psd", terms.psd.item<double>()},
                                          {"sc", terms.sc.item<double>()},
                                          {"chg", terms.chg.item<double>()},
                                          {"total", scd::total_loss(terms, w).item<double>()}};
        if (terms.dice.defined()) out["dice"] = terms.dice.item<double>();
        return out;
      },
      py::arg("y1"), py::arg("y2"), py::arg("yc"), py::arg("l1"), py::arg("l2"), py::arg("alpha") = 1.0,
      py::arg("beta") = 1.0, py::arg("gamma") = 1.0, py::arg("lambda1") = 1.0, py::arg("change") = 1.0,
      py::arg("tau") = 0.8);
}
