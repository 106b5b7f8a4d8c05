#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <random>

#include "advt/crafting.hpp"
#include "advt/eval.hpp"
#include "advt/oracle.hpp"
#include "advt/substitute.hpp"

namespace py = pybind11;
using namespace advt;

namespace {

using ModelPtr = std::shared_ptr<Model>;
using Release = py::call_guard<py::gil_scoped_release>;

Dataset make_dataset(const Features& x, const std::vector<int>& y, std::optional<int> num_classes) {
  Dataset d;
  d.x = x;
  d.y = y;
  int top = 0;
  for (int v : y) top = std::max(top, v + 1);
  d.num_classes = num_classes.value_or(top);
  validate(d);
  return d;
}

py::dict split_dict(const Dataset& d) {
  py::dict out;
  out["x"] = d.x;
  out["y"] = d.y;
  out["num_classes"] = d.num_classes;
  return out;
}

py::dict train_test_dict(const TrainTest& tt) {
  py::dict out;
  out["train"] = split_dict(tt.train);
  out["test"] = split_dict(tt.test);
  return out;
}

std::vector<std::shared_ptr<const Model>> const_models(const std::vector<ModelPtr>& models) {
  return {models.begin(), models.end()};
}

py::dict history_entry(const IterationMetrics& m) {
  py::dict d;
  d["rho"] = m.rho;
  d["set_size"] = m.set_size;
  d["queries"] = m.queries;
  d["agreement"] = m.agreement;
  d["duplicates_dropped"] = m.duplicates_dropped;
  d["skipped"] = m.skipped;
  return d;
}

}  // namespace

PYBIND11_MODULE(_advt, m) {
  m.doc() = "Transferability and black-box attack toolkit (C++ core)";

  auto base = py::register_exception<Error>(m, "AdvtError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<ConsistencyError>(m, "ConsistencyError", base);
  py::register_exception<SizeError>(m, "SizeError", base);
  py::register_exception<ContractError>(m, "ContractError", base);
  py::register_exception<UnsupportedFamilyError>(m, "UnsupportedFamilyError", base);
  py::register_exception<DegenerateModelError>(m, "DegenerateModelError", base);
  py::register_exception<NoAdversarialError>(m, "NoAdversarialError", base);
  py::register_exception<TrainingError>(m, "TrainingError", base);
  py::register_exception<BudgetExhausted>(m, "BudgetExhausted", base);
  py::register_exception<TransportError>(m, "TransportError", base);
  py::register_exception<ProtocolError>(m, "ProtocolError", base);
  py::register_exception<IoError>(m, "IoError", base);

  // --- data -------------------------------------------------------------
  m.def("synthetic_train_test",
        [](std::size_t train_size, std::size_t test_size, std::uint64_t seed) {
          return train_test_dict(synthetic_train_test(train_size, test_size, seed));
        },
        py::arg("train_size") = 10000, py::arg("test_size") = 2000, py::arg("seed") = 2016);
  m.def("load_source",
        [](const std::string& spec, std::size_t train_size, std::size_t test_size, std::uint64_t seed) {
          return train_test_dict(load_source(spec, train_size, test_size, seed));
        },
        py::arg("spec"), py::arg("train_size") = 10000, py::arg("test_size") = 2000,
        py::arg("seed") = 2016);
  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("stream"));

  // --- models -----------------------------------------------------------
  py::class_<Hyperparams>(m, "Hyperparams")
      .def(py::init<>())
      .def_static("defaults", [](const std::string& family) { return default_hyperparams(parse_family(family)); })
      .def_readwrite("epochs", &Hyperparams::epochs)
      .def_readwrite("batch_size", &Hyperparams::batch_size)
      .def_readwrite("learning_rate", &Hyperparams::learning_rate)
      .def_readwrite("momentum", &Hyperparams::momentum)
      .def_readwrite("decay_after_epochs", &Hyperparams::decay_after_epochs)
      .def_readwrite("decay_factor", &Hyperparams::decay_factor)
      .def_readwrite("l2", &Hyperparams::l2)
      .def_readwrite("dropout", &Hyperparams::dropout)
      .def_readwrite("hidden", &Hyperparams::hidden)
      .def_readwrite("max_depth", &Hyperparams::max_depth)
      .def_readwrite("min_leaf", &Hyperparams::min_leaf)
      .def_readwrite("k", &Hyperparams::k);

  py::class_<Model, ModelPtr>(m, "Model")
      .def_property_readonly("family", [](const Model& self) { return std::string(family_name(self.family())); })
      .def_property_readonly("dim", &Model::dim)
      .def_property_readonly("num_classes", &Model::num_classes)
      .def_property_readonly("differentiable", &Model::differentiable)
      .def("predict", [](const Model& self, const Vector& x) { return predict(self, x); }, py::arg("x"))
      .def("predict_batch", [](const Model& self, const Features& x) { return predict_batch(self, x); },
           py::arg("x"), Release())
      .def("scores", [](const Model& self, const Vector& x) { return class_scores(self, x); }, py::arg("x"))
      .def("jacobian", [](const Model& self, const Vector& x) { return jacobian(self, x); }, py::arg("x"))
      .def("input_gradient", [](const Model& self, const Vector& x, int y) { return input_gradient(self, x, y); },
           py::arg("x"), py::arg("y"))
      .def("accuracy",
           [](const Model& self, const Features& x, const std::vector<int>& y) {
             return accuracy(self, make_dataset(x, y, self.num_classes()));
           },
           py::arg("x"), py::arg("y"))
      .def("save", [](const Model& self, const std::filesystem::path& path) { save_model(self, path); },
           py::arg("path"))
      .def("to_json", [](const Model& self) { return to_json(self).dump(); })
      .def_static("load", [](const std::filesystem::path& path) { return std::make_shared<Model>(load_model(path)); },
                  py::arg("path"))
      .def("__repr__", [](const Model& self) {
        return "<advt.Model " + std::string(family_name(self.family())) + " dim=" + std::to_string(self.dim()) +
               " classes=" + std::to_string(self.num_classes()) + ">";
      });

  m.def("train",
        [](const std::string& family, const Features& x, const std::vector<int>& y, std::uint64_t seed,
           std::optional<int> num_classes, std::optional<Hyperparams> hp) {
          const Family f = parse_family(family);
          const Dataset d = make_dataset(x, y, num_classes);
          py::gil_scoped_release release;
          return std::make_shared<Model>(train(f, d, hp.value_or(default_hyperparams(f)), seed));
        },
        py::arg("family"), py::arg("x"), py::arg("y"), py::arg("seed") = 0, py::arg("num_classes") = py::none(),
        py::arg("hyperparams") = py::none());
  m.def("make_ensemble",
        [](const std::vector<ModelPtr>& experts) { return std::make_shared<Model>(make_ensemble(const_models(experts))); },
        py::arg("experts"));

  // --- crafting ---------------------------------------------------------
  m.def("fgsm",
        [](const Model& model, const Vector& x, double epsilon, std::optional<int> y) {
          return fgsm(model, x, y, epsilon).x_adv;
        },
        py::arg("model"), py::arg("x"), py::arg("epsilon"), py::arg("y") = py::none());
  m.def("svm_attack", [](const Model& model, const Vector& x, double epsilon) { return svm_attack(model, x, epsilon).x_adv; },
        py::arg("model"), py::arg("x"), py::arg("epsilon"));
  m.def("tree_attack",
        [](const Model& model, const Vector& x, std::optional<int> legit, double gap) {
          const auto& tree = model.as<DecisionTree>();
          return dt_attack(tree, x, legit.value_or(tree.predict(x)), gap).x_adv;
        },
        py::arg("model"), py::arg("x"), py::arg("legitimate_class") = py::none(), py::arg("gap") = 0.01);
  m.def("craft",
        [](const Model& model, const Features& x, const std::vector<int>& y, double epsilon,
           std::optional<std::string> method) {
          const Method mt = method ? parse_method(*method) : default_method(model.family());
          const Dataset d = make_dataset(x, y, model.num_classes());
          CraftBatch batch;
          {
            py::gil_scoped_release release;
            batch = craft_batch(model, d, mt, epsilon);
          }
          Features adv(x.rows(), x.cols());
          std::vector<int> source_pred, adv_pred;
          std::vector<bool> crafted;
          for (std::size_t i = 0; i < batch.records.size(); ++i) {
            adv.row(static_cast<Eigen::Index>(i)) = batch.records[i].x_adv.transpose();
            source_pred.push_back(batch.records[i].source_pred);
            adv_pred.push_back(batch.records[i].adv_pred);
            crafted.push_back(batch.records[i].crafted);
          }
          py::dict out;
          out["x_adv"] = adv;
          out["source_pred"] = source_pred;
          out["adv_pred"] = adv_pred;
          out["crafted"] = crafted;
          out["method"] = std::string(method_name(mt));
          out["mean_l1_fraction"] = batch.mean_l1_fraction();
          out["source_misclassification"] = batch.source_misclassification_rate();
          return out;
        },
        py::arg("model"), py::arg("x"), py::arg("y"), py::arg("epsilon"), py::arg("method") = py::none());

  // --- oracles ----------------------------------------------------------
  py::class_<Oracle>(m, "Oracle")
      .def("query", [](Oracle& self, const Vector& x) { return self.query(x); }, py::arg("x"), Release())
      .def("query_batch", [](Oracle& self, const Features& x, int in_flight) { return self.query_batch(x, in_flight); },
           py::arg("x"), py::arg("max_in_flight") = 1, Release())
      .def_property_readonly("queries", &Oracle::queries)
      .def_property_readonly("budget", &Oracle::budget)
      .def_property_readonly("dim", &Oracle::dim);
  py::class_<LocalOracle, Oracle>(m, "LocalOracle")
      .def(py::init([](const ModelPtr& model, std::optional<std::uint64_t> budget) {
             return std::make_unique<LocalOracle>(model, budget);
           }),
           py::arg("model"), py::arg("budget") = py::none());
  py::class_<HttpOracle, Oracle>(m, "HttpOracle")
      .def(py::init([](const std::string& url, int timeout_ms, int retries, std::optional<std::uint64_t> budget) {
             HttpOptions o;
             o.timeout = std::chrono::milliseconds(timeout_ms);
             o.retries = retries;
             return std::make_unique<HttpOracle>(url, o, budget);
           }),
           py::arg("url"), py::arg("timeout_ms") = 5000, py::arg("retries") = 2, py::arg("budget") = py::none())
      .def("server_queries", &HttpOracle::server_queries, Release());
  py::class_<OracleServer>(m, "OracleServer")
      .def(py::init([](const ModelPtr& model, std::optional<std::uint64_t> budget, int latency_ms) {
             ServerOptions o;
             o.budget = budget;
             o.latency = std::chrono::milliseconds(latency_ms);
             return std::make_unique<OracleServer>(model, o);
           }),
           py::arg("model"), py::arg("budget") = py::none(), py::arg("latency_ms") = 0)
      .def("start", &OracleServer::start, py::arg("host") = "127.0.0.1", py::arg("port") = 0, Release())
      .def("stop", &OracleServer::stop, Release())
      .def_property_readonly("port", &OracleServer::port)
      .def_property_readonly("url", &OracleServer::url)
      .def_property_readonly("queries", &OracleServer::queries);

  // --- substitute training ----------------------------------------------
  m.def("query_count", &query_count, py::arg("n"), py::arg("sigma"), py::arg("kappa"), py::arg("rho"),
        py::arg("reservoir"));
  m.def("step_size", &step_size, py::arg("lam"), py::arg("tau"), py::arg("rho"));
  m.def("reservoir_select",
        [](std::size_t n, std::size_t kappa, std::uint64_t seed) {
          std::mt19937_64 rng(seed);
          return reservoir_select(n, kappa, [&rng](std::size_t hi) {
            return std::uniform_int_distribution<std::size_t>(0, hi)(rng);
          });
        },
        py::arg("n"), py::arg("kappa"), py::arg("seed") = 0);

  py::class_<SubstituteConfig>(m, "SubstituteConfig")
      .def(py::init<>())
      .def_property(
          "family", [](const SubstituteConfig& c) { return std::string(family_name(c.family)); },
          [](SubstituteConfig& c, const std::string& f) { c.family = parse_family(f); })
      .def_readwrite("lam", &SubstituteConfig::lambda)
      .def_readwrite("tau", &SubstituteConfig::tau)
      .def_readwrite("sigma", &SubstituteConfig::sigma)
      .def_readwrite("kappa", &SubstituteConfig::kappa)
      .def_readwrite("rho_max", &SubstituteConfig::rho_max)
      .def_readwrite("periodic_step", &SubstituteConfig::periodic_step)
      .def_readwrite("reservoir", &SubstituteConfig::reservoir)
      .def_readwrite("dedup", &SubstituteConfig::dedup)
      .def_readwrite("max_in_flight", &SubstituteConfig::max_in_flight)
      .def_readwrite("seed", &SubstituteConfig::seed)
      .def_readwrite("hyperparams", &SubstituteConfig::hyperparams)
      .def("validate", &SubstituteConfig::validate);

  m.def("train_substitute",
        [](Oracle& oracle, const Features& initial, const Features& probe, const std::vector<int>& probe_labels,
           const SubstituteConfig& config) {
          SubstituteState state;
          {
            py::gil_scoped_release release;
            state = train_substitute(oracle, initial, probe, probe_labels, config);
          }
          py::dict out;
          out["model"] = state.model ? std::make_shared<Model>(*state.model) : ModelPtr();
          out["x"] = state.set.x;
          out["y"] = state.set.y;
          out["queries"] = state.queries;
          out["budget_exhausted"] = state.budget_exhausted;
          py::list history;
          for (const auto& h : state.history) history.append(history_entry(h));
          out["history"] = history;
          out["report"] = format_report(to_report(state, config));
          return out;
        },
        py::arg("oracle"), py::arg("initial"), py::arg("probe"), py::arg("probe_labels"), py::arg("config"));
  m.def("agreement",
        [](const Model& model, const Features& probe, const std::vector<int>& labels) {
          return agreement(model, probe, labels);
        },
        py::arg("model"), py::arg("probe"), py::arg("labels"));

  // --- evaluation -------------------------------------------------------
  m.def("train_cross_models",
        [](const Features& x, const std::vector<int>& y, std::uint64_t seed) {
          const Dataset d = make_dataset(x, y, std::nullopt);
          std::vector<std::shared_ptr<const Model>> trained;
          {
            py::gil_scoped_release release;
            trained = train_cross_models(d, seed);
          }
          std::vector<ModelPtr> out;
          for (const auto& t : trained) out.push_back(std::make_shared<Model>(*t));
          return out;
        },
        py::arg("x"), py::arg("y"), py::arg("seed") = 2016);
  m.def("cross_matrix",
        [](const std::vector<ModelPtr>& models, const Features& x, const std::vector<int>& y, double eps_fgsm,
           double eps_svm, std::uint64_t seed) {
          const Dataset d = make_dataset(x, y, std::nullopt);
          py::gil_scoped_release release;
          TransferReport r = cross_matrix(const_models(models), d, {eps_fgsm, eps_svm});
          r.seed = seed;
          return format_report(to_report(r));
        },
        py::arg("models"), py::arg("x"), py::arg("y"), py::arg("epsilon_fgsm") = 0.25,
        py::arg("epsilon_svm") = 5.0, py::arg("seed") = 0);
  m.def("intra_matrix",
        [](const std::vector<ModelPtr>& models, const Features& x, const std::vector<int>& y, double eps_fgsm,
           double eps_svm, std::uint64_t seed) {
          const Dataset d = make_dataset(x, y, std::nullopt);
          py::gil_scoped_release release;
          TransferReport r = intra_matrix(const_models(models), d, {eps_fgsm, eps_svm});
          r.seed = seed;
          return format_report(to_report(r));
        },
        py::arg("models"), py::arg("x"), py::arg("y"), py::arg("epsilon_fgsm") = 0.3,
        py::arg("epsilon_svm") = 1.5, py::arg("seed") = 0);
  m.def("blackbox_attack",
        [](Oracle& attack_oracle, Oracle& eval_oracle, const Features& initial, const Features& probe_x,
           const std::vector<int>& probe_y, const SubstituteConfig& config, double epsilon) {
          const Dataset probe = make_dataset(probe_x, probe_y, std::nullopt);
          py::gil_scoped_release release;
          return format_report(to_report(blackbox_attack(attack_oracle, eval_oracle, initial, probe, config, epsilon)));
        },
        py::arg("attack_oracle"), py::arg("eval_oracle"), py::arg("initial"), py::arg("probe_x"),
        py::arg("probe_y"), py::arg("config"), py::arg("epsilon") = 0.3);
}
