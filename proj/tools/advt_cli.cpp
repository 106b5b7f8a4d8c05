#include <csignal>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "advt/crafting.hpp"
#include "advt/dataset.hpp"
#include "advt/eval.hpp"
#include "advt/models.hpp"
#include "advt/oracle.hpp"
#include "advt/substitute.hpp"

namespace {

using namespace advt;

constexpr int kExitValidation = 2;
constexpr int kExitBudget = 3;
constexpr int kExitTransport = 4;

struct Globals {
  std::uint64_t seed = 2016;
  std::string data = "synthetic";
  std::size_t train_size = 10000;
  std::size_t test_size = 2000;

  TrainTest load() const { return load_source(data, train_size, test_size, seed); }
};

void write_or_print(const nlohmann::ordered_json& doc, const std::string& path) {
  if (path.empty()) {
    std::cout << format_report(doc);
  } else {
    emit_report(doc, path);
  }
}

Dataset head(const Dataset& data, std::size_t n) {
  return n == 0 ? data : data.slice(0, std::min(n, data.size()));
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
  std::string family;
  std::string out;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<int> max_depth;
  std::optional<int> k;
};

int run_train(const Globals& g, const TrainArgs& a) {
  const Family family = parse_family(a.family);
  Hyperparams hp = default_hyperparams(family);
  if (a.epochs) hp.epochs = *a.epochs;
  if (a.learning_rate) hp.learning_rate = *a.learning_rate;
  if (a.max_depth) hp.max_depth = *a.max_depth;
  if (a.k) hp.k = *a.k;
  const TrainTest data = g.load();
  const Model model = train(family, data.train, hp, g.seed);
  save_model(model, a.out);
  std::printf("family=%s train=%zu test_accuracy=%.6f out=%s\n", a.family.c_str(),
              data.train.size(), accuracy(model, data.test), a.out.c_str());
  return 0;
}

// --- craft ---------------------------------------------------------------

struct CraftArgs {
  std::string model;
  std::string method;
  double epsilon = 0.3;
  std::size_t count = 0;
  std::string out;
  std::string report;
};

int run_craft(const Globals& g, const CraftArgs& a) {
  const Model model = load_model(a.model);
  const Method method = a.method.empty() ? default_method(model.family()) : parse_method(a.method);
  const Dataset test = head(g.load().test, a.count);
  const CraftBatch batch = craft_batch(model, test, method, a.epsilon);
  if (!a.out.empty()) {
    Dataset adv;
    adv.num_classes = test.num_classes;
    adv.x.resize(test.x.rows(), test.x.cols());
    for (std::size_t i = 0; i < batch.records.size(); ++i) {
      adv.x.row(static_cast<Eigen::Index>(i)) = batch.records[i].x_adv.transpose();
    }
    adv.y = test.y;
    save_csv(adv, a.out);
  }
  nlohmann::ordered_json doc;
  doc["format"] = "advt-report";
  doc["version"] = 1;
  doc["kind"] = "craft";
  doc["source"] = std::string(family_name(model.family()));
  doc["method"] = std::string(method_name(method));
  doc["epsilon"] = a.epsilon;
  doc["samples"] = batch.records.size();
  doc["mean_l1_fraction"] = batch.mean_l1_fraction();
  doc["source_misclassification"] = batch.source_misclassification_rate();
  write_or_print(doc, a.report);
  return 0;
}

// --- transfer-matrix -----------------------------------------------------

struct MatrixArgs {
  std::string family = "logreg";
  std::size_t parts = 5;
  std::size_t part_size = 2000;
  std::optional<double> eps_fgsm;
  std::optional<double> eps_svm;
  std::size_t samples = 0;
  std::string out;
};

int run_intra(const Globals& g, const MatrixArgs& a) {
  const TrainTest data = g.load();
  EpsilonConfig eps = EpsilonConfig::intra_defaults();
  if (a.eps_fgsm) eps.fgsm = *a.eps_fgsm;
  if (a.eps_svm) eps.svm = *a.eps_svm;
  const auto models = train_intra_models(parse_family(a.family), data.train, a.parts, a.part_size, g.seed);
  TransferReport report = intra_matrix(models, head(data.test, a.samples), eps);
  report.seed = g.seed;
  write_or_print(to_report(report), a.out);
  return 0;
}

int run_cross(const Globals& g, const MatrixArgs& a) {
  const TrainTest data = g.load();
  EpsilonConfig eps = EpsilonConfig::cross_defaults();
  if (a.eps_fgsm) eps.fgsm = *a.eps_fgsm;
  if (a.eps_svm) eps.svm = *a.eps_svm;
  const auto models = train_cross_models(data.train, g.seed);
  TransferReport report = cross_matrix(models, head(data.test, a.samples), eps);
  report.seed = g.seed;
  write_or_print(to_report(report), a.out);
  return 0;
}

// --- substitutes ---------------------------------------------------------

struct SubstituteArgs {
  std::string oracle;
  std::string family = "logreg";
  bool pss = false;
  bool reservoir = false;
  bool dedup = false;
  int sigma = 3;
  int kappa = 400;
  double lambda = 0.1;
  int tau = 3;
  int rho_max = 10;
  std::size_t initial = 100;
  std::size_t probe = 0;
  std::optional<std::uint64_t> budget;
  int in_flight = 1;
  int timeout_ms = 5000;
  int retries = 2;
  double epsilon = 0.3;
  std::string out;
  std::string save_model_path;
};

SubstituteConfig substitute_config(const Globals& g, const SubstituteArgs& a) {
  SubstituteConfig c;
  c.family = parse_family(a.family);
  c.lambda = a.lambda;
  c.tau = a.tau;
  c.sigma = a.sigma;
  c.kappa = a.kappa;
  c.rho_max = a.rho_max;
  c.periodic_step = a.pss;
  c.reservoir = a.reservoir;
  c.dedup = a.dedup;
  c.max_in_flight = a.in_flight;
  c.seed = g.seed;
  c.validate();
  return c;
}

// Seed inputs are the first n test rows; probes are drawn from the rest.
struct AttackData {
  Features initial;
  Dataset probe;
};

AttackData attack_data(const Globals& g, const SubstituteArgs& a) {
  const Dataset test = g.load().test;
  if (test.size() <= a.initial) throw SizeError("test set too small for the initial substitute set");
  AttackData d;
  d.initial = test.x.topRows(static_cast<Eigen::Index>(a.initial));
  const std::size_t end = a.probe == 0 ? test.size() : std::min(test.size(), a.initial + a.probe);
  d.probe = test.slice(a.initial, end);
  return d;
}

HttpOptions http_options(const SubstituteArgs& a) {
  HttpOptions o;
  o.timeout = std::chrono::milliseconds(a.timeout_ms);
  o.retries = a.retries;
  return o;
}

int run_learn(const Globals& g, const SubstituteArgs& a) {
  const SubstituteConfig config = substitute_config(g, a);
  const AttackData d = attack_data(g, a);
  auto oracle = open_oracle(a.oracle, http_options(a), a.budget);
  auto evaluator = open_oracle(a.oracle, http_options(a));
  const auto probe_labels = evaluator->query_batch(d.probe.x, a.in_flight);
  const SubstituteState state = train_substitute(*oracle, d.initial, d.probe.x, probe_labels, config);
  for (const auto& m : state.history) {
    std::printf("rho=%d set_size=%zu queries=%llu agreement=%.6f\n", m.rho, m.set_size,
                static_cast<unsigned long long>(m.queries), m.agreement);
  }
  if (!a.save_model_path.empty() && state.model) save_model(*state.model, a.save_model_path);
  if (!a.out.empty()) emit_report(to_report(state, config), a.out);
  if (state.budget_exhausted) {
    std::fprintf(stderr, "oracle budget exhausted after %llu queries\n",
                 static_cast<unsigned long long>(state.queries));
    return kExitBudget;
  }
  return 0;
}

int run_blackbox(const Globals& g, const SubstituteArgs& a) {
  const SubstituteConfig config = substitute_config(g, a);
  const AttackData d = attack_data(g, a);
  auto oracle = open_oracle(a.oracle, http_options(a), a.budget);
  auto evaluator = open_oracle(a.oracle, http_options(a));
  const AttackReport report = blackbox_attack(*oracle, *evaluator, d.initial, d.probe, config, a.epsilon);
  write_or_print(to_report(report), a.out);
  if (report.budget_exhausted) {
    std::fprintf(stderr, "oracle budget exhausted after %llu queries\n",
                 static_cast<unsigned long long>(report.substitute_queries));
    return kExitBudget;
  }
  return 0;
}

// --- serve-oracle --------------------------------------------------------

struct ServeArgs {
  std::string model;
  std::string bind = "127.0.0.1:8080";
  std::optional<std::uint64_t> budget;
  int latency_ms = 0;
};

int run_serve(const ServeArgs& a) {
  const auto colon = a.bind.rfind(':');
  if (colon == std::string::npos) throw ContractError("--bind needs host:port");
  const std::string host = a.bind.substr(0, colon);
  const int port = std::stoi(a.bind.substr(colon + 1));

  ServerOptions options;
  options.budget = a.budget;
  options.latency = std::chrono::milliseconds(a.latency_ms);
  OracleServer server(std::make_shared<const Model>(load_model(a.model)), options);

  // Block the stop signals before any server thread exists, then wait for them here.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  server.start(host, port);
  std::printf("listening on %s\n", server.url().c_str());
  std::fflush(stdout);
  int received = 0;
  sigwait(&signals, &received);
  server.stop();
  std::printf("served %llu queries\n", static_cast<unsigned long long>(server.queries()));
  return 0;
}

// --- export-data ---------------------------------------------------------

int run_export(const Globals& g, const std::string& train_out, const std::string& test_out) {
  const TrainTest data = g.load();
  save_csv(data.train, train_out);
  save_csv(data.test, test_out);
  return 0;
}

void add_substitute_flags(CLI::App* cmd, SubstituteArgs& a, bool attack) {
  cmd->add_option("--oracle", a.oracle, "local:<model file> or http://host:port")->required();
  cmd->add_option("--family", a.family, "substitute family: net, logreg or svm")->capture_default_str();
  cmd->add_flag("--pss", a.pss, "periodic step size");
  cmd->add_flag("--reservoir", a.reservoir, "reservoir sampling after sigma iterations");
  cmd->add_flag("--dedup", a.dedup, "drop duplicate augmented points before labeling");
  cmd->add_option("--sigma", a.sigma)->capture_default_str();
  cmd->add_option("--kappa", a.kappa)->capture_default_str();
  cmd->add_option("--lambda", a.lambda)->capture_default_str();
  cmd->add_option("--tau", a.tau)->capture_default_str();
  cmd->add_option("--rho-max", a.rho_max, "substitute iterations")->capture_default_str();
  cmd->add_option("--initial-size", a.initial, "seed inputs taken from the test set")->capture_default_str();
  cmd->add_option("--probe-size", a.probe, "probe inputs after the seed inputs (0 = all)")->capture_default_str();
  cmd->add_option("--budget", a.budget, "oracle query budget for substitute training");
  cmd->add_option("--in-flight", a.in_flight, "concurrent oracle requests")->capture_default_str();
  cmd->add_option("--timeout-ms", a.timeout_ms)->capture_default_str();
  cmd->add_option("--retries", a.retries)->capture_default_str();
  cmd->add_option("--out", a.out, "report file (stdout when empty)");
  if (attack) {
    cmd->add_option("--epsilon", a.epsilon, "FGSM / SVM attack step")->capture_default_str();
  } else {
    cmd->add_option("--save-model", a.save_model_path, "write the final substitute here");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial transferability toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option values");

  Globals g;
  app.add_option("--seed", g.seed, "seed for data, training and sampling")->capture_default_str();
  app.add_option("--data", g.data, "synthetic | mnist:<dir> | csv:<train>,<test> | idx:<4 files>")
      ->capture_default_str();
  app.add_option("--train-size", g.train_size)->capture_default_str();
  app.add_option("--test-size", g.test_size)->capture_default_str();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train one model and save it");
  train_cmd->add_option("--family", train_args.family, "net, logreg, svm, tree or knn")->required();
  train_cmd->add_option("--out", train_args.out, "model file")->required();
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--learning-rate", train_args.learning_rate);
  train_cmd->add_option("--max-depth", train_args.max_depth);
  train_cmd->add_option("-k", train_args.k);

  CraftArgs craft_args;
  auto* craft_cmd = app.add_subcommand("craft", "craft adversarial samples on the test set");
  craft_cmd->add_option("--model", craft_args.model, "model file")->required();
  craft_cmd->add_option("--method", craft_args.method, "fgsm, svm or tree (family default)");
  craft_cmd->add_option("--epsilon", craft_args.epsilon)->capture_default_str();
  craft_cmd->add_option("--count", craft_args.count, "test inputs to use (0 = all)");
  craft_cmd->add_option("--out", craft_args.out, "CSV of crafted samples with true labels");
  craft_cmd->add_option("--report", craft_args.report, "summary report file (stdout when empty)");

  MatrixArgs matrix_args;
  auto* matrix_cmd = app.add_subcommand("transfer-matrix", "transferability matrices");
  matrix_cmd->require_subcommand(1);
  auto* intra_cmd = matrix_cmd->add_subcommand("intra", "five models of one family on disjoint parts");
  auto* cross_cmd = matrix_cmd->add_subcommand("cross", "one model per family plus their ensemble");
  for (auto* cmd : {intra_cmd, cross_cmd}) {
    cmd->add_option("--epsilon-fgsm", matrix_args.eps_fgsm);
    cmd->add_option("--epsilon-svm", matrix_args.eps_svm);
    cmd->add_option("--samples", matrix_args.samples, "test inputs to craft on (0 = all)");
    cmd->add_option("--out", matrix_args.out, "report file (stdout when empty)");
  }
  intra_cmd->add_option("--family", matrix_args.family)->capture_default_str();
  intra_cmd->add_option("--parts", matrix_args.parts)->capture_default_str();
  intra_cmd->add_option("--part-size", matrix_args.part_size)->capture_default_str();

  SubstituteArgs learn_args;
  auto* learn_cmd = app.add_subcommand("learn-substitute", "train a substitute against an oracle");
  add_substitute_flags(learn_cmd, learn_args, false);

  SubstituteArgs attack_args;
  attack_args.rho_max = 3;
  auto* attack_cmd = app.add_subcommand("blackbox-attack", "substitute training plus transfer attack");
  add_substitute_flags(attack_cmd, attack_args, true);

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve-oracle", "serve a model over the /predict protocol");
  serve_cmd->add_option("--model", serve_args.model, "model file")->required();
  serve_cmd->add_option("--bind", serve_args.bind, "host:port (port 0 picks one)")->capture_default_str();
  serve_cmd->add_option("--budget", serve_args.budget, "refuse queries past this count");
  serve_cmd->add_option("--latency-ms", serve_args.latency_ms, "delay added to every answer")
      ->capture_default_str();

  std::string export_train, export_test;
  auto* export_cmd = app.add_subcommand("export-data", "write the train/test split as CSV");
  export_cmd->add_option("--train-out", export_train)->required();
  export_cmd->add_option("--test-out", export_test)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*train_cmd) return run_train(g, train_args);
    if (*craft_cmd) return run_craft(g, craft_args);
    if (*intra_cmd) return run_intra(g, matrix_args);
    if (*cross_cmd) return run_cross(g, matrix_args);
    if (*learn_cmd) return run_learn(g, learn_args);
    if (*attack_cmd) return run_blackbox(g, attack_args);
    if (*serve_cmd) return run_serve(serve_args);
    if (*export_cmd) return run_export(g, export_train, export_test);
  } catch (const BudgetExhausted& e) {
    std::fprintf(stderr, "budget exhausted: %s\n", e.what());
    return kExitBudget;
  } catch (const TransportError& e) {
    std::fprintf(stderr, "transport error after %d attempts: %s\n", e.attempts(), e.what());
    return kExitTransport;
  } catch (const ProtocolError& e) {
    std::fprintf(stderr, "protocol error (%s): %s\n", e.code().c_str(), e.what());
    return kExitTransport;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::logic_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}
