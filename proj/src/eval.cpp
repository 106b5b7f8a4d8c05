#include "advt/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace advt {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kReportTag = "advt-report";
constexpr int kReportVersion = 1;

Features adversarial_rows(const CraftBatch& batch) {
  Features x(static_cast<Eigen::Index>(batch.records.size()),
             batch.records.empty() ? 0 : batch.records.front().x_adv.size());
  for (std::size_t i = 0; i < batch.records.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = batch.records[i].x_adv.transpose();
  }
  return x;
}

std::size_t moved_count(const CraftBatch& batch) {
  std::size_t n = 0;
  for (const auto& r : batch.records) n += r.crafted ? 1 : 0;
  return n;
}

// Fills one matrix row for every target.
void fill_row(TransferReport& report, const CraftBatch& batch, const std::string& source,
              const std::vector<std::shared_ptr<const Model>>& targets) {
  report.rows.push_back(
      {source, batch.method, batch.epsilon, batch.mean_l1_fraction(), moved_count(batch)});
  std::vector<double> mis, change;
  for (const auto& t : targets) {
    mis.push_back(transfer_rate(batch, *t, RateMode::kMisclassification));
    change.push_back(transfer_rate(batch, *t, RateMode::kPredictionChange));
  }
  report.misclassification.push_back(std::move(mis));
  report.prediction_change.push_back(std::move(change));
}

double rate(std::size_t hits, std::size_t total) {
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

void write_value(std::ostringstream& out, const ordered_json& v, int indent);

bool is_flat(const ordered_json& v) {
  for (const auto& e : v) {
    if (e.is_structured()) return false;
  }
  return true;
}

void write_scalar(std::ostringstream& out, const ordered_json& v) {
  if (v.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v.get<double>());
    out << buf;
  } else {
    out << v.dump();
  }
}

void write_value(std::ostringstream& out, const ordered_json& v, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  if (v.is_object()) {
    if (v.empty()) {
      out << "{}";
      return;
    }
    out << "{\n";
    bool first = true;
    for (const auto& [key, value] : v.items()) {
      if (!first) out << ",\n";
      first = false;
      out << pad << json(key).dump() << ": ";
      write_value(out, value, indent + 2);
    }
    out << "\n" << close << "}";
  } else if (v.is_array()) {
    if (is_flat(v)) {
      out << "[";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ", ";
        write_scalar(out, v[i]);
      }
      out << "]";
      return;
    }
    out << "[\n";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out << ",\n";
      out << pad;
      write_value(out, v[i], indent + 2);
    }
    out << "\n" << close << "]";
  } else {
    write_scalar(out, v);
  }
}

ordered_json header(const char* kind) {
  ordered_json doc;
  doc["format"] = kReportTag;
  doc["version"] = kReportVersion;
  doc["kind"] = kind;
  return doc;
}

void check_header(const json& doc, const std::string& kind) {
  if (doc.at("format").get<std::string>() != kReportTag) throw FormatError("not a report file");
  if (doc.at("version").get<int>() != kReportVersion) throw FormatError("unsupported report version");
  if (doc.at("kind").get<std::string>() != kind) {
    throw FormatError("expected a " + kind + " report, got " + doc.at("kind").get<std::string>());
  }
}

ordered_json config_json(const SubstituteConfig& c) {
  ordered_json j;
  j["family"] = std::string(family_name(c.family));
  j["lambda"] = c.lambda;
  j["tau"] = c.tau;
  j["sigma"] = c.sigma;
  j["kappa"] = c.kappa;
  j["rho_max"] = c.rho_max;
  j["periodic_step"] = c.periodic_step;
  j["reservoir"] = c.reservoir;
  j["dedup"] = c.dedup;
  j["seed"] = c.seed;
  return j;
}

SubstituteConfig config_from(const json& j) {
  SubstituteConfig c;
  c.family = parse_family(j.at("family").get<std::string>());
  c.lambda = j.at("lambda").get<double>();
  c.tau = j.at("tau").get<int>();
  c.sigma = j.at("sigma").get<int>();
  c.kappa = j.at("kappa").get<int>();
  c.rho_max = j.at("rho_max").get<int>();
  c.periodic_step = j.at("periodic_step").get<bool>();
  c.reservoir = j.at("reservoir").get<bool>();
  c.dedup = j.at("dedup").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

ordered_json iterations_json(const std::vector<IterationMetrics>& history) {
  ordered_json rows = ordered_json::array();
  for (const auto& m : history) {
    ordered_json r;
    r["rho"] = m.rho;
    r["set_size"] = m.set_size;
    r["queries"] = m.queries;
    r["agreement"] = m.agreement;
    r["duplicates_dropped"] = m.duplicates_dropped;
    r["skipped"] = m.skipped;
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<IterationMetrics> iterations_from(const json& rows) {
  std::vector<IterationMetrics> out;
  for (const auto& r : rows) {
    IterationMetrics m;
    m.rho = r.at("rho").get<int>();
    m.set_size = r.at("set_size").get<std::size_t>();
    m.queries = r.at("queries").get<std::uint64_t>();
    m.agreement = r.at("agreement").get<double>();
    m.duplicates_dropped = r.at("duplicates_dropped").get<std::size_t>();
    m.skipped = r.at("skipped").get<std::size_t>();
    out.push_back(m);
  }
  return out;
}

}  // namespace

double transfer_rate(const CraftBatch& batch, const Model& target, RateMode mode) {
  if (batch.records.empty()) throw ContractError("transfer rate of an empty batch");
  if (batch.records.front().x.size() != target.dim()) {
    throw ContractError("target model dimension does not match the crafted samples");
  }
  const auto adv = predict_batch(target, adversarial_rows(batch));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < batch.records.size(); ++i) {
    const auto& r = batch.records[i];
    const int reference = mode == RateMode::kMisclassification ? r.true_label : predict(target, r.x);
    hits += adv[i] != reference ? 1 : 0;
  }
  return rate(hits, batch.records.size());
}

double EpsilonConfig::for_method(Method method) const {
  switch (method) {
    case Method::kFgsm: return fgsm;
    case Method::kSvm: return svm;
    case Method::kTree: return 0.0;
  }
  return 0.0;
}

std::vector<double> TransferReport::column_means() const {
  std::vector<double> means(targets.size(), 0.0);
  if (misclassification.empty()) return means;
  for (const auto& row : misclassification) {
    for (std::size_t j = 0; j < row.size() && j < means.size(); ++j) means[j] += row[j];
  }
  for (double& m : means) m /= static_cast<double>(misclassification.size());
  return means;
}

TransferReport intra_matrix(const std::vector<std::shared_ptr<const Model>>& models,
                            const Dataset& test, EpsilonConfig epsilon) {
  if (models.empty()) throw ContractError("intra matrix needs models");
  if (test.empty()) throw ContractError("intra matrix needs test inputs");
  const Family family = models.front()->family();
  for (const auto& m : models) {
    if (!m) throw ContractError("missing model");
    if (m->family() != family) throw ContractError("intra matrix models must share a family");
  }
  const Method method = default_method(family);
  TransferReport report;
  report.kind = "intra";
  report.samples = test.size();
  for (std::size_t i = 0; i < models.size(); ++i) {
    report.targets.push_back(std::string(family_name(family)) + "-" + static_cast<char>('A' + i));
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    const CraftBatch batch = craft_batch(*models[i], test, method, epsilon.for_method(method));
    fill_row(report, batch, report.targets[i], models);
  }
  return report;
}

TransferReport cross_matrix(const std::vector<std::shared_ptr<const Model>>& models,
                            const Dataset& test, EpsilonConfig epsilon) {
  if (models.size() != std::size(kCrossOrder)) {
    throw ContractError("cross matrix needs one model per technique");
  }
  if (test.empty()) throw ContractError("cross matrix needs test inputs");
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (!models[i]) throw ContractError("missing model for " + std::string(family_name(kCrossOrder[i])));
    if (models[i]->family() != kCrossOrder[i]) {
      throw ContractError("cross matrix expects " + std::string(family_name(kCrossOrder[i])) +
                          " at position " + std::to_string(i));
    }
  }
  std::vector<std::shared_ptr<const Model>> targets = models;
  targets.push_back(std::make_shared<const Model>(make_ensemble(models)));

  TransferReport report;
  report.kind = "cross";
  report.samples = test.size();
  for (const auto& t : targets) report.targets.emplace_back(family_name(t->family()));
  for (std::size_t i = 0; i < models.size(); ++i) {
    const Method method = default_method(kCrossOrder[i]);
    const CraftBatch batch = craft_batch(*models[i], test, method, epsilon.for_method(method));
    fill_row(report, batch, std::string(family_name(kCrossOrder[i])), targets);
  }
  return report;
}

std::vector<std::shared_ptr<const Model>> train_intra_models(Family family, const Dataset& train,
                                                             std::size_t parts,
                                                             std::size_t part_size,
                                                             std::uint64_t seed) {
  std::vector<std::shared_ptr<const Model>> models;
  const auto split = split_disjoint(train, part_size, parts);
  for (std::size_t i = 0; i < split.size(); ++i) {
    models.push_back(std::make_shared<const Model>(advt::train(family, split[i], derive_seed(seed, i))));
  }
  return models;
}

std::vector<std::shared_ptr<const Model>> train_cross_models(const Dataset& train,
                                                             std::uint64_t seed) {
  std::vector<std::shared_ptr<const Model>> models;
  for (std::size_t i = 0; i < std::size(kCrossOrder); ++i) {
    models.push_back(
        std::make_shared<const Model>(advt::train(kCrossOrder[i], train, derive_seed(seed, i))));
  }
  return models;
}

AttackReport blackbox_attack(Oracle& attack_oracle, Oracle& eval_oracle, const Features& initial,
                             const Dataset& probe, const SubstituteConfig& config,
                             double epsilon) {
  if (probe.empty()) throw ContractError("black-box attack needs probe inputs");
  const auto clean_labels = eval_oracle.query_batch(probe.x, config.max_in_flight);
  const SubstituteState state =
      train_substitute(attack_oracle, initial, probe.x, clean_labels, config);
  if (!state.model) {
    throw BudgetExhausted("oracle budget ran out before the first substitute was trained");
  }

  const Method method = config.family == Family::kSvm ? Method::kSvm : Method::kFgsm;
  const CraftBatch batch = craft_batch(*state.model, probe, method, epsilon);
  const auto adv_labels = eval_oracle.query_batch(adversarial_rows(batch), config.max_in_flight);

  std::size_t clean_wrong = 0, adv_wrong = 0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    clean_wrong += clean_labels[i] != probe.y[i] ? 1 : 0;
    adv_wrong += adv_labels[i] != probe.y[i] ? 1 : 0;
  }

  AttackReport report;
  report.config = config;
  report.epsilon = epsilon;
  report.initial_size = static_cast<std::size_t>(initial.rows());
  report.probe_size = probe.size();
  report.substitute_queries = state.queries;
  report.budget_exhausted = state.budget_exhausted;
  report.iterations = state.history;
  report.oracle_baseline_error = rate(clean_wrong, probe.size());
  report.oracle_misclassification = rate(adv_wrong, probe.size());
  report.substitute_misclassification = batch.source_misclassification_rate();
  report.mean_l1_fraction = batch.mean_l1_fraction();
  return report;
}

nlohmann::ordered_json to_report(const TransferReport& report) {
  ordered_json doc = header(report.kind == "intra" ? "intra" : "cross");
  doc["seed"] = report.seed;
  doc["samples"] = report.samples;
  doc["targets"] = report.targets;
  ordered_json rows = ordered_json::array();
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    ordered_json row;
    row["source"] = r.source;
    row["method"] = std::string(method_name(r.method));
    row["epsilon"] = r.epsilon;
    row["mean_l1_fraction"] = r.mean_l1_fraction;
    row["crafted"] = r.crafted;
    row["misclassification"] = report.misclassification.at(i);
    row["prediction_change"] = report.prediction_change.at(i);
    rows.push_back(std::move(row));
  }
  doc["rows"] = std::move(rows);
  doc["column_means"] = report.column_means();
  return doc;
}

TransferReport transfer_report_from(const nlohmann::json& doc) {
  try {
    TransferReport report;
    report.kind = doc.at("kind").get<std::string>();
    check_header(doc, report.kind == "intra" ? "intra" : "cross");
    report.seed = doc.at("seed").get<std::uint64_t>();
    report.samples = doc.at("samples").get<std::size_t>();
    report.targets = doc.at("targets").get<std::vector<std::string>>();
    for (const auto& row : doc.at("rows")) {
      report.rows.push_back({row.at("source").get<std::string>(),
                             parse_method(row.at("method").get<std::string>()),
                             row.at("epsilon").get<double>(),
                             row.at("mean_l1_fraction").get<double>(),
                             row.at("crafted").get<std::size_t>()});
      report.misclassification.push_back(row.at("misclassification").get<std::vector<double>>());
      report.prediction_change.push_back(row.at("prediction_change").get<std::vector<double>>());
      if (report.misclassification.back().size() != report.targets.size() ||
          report.prediction_change.back().size() != report.targets.size()) {
        throw FormatError("report row length does not match the targets");
      }
    }
    return report;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed transfer report: ") + e.what());
  }
}

nlohmann::ordered_json to_report(const AttackReport& report) {
  ordered_json doc = header("blackbox");
  doc["substitute"] = config_json(report.config);
  doc["epsilon"] = report.epsilon;
  doc["initial_size"] = report.initial_size;
  doc["probe_size"] = report.probe_size;
  doc["substitute_queries"] = report.substitute_queries;
  doc["budget_exhausted"] = report.budget_exhausted;
  doc["iterations"] = iterations_json(report.iterations);
  doc["oracle_baseline_error"] = report.oracle_baseline_error;
  doc["oracle_misclassification"] = report.oracle_misclassification;
  doc["substitute_misclassification"] = report.substitute_misclassification;
  doc["mean_l1_fraction"] = report.mean_l1_fraction;
  return doc;
}

AttackReport attack_report_from(const nlohmann::json& doc) {
  try {
    check_header(doc, "blackbox");
    AttackReport report;
    report.config = config_from(doc.at("substitute"));
    report.epsilon = doc.at("epsilon").get<double>();
    report.initial_size = doc.at("initial_size").get<std::size_t>();
    report.probe_size = doc.at("probe_size").get<std::size_t>();
    report.substitute_queries = doc.at("substitute_queries").get<std::uint64_t>();
    report.budget_exhausted = doc.at("budget_exhausted").get<bool>();
    report.iterations = iterations_from(doc.at("iterations"));
    report.oracle_baseline_error = doc.at("oracle_baseline_error").get<double>();
    report.oracle_misclassification = doc.at("oracle_misclassification").get<double>();
    report.substitute_misclassification = doc.at("substitute_misclassification").get<double>();
    report.mean_l1_fraction = doc.at("mean_l1_fraction").get<double>();
    return report;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed attack report: ") + e.what());
  }
}

nlohmann::ordered_json to_report(const SubstituteState& state, const SubstituteConfig& config) {
  ordered_json doc = header("substitute");
  doc["substitute"] = config_json(config);
  doc["final_rho"] = state.rho;
  doc["set_size"] = state.set.size();
  doc["queries"] = state.queries;
  doc["budget_exhausted"] = state.budget_exhausted;
  doc["iterations"] = iterations_json(state.history);
  return doc;
}

std::string format_report(const nlohmann::ordered_json& doc) {
  std::ostringstream out;
  write_value(out, doc, 0);
  out << "\n";
  return out.str();
}

void emit_report(const nlohmann::ordered_json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_report(doc);
  if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::json load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("report is not valid JSON: " + std::string(e.what()));
  }
}

}  // namespace advt
