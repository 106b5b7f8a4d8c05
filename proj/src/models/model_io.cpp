#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "advt/models.hpp"

namespace advt {

namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "advt-model";
constexpr int kFormatVersion = 1;

// Stored parameters keep 9 significant digits.
double round9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

template <typename Derived>
json flat(const Eigen::DenseBase<Derived>& m) {
  json arr = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(round9(m(r, c)));
  }
  return arr;
}

Matrix matrix_from(const json& arr, Eigen::Index rows, Eigen::Index cols) {
  if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != rows * cols) {
    throw FormatError("parameter array has the wrong length");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = arr.at(k++).get<double>();
  }
  return m;
}

Vector vector_from(const json& arr, Eigen::Index n) {
  return matrix_from(arr, n, 1).col(0);
}

json linear_json(const Matrix& w, const Vector& b) {
  return {{"weights", flat(w)}, {"bias", flat(b)}};
}

}  // namespace

nlohmann::json to_json(const Model& model) {
  json j;
  j["format"] = kFormatTag;
  j["version"] = kFormatVersion;
  j["family"] = std::string(family_name(model.family()));
  j["dim"] = model.dim();
  j["num_classes"] = model.num_classes();
  switch (model.family()) {
    case Family::kNet: {
      json layers = json::array();
      for (const auto& layer : model.as<NeuralNet>().layers()) {
        layers.push_back({{"in", layer.w.cols()},
                          {"out", layer.w.rows()},
                          {"weights", flat(layer.w)},
                          {"bias", flat(layer.b)}});
      }
      j["layers"] = std::move(layers);
      break;
    }
    case Family::kLogReg: {
      const auto& m = model.as<SoftmaxRegression>();
      j.update(linear_json(m.weights(), m.bias()));
      break;
    }
    case Family::kSvm: {
      const auto& m = model.as<LinearSvm>();
      j.update(linear_json(m.weights(), m.bias()));
      break;
    }
    case Family::kTree: {
      json nodes = json::array();
      for (const auto& n : model.as<DecisionTree>().nodes()) {
        if (n.is_leaf()) {
          nodes.push_back({{"label", n.label}});
        } else {
          nodes.push_back({{"feature", n.feature},
                           {"threshold", n.threshold},
                           {"left", n.left},
                           {"right", n.right}});
        }
      }
      j["nodes"] = std::move(nodes);
      break;
    }
    case Family::kKnn: {
      const auto& m = model.as<KnnModel>();
      j["k"] = m.k();
      j["points"] = flat(m.points());
      j["labels"] = m.labels();
      break;
    }
    case Family::kEnsemble: {
      json experts = json::array();
      for (const auto& e : model.as<Ensemble>().experts()) experts.push_back(to_json(*e));
      j["experts"] = std::move(experts);
      break;
    }
  }
  return j;
}

Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormatTag) throw FormatError("not a model file");
    if (j.at("version").get<int>() != kFormatVersion) throw FormatError("unsupported model version");
    const Family family = parse_family(j.at("family").get<std::string>());
    const int dim = j.at("dim").get<int>();
    const int classes = j.at("num_classes").get<int>();
    switch (family) {
      case Family::kNet: {
        std::vector<NeuralNet::Layer> layers;
        for (const auto& l : j.at("layers")) {
          const auto in = l.at("in").get<Eigen::Index>();
          const auto out = l.at("out").get<Eigen::Index>();
          layers.push_back({matrix_from(l.at("weights"), out, in), vector_from(l.at("bias"), out)});
        }
        return NeuralNet(std::move(layers));
      }
      case Family::kLogReg:
        return SoftmaxRegression(matrix_from(j.at("weights"), classes, dim),
                                 vector_from(j.at("bias"), classes));
      case Family::kSvm:
        return LinearSvm(matrix_from(j.at("weights"), classes, dim),
                         vector_from(j.at("bias"), classes));
      case Family::kTree: {
        std::vector<TreeNode> nodes;
        for (const auto& n : j.at("nodes")) {
          TreeNode node;
          if (n.contains("label")) {
            node.label = n.at("label").get<int>();
          } else {
            node.feature = n.at("feature").get<int>();
            node.threshold = n.at("threshold").get<double>();
            node.left = n.at("left").get<int>();
            node.right = n.at("right").get<int>();
          }
          nodes.push_back(node);
        }
        return DecisionTree(dim, classes, std::move(nodes));
      }
      case Family::kKnn: {
        auto labels = j.at("labels").get<std::vector<int>>();
        const Matrix pts = matrix_from(j.at("points"), static_cast<Eigen::Index>(labels.size()), dim);
        return KnnModel(Features(pts), std::move(labels), classes, j.at("k").get<int>());
      }
      case Family::kEnsemble: {
        std::vector<std::shared_ptr<const Model>> experts;
        for (const auto& e : j.at("experts")) {
          experts.push_back(std::make_shared<const Model>(model_from_json(e)));
        }
        return Ensemble(std::move(experts));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
  throw FormatError("unknown model family");
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(model).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model file is not valid JSON: " + std::string(e.what()));
  }
  return model_from_json(j);
}

}  // namespace advt
