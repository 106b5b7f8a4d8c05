#include "advt/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "advt/error.hpp"

namespace advt {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw FormatError("truncated IDX header in " + path.string());
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>((v >> 24) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>(v & 0xff)};
  out.write(b.data(), 4);
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

double parse_real(const std::string& raw, std::size_t line_no) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw FormatError("line " + std::to_string(line_no) + ": not a number: '" + raw + "'");
  }
  return v;
}

int parse_label(const std::string& raw, std::size_t line_no) {
  const std::string s = trim(raw);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty() || v < 0) {
    throw FormatError("line " + std::to_string(line_no) +
                      ": label is not a non-negative integer: '" + raw + "'");
  }
  return v;
}

// Truncates toward zero at 8 decimals; the epsilon keeps already-truncated
// values stable across save/load cycles.
std::string format_truncated(double v) {
  const bool negative = v < 0.0;
  const auto q = static_cast<long long>(std::floor(std::abs(v) * 1e8 + 1e-6));
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s%lld.%08lld", negative && q != 0 ? "-" : "",
                q / 100000000LL, q % 100000000LL);
  return buf;
}

}  // namespace

LabeledSample Dataset::at(std::size_t i) const {
  if (i >= size()) throw ContractError("sample index out of range");
  return {x.row(static_cast<Eigen::Index>(i)).transpose(), y[i]};
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw SizeError("slice out of range");
  Dataset out;
  out.num_classes = num_classes;
  out.x = x.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  out.y.assign(y.begin() + static_cast<std::ptrdiff_t>(begin),
               y.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
  out.y.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) throw ContractError("subset index out of range");
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(indices[r]));
    out.y.push_back(y[indices[r]]);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void validate(const Dataset& data) {
  if (static_cast<std::size_t>(data.x.rows()) != data.y.size()) {
    throw ConsistencyError("feature rows and label count differ");
  }
  for (int label : data.y) {
    if (label < 0 || label >= data.num_classes) {
      throw ConsistencyError("label " + std::to_string(label) + " outside 0.." +
                             std::to_string(data.num_classes - 1));
    }
  }
}

void clip_unit(Eigen::Ref<Vector> x) { x = x.cwiseMax(0.0).cwiseMin(1.0); }

void clip_unit(Features& x) { x = x.cwiseMax(0.0).cwiseMin(1.0); }

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  auto images = open_binary(images_path);
  auto labels = open_binary(labels_path);

  if (read_be32(images, images_path) != kIdxImagesMagic) {
    throw FormatError("bad IDX image magic in " + images_path.string());
  }
  if (read_be32(labels, labels_path) != kIdxLabelsMagic) {
    throw FormatError("bad IDX label magic in " + labels_path.string());
  }
  const std::uint32_t n_images = read_be32(images, images_path);
  const std::uint32_t rows = read_be32(images, images_path);
  const std::uint32_t cols = read_be32(images, images_path);
  const std::uint32_t n_labels = read_be32(labels, labels_path);
  if (n_images != n_labels) {
    throw ConsistencyError("image count " + std::to_string(n_images) +
                           " != label count " + std::to_string(n_labels));
  }

  const std::size_t dim = std::size_t{rows} * cols;
  Dataset data;
  data.x.resize(n_images, static_cast<Eigen::Index>(dim));
  data.y.resize(n_images);

  std::vector<unsigned char> pixels(dim);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    if (!images.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(dim))) {
      throw ConsistencyError("image file shorter than its header count");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      data.x(i, static_cast<Eigen::Index>(j)) = pixels[j] / 255.0;
    }
    char label = 0;
    if (!labels.get(label)) throw ConsistencyError("label file shorter than its header count");
    data.y[i] = static_cast<unsigned char>(label);
  }
  const int max_label = data.y.empty() ? -1 : *std::max_element(data.y.begin(), data.y.end());
  data.num_classes = max_label + 1;
  return data;
}

void save_idx(const Dataset& data, int rows, int cols,
              const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  if (rows * cols != data.dim() && !data.empty()) {
    throw ContractError("rows * cols must equal the feature dimension");
  }
  std::ofstream images(images_path, std::ios::binary);
  std::ofstream labels(labels_path, std::ios::binary);
  if (!images || !labels) throw IoError("cannot write IDX files");
  const auto n = static_cast<std::uint32_t>(data.size());
  write_be32(images, kIdxImagesMagic);
  write_be32(images, n);
  write_be32(images, static_cast<std::uint32_t>(rows));
  write_be32(images, static_cast<std::uint32_t>(cols));
  write_be32(labels, kIdxLabelsMagic);
  write_be32(labels, n);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) {
      const double v = std::clamp(data.x(static_cast<Eigen::Index>(i), j), 0.0, 1.0);
      images.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    labels.put(static_cast<char>(static_cast<unsigned char>(data.y[i])));
  }
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing CSV header in " + path.string());
  const auto header = split_csv_line(line);
  const auto label_it = std::find_if(header.begin(), header.end(), [&](const std::string& h) {
    return trim(h) == label_column;
  });
  if (label_it == header.end()) {
    throw FormatError("no '" + label_column + "' column in " + path.string());
  }
  const auto label_idx = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t dim = header.size() - 1;

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line) == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " cells, got " +
                        std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_idx) {
        labels.push_back(parse_label(cells[c], line_no));
      } else {
        values.push_back(std::clamp(parse_real(cells[c], line_no), 0.0, 1.0));
      }
    }
  }

  Dataset data;
  data.x = Eigen::Map<Features>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                static_cast<Eigen::Index>(dim));
  data.y = std::move(labels);
  const int max_label = data.y.empty() ? -1 : *std::max_element(data.y.begin(), data.y.end());
  data.num_classes = max_label + 1;
  return data;
}

void save_csv(const Dataset& data, const std::filesystem::path& path,
              const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (int j = 0; j < data.dim(); ++j) out << 'f' << j << ',';
  out << label_column << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.dim(); ++j) {
      out << format_truncated(data.x(static_cast<Eigen::Index>(i), j)) << ',';
    }
    out << data.y[i] << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Dataset> split_disjoint(const Dataset& data, std::size_t part_size,
                                    std::size_t num_parts) {
  if (part_size * num_parts > data.size()) {
    throw SizeError("need " + std::to_string(part_size * num_parts) + " samples, have " +
                    std::to_string(data.size()));
  }
  std::vector<Dataset> parts;
  parts.reserve(num_parts);
  for (std::size_t i = 0; i < num_parts; ++i) {
    parts.push_back(data.slice(i * part_size, (i + 1) * part_size));
  }
  return parts;
}

Dataset make_synthetic_digits(const SyntheticSpec& spec) {
  if (spec.num_classes < 1 || spec.side < 3 || spec.modes_per_class < 1 ||
      spec.strokes_per_mode < 1 || spec.vocabulary < spec.strokes_per_mode) {
    throw ContractError("invalid synthetic dataset spec");
  }
  const int side = spec.side;
  const int dim = side * side;
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> coord(0, side - 1);

  // Shared stroke vocabulary; every class mode combines a few strokes, so
  // classes overlap partially the way handwritten digits share strokes.
  struct Stroke {
    int x0, y0, x1, y1;
  };
  std::vector<Stroke> strokes;
  for (int s = 0; s < spec.vocabulary; ++s) {
    strokes.push_back({coord(rng), coord(rng), coord(rng), coord(rng)});
  }
  std::uniform_int_distribution<int> pick_stroke(0, spec.vocabulary - 1);
  std::vector<std::vector<std::vector<int>>> modes(static_cast<std::size_t>(spec.num_classes));
  for (auto& class_modes : modes) {
    for (int m = 0; m < spec.modes_per_class; ++m) {
      std::vector<int> chosen;
      while (static_cast<int>(chosen.size()) < spec.strokes_per_mode) {
        const int s = pick_stroke(rng);
        if (std::find(chosen.begin(), chosen.end(), s) == chosen.end()) chosen.push_back(s);
      }
      class_modes.push_back(std::move(chosen));
    }
  }

  std::normal_distribution<double> noise(0.0, spec.noise);
  std::uniform_int_distribution<int> pick_class(0, spec.num_classes - 1);
  std::uniform_int_distribution<int> pick_mode(0, spec.modes_per_class - 1);
  std::uniform_int_distribution<int> shift(-spec.max_shift, spec.max_shift);
  std::uniform_int_distribution<int> wobble(-spec.endpoint_jitter, spec.endpoint_jitter);
  std::uniform_real_distribution<double> intensity(spec.min_intensity, 1.0);

  auto draw = [&](Vector& img, double x0, double y0, double x1, double y1, double value) {
    for (int step = 0; step <= 4 * side; ++step) {
      const double t = static_cast<double>(step) / (4 * side);
      const int px = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int py = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      if (px >= 0 && px < side && py >= 0 && py < side) {
        img(py * side + px) = std::max(img(py * side + px), value);
      }
    }
  };

  Dataset data;
  data.num_classes = spec.num_classes;
  data.x.resize(static_cast<Eigen::Index>(spec.samples), dim);
  data.y.resize(spec.samples);
  Vector img(dim);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const int k = pick_class(rng);
    const auto& mode = modes[static_cast<std::size_t>(k)][static_cast<std::size_t>(pick_mode(rng))];
    const int dx = shift(rng);
    const int dy = shift(rng);
    const double value = intensity(rng);
    img.setZero();
    for (int s : mode) {
      const Stroke& st = strokes[static_cast<std::size_t>(s)];
      draw(img, st.x0 + dx + wobble(rng), st.y0 + dy + wobble(rng), st.x1 + dx + wobble(rng),
           st.y1 + dy + wobble(rng), value);
    }
    for (int j = 0; j < dim; ++j) {
      data.x(static_cast<Eigen::Index>(i), j) = std::clamp(img(j) + noise(rng), 0.0, 1.0);
    }
    data.y[i] = k;
  }
  return data;
}

TrainTest synthetic_train_test(std::size_t train_size, std::size_t test_size,
                               std::uint64_t seed) {
  SyntheticSpec spec;
  spec.samples = train_size + test_size;
  spec.seed = seed;
  const Dataset all = make_synthetic_digits(spec);
  TrainTest out;
  out.train = all.slice(0, train_size);
  out.validation.num_classes = all.num_classes;
  out.validation.x.resize(0, all.dim());
  out.test = all.slice(train_size, train_size + test_size);
  return out;
}

TrainTest load_mnist(const std::filesystem::path& dir, std::size_t max_train,
                     std::size_t max_test) {
  const Dataset full = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  const Dataset test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  const std::size_t train_end = std::min<std::size_t>(50000, full.size());
  TrainTest out;
  out.train = full.slice(0, std::min(max_train, train_end));
  out.validation = full.slice(train_end, full.size());
  out.test = test.slice(0, std::min(max_test, test.size()));
  const int classes = std::max({out.train.num_classes, out.test.num_classes, 10});
  out.train.num_classes = out.validation.num_classes = out.test.num_classes = classes;
  return out;
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) parts.push_back(item);
  return parts;
}

TrainTest pair_up(Dataset train, Dataset test, std::size_t train_size, std::size_t test_size) {
  if (train.dim() != test.dim()) throw ConsistencyError("train and test dimensions differ");
  TrainTest out;
  out.train = train.slice(0, std::min(train_size, train.size()));
  out.test = test.slice(0, std::min(test_size, test.size()));
  const int classes = std::max(train.num_classes, test.num_classes);
  out.train.num_classes = out.test.num_classes = classes;
  out.validation.num_classes = classes;
  out.validation.x.resize(0, train.dim());
  return out;
}

}  // namespace

TrainTest load_source(const std::string& spec, std::size_t train_size, std::size_t test_size,
                      std::uint64_t seed) {
  if (spec == "synthetic") return synthetic_train_test(train_size, test_size, seed);
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "mnist" && !rest.empty()) return load_mnist(rest, train_size, test_size);
  if (kind == "csv") {
    const auto files = split_list(rest);
    if (files.size() != 2) throw ContractError("csv source needs csv:<train>,<test>");
    return pair_up(load_csv(files[0]), load_csv(files[1]), train_size, test_size);
  }
  if (kind == "idx") {
    const auto files = split_list(rest);
    if (files.size() != 4) throw ContractError("idx source needs four files");
    return pair_up(load_idx(files[0], files[1]), load_idx(files[2], files[3]), train_size,
                   test_size);
  }
  throw ContractError("unknown data source '" + spec + "'");
}

}  // namespace advt
