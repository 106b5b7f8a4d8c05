#ifndef ADVT_DATASET_HPP
#define ADVT_DATASET_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace advt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// One sample per row.
using Features = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

struct LabeledSample {
  Vector x;
  int y = 0;
};

struct Dataset {
  Features x;
  std::vector<int> y;
  int num_classes = 0;

  std::size_t size() const { return y.size(); }
  int dim() const { return static_cast<int>(x.cols()); }
  bool empty() const { return y.empty(); }

  LabeledSample at(std::size_t i) const;
  Dataset slice(std::size_t begin, std::size_t end) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

// Independent child seed for stream `stream` of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Throws ConsistencyError if labels are out of range or shapes disagree.
void validate(const Dataset& data);

// Clamps every component into [0, 1].
void clip_unit(Eigen::Ref<Vector> x);
void clip_unit(Features& x);

// IDX big-endian containers: images magic 0x00000803, labels 0x00000801.
// Pixel bytes are divided by 255.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);
// Inverse of load_idx; values are rounded to the nearest byte.
void save_idx(const Dataset& data, int rows, int cols,
              const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

// Header row required. Features are clipped into [0, 1]; the label column must
// hold integers. num_classes is 1 + the largest label seen.
Dataset load_csv(const std::filesystem::path& path,
                 const std::string& label_column = "label");
// Feature columns are named f0..f{d-1}; values truncated to 8 decimals.
void save_csv(const Dataset& data, const std::filesystem::path& path,
              const std::string& label_column = "label");

// Part i holds samples [i * part_size, (i + 1) * part_size).
std::vector<Dataset> split_disjoint(const Dataset& data, std::size_t part_size,
                                    std::size_t num_parts);

// Deterministic 8x8 "digit" fixture. Each class is drawn from a few line
// strokes of a shared vocabulary (classes overlap where they share strokes);
// every sample wobbles the stroke endpoints, varies the ink intensity and adds
// pixel noise, clipped to [0, 1] so the background saturates at 0.
struct SyntheticSpec {
  std::size_t samples = 12000;
  int num_classes = 10;
  int side = 8;  // dim = side * side
  int vocabulary = 24;
  int strokes_per_mode = 3;
  int modes_per_class = 1;
  int max_shift = 0;
  int endpoint_jitter = 1;  // pixels
  double min_intensity = 0.7;
  double noise = 0.05;
  std::uint64_t seed = 2016;
};

Dataset make_synthetic_digits(const SyntheticSpec& spec);

struct TrainTest {
  Dataset train;
  Dataset validation;
  Dataset test;
};

// Desk-scale default: 10,000 train / 2,000 test drawn from one synthetic stream.
TrainTest synthetic_train_test(std::size_t train_size = 10000,
                               std::size_t test_size = 2000,
                               std::uint64_t seed = 2016);

// Standard MNIST file names inside `dir`. The 60k training file is split
// 50k train / 10k validation in index order; sizes can be truncated.
TrainTest load_mnist(const std::filesystem::path& dir, std::size_t max_train = 50000,
                     std::size_t max_test = 10000);

// Data source by name:
//   synthetic                      the 8x8 fixture, seeded by `seed`
//   mnist:<dir>                    standard MNIST files
//   csv:<train.csv>,<test.csv>     header row, "label" column
//   idx:<img>,<lbl>,<img>,<lbl>    train pair then test pair
// Train and test are truncated to the requested sizes.
TrainTest load_source(const std::string& spec, std::size_t train_size, std::size_t test_size,
                      std::uint64_t seed);

}  // namespace advt

#endif  // ADVT_DATASET_HPP
