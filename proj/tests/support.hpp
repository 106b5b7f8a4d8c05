#ifndef ADVT_TESTS_SUPPORT_HPP
#define ADVT_TESTS_SUPPORT_HPP

#include <filesystem>
#include <random>
#include <string>

#include "advt/dataset.hpp"
#include "advt/models.hpp"

namespace advt::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("advt-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Vector random_point(int dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(dim);
  for (int i = 0; i < dim; ++i) x(i) = u(rng);
  return x;
}

inline Features random_points(int n, int dim, std::mt19937_64& rng) {
  Features x(n, dim);
  for (int i = 0; i < n; ++i) x.row(i) = random_point(dim, rng).transpose();
  return x;
}

// Small synthetic split shared by the model-level tests.
inline TrainTest small_split(std::size_t train = 1500, std::size_t test = 300,
                             std::uint64_t seed = 7) {
  return synthetic_train_test(train, test, seed);
}

}  // namespace advt::testing

#endif  // ADVT_TESTS_SUPPORT_HPP
