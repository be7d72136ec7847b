#include "test_util.h"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace sluj::testing {

GradCheck check_gradients(
    const std::function<Tensor()>& loss,
    const std::vector<std::pair<std::string, Tensor>>& params, double h,
    double floor) {
  for (const auto& [name, p] : params) p.zero_grad();
  {
    Tape tape;
    tape.backward(loss());
  }
  GradCheck out;
  for (const auto& [name, p] : params) {
    std::vector<double> analytic(p.size(), 0.0);
    auto g = p.grad();
    std::copy(g.begin(), g.end(), analytic.begin());
    auto v = p.mutable_values();
    for (size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double up = loss().item();
      v[i] = orig - h;
      const double down = loss().item();
      v[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[i];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double err = std::abs(a - numeric) / std::max(scale, floor);
      ++out.checked;
      if (err > out.max_error || std::isnan(err)) {
        out.max_error = std::isnan(err) ? INFINITY : err;
        std::ostringstream s;
        s << name << "[" << i << "] analytic=" << a << " numeric=" << numeric;
        out.worst = s.str();
      }
    }
  }
  return out;
}

Tensor random_param(size_t rows, size_t cols, Rng& rng, double scale) {
  std::vector<double> data(rows * cols);
  for (double& v : data) v = rng.uniform(-scale, scale);
  return Tensor::parameter(rows, cols, std::move(data));
}

Tensor random_const(size_t rows, size_t cols, Rng& rng, double scale) {
  std::vector<double> data(rows * cols);
  for (double& v : data) v = rng.uniform(-scale, scale);
  return Tensor::constant(rows, cols, std::move(data));
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("sluj_" + tag + "_" + std::to_string(::getpid()) + "_" +
           std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::filesystem::path source_dir() { return SLUJ_SOURCE_DIR; }
std::filesystem::path data_dir() { return source_dir() / "data"; }
std::filesystem::path test_data_dir() { return source_dir() / "tests" / "data"; }

}  // namespace sluj::testing
