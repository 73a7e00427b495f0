#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "noisediag/noisediag.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag = "nd") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

private:
  fs::path path_;
};

inline noisediag::LatentTensor random_tensor(const noisediag::Shape& shape, noisediag::Rng& rng) {
  std::vector<double> v(shape.size());
  for (double& x : v) x = rng.normal();
  return noisediag::LatentTensor(shape, std::move(v));
}

inline noisediag::Shape random_shape(noisediag::Rng& rng, std::size_t max_c, std::size_t max_t, std::size_t max_h,
                                     std::size_t max_w) {
  return {1 + rng.bounded(max_c), 1 + rng.bounded(max_t), 1 + rng.bounded(max_h), 1 + rng.bounded(max_w)};
}

inline double rel_err(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline std::string slurp(const fs::path& p) { return noisediag::read_file_bytes(p); }

/// Writes a small manifest + npy dataset: prompts x seeds, given shape.
inline fs::path write_dataset(const fs::path& dir, const std::vector<std::string>& prompts,
                              const std::vector<std::string>& seeds, const noisediag::Shape& shape,
                              std::uint64_t seed = 1) {
  noisediag::Rng rng(seed);
  nlohmann::json doc;
  doc["declared_shape"] = {shape.channels, shape.frames, shape.height, shape.width};
  doc["entries"] = nlohmann::json::array();
  for (const auto& p : prompts)
    for (const auto& s : seeds) {
      auto z = random_tensor(shape, rng);
      auto zg = z;
      for (double& x : zg.values()) x += 0.1 * rng.normal();
      const std::string stem = p + "_" + s;
      noisediag::save_tensor(dir / "data" / (stem + "_z.npy"), z);
      noisediag::save_tensor(dir / "data" / (stem + "_zg.npy"), zg);
      doc["entries"].push_back(
          {{"prompt_id", p}, {"seed_id", s}, {"path_z", "data/" + stem + "_z.npy"}, {"path_zg", "data/" + stem + "_zg.npy"}});
    }
  const auto path = dir / "manifest.json";
  noisediag::write_file_bytes(path, doc.dump(2));
  return path;
}

} // namespace testing_support
