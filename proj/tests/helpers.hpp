#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "priqa/core.hpp"
#include "priqa/image_io.hpp"
#include "priqa/synthetic.hpp"

namespace testutil {

// Runs f, which must throw priqa::Error, and returns the category.
template <class F>
priqa::ErrorCategory category_of(F&& f) {
  try {
    f();
  } catch (const priqa::Error& e) {
    return e.category();
  }
  throw std::runtime_error("expected a priqa::Error, none was thrown");
}

template <class F>
std::string error_message_of(F&& f) {
  try {
    f();
  } catch (const priqa::Error& e) {
    return e.what();
  }
  throw std::runtime_error("expected a priqa::Error, none was thrown");
}

// Fresh scratch directory under the test working directory; wiped on entry
// and removal is left to the next run so failures can be inspected.
inline std::filesystem::path scratch_dir(const std::string& name) {
  std::filesystem::path dir = std::filesystem::current_path() / ("tmp_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw std::runtime_error("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// Miniature database with several reference contents so reference-level
// splitting works: kadid10k layout, blur distortions at graded levels.
inline void write_mini_database(const std::filesystem::path& root, int n_refs,
                                int n_levels, Eigen::Index side = 96,
                                std::uint64_t seed = 11) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "images");
  std::ofstream csv(root / "dmos.csv");
  if (!csv.good()) throw std::runtime_error("cannot write mini dmos.csv");
  csv << "dist_img,ref_img,dmos,var\n";
  for (int r = 1; r <= n_refs; ++r) {
    char ref_name[16];
    std::snprintf(ref_name, sizeof(ref_name), "I%02d.png", r);
    const priqa::Image ref =
        priqa::make_procedural_image(side, side, seed + static_cast<std::uint64_t>(r));
    priqa::save_image(ref, root / "images" / ref_name);
    for (int level = 1; level <= n_levels; ++level) {
      char dist_name[24];
      std::snprintf(dist_name, sizeof(dist_name), "I%02d_01_%02d.png", r, level);
      const priqa::Image dist = priqa::gaussian_blur(ref, 0.4 * level);
      priqa::save_image(dist, root / "images" / dist_name);
      const double mos = 4.8 - 0.42 * level;  // kadid-style MOS in [1, 5]
      csv << dist_name << ',' << ref_name << ',' << mos << ",0.1\n";
    }
  }
  if (!csv.good()) throw std::runtime_error("write failed for mini dmos.csv");
}

}  // namespace testutil
