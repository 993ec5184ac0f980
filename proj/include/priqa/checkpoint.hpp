#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "priqa/core.hpp"
#include "priqa/model.hpp"

namespace priqa {

struct AdamState {
  std::vector<MatrixX<float>> m, v;  // one pair per parameter, model order
  std::int64_t t = 0;

  void reset(const std::vector<Parameter<float>*>& params) {
    m.clear();
    v.clear();
    for (const auto* p : params) {
      m.push_back(MatrixX<float>::Zero(p->value.rows(), p->value.cols()));
      v.push_back(MatrixX<float>::Zero(p->value.rows(), p->value.cols()));
    }
    t = 0;
  }
};

struct CheckpointMeta {
  NetConfig net;
  Variant variant;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string database;
  int best_epoch = -1;
  double best_val_srcc = -2.0;  // sentinel: no validation result yet
  bool has_adam = false;
};

// Versioned binary container: a JSON header describing the network shape and
// named float32 arrays, followed by the raw array payload. Loads are rejected
// unless the stored network configuration matches the reconstructed model
// exactly.
void save_checkpoint(const std::filesystem::path& path, PrfModel<float>& model,
                     const CheckpointMeta& meta, const AdamState* adam = nullptr);

// Rebuilds the model (and optionally Adam state) from the file.
CheckpointMeta load_checkpoint(const std::filesystem::path& path,
                               PrfModel<float>& model, AdamState* adam = nullptr);

// Writes/reads the best-checkpoint marker (a one-line file naming the
// checkpoint next to it).
void write_best_marker(const std::filesystem::path& dir, const std::string& filename);
std::filesystem::path read_best_marker(const std::filesystem::path& dir);

}  // namespace priqa
