#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "priqa/aggregate.hpp"
#include "priqa/dataset.hpp"
#include "priqa/losses.hpp"
#include "priqa/model.hpp"

namespace priqa {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int batch_pairs = 32;
  int duplication = 16;
  int max_epochs = 1000;
  int eval_every = 1;
  double lambda = 20.0;
  double margin_alpha = 2.0;
  std::uint64_t seed = 0;
  int chunk_groups = 1;  // gradient-accumulation granularity (memory/cache knob)
};

// Flat key=value run configuration: dataset binding, network shape, optimizer
// settings, and ablation switches. Unknown keys are rejected; precedence is
// command line > file > defaults.
struct RunConfig {
  std::string database;   // tid2013 | live | csiq | kadid10k
  std::string data_root;
  int feature_dim = 128;
  std::vector<int> conv_channels = {32, 64, 64, 128, 128};
  int inn_blocks = 3;
  int inn_subnet_width = 128;
  int gru_hidden = 64;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int batch_pairs = 32;
  int duplication = 16;
  int max_epochs = 1000;
  int eval_every = 1;
  double lambda = 20.0;
  double margin_alpha = 2.0;
  std::uint64_t seed = 0;
  std::string aggregation = "gru";
  bool use_pr = true;
  bool use_inn = true;
  bool use_triplet = true;
  int chunk_groups = 1;

  void set(const std::string& key, const std::string& value);
  void load_file(const std::filesystem::path& path);
  void save_file(const std::filesystem::path& path) const;
  std::string serialized() const;

  NetConfig net() const;
  Variant variant() const;
  TrainConfig train() const;
  LossConfig loss() const;
  DatabaseKind database_kind() const;

  void validate_for_training() const;
};

}  // namespace priqa
