#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "priqa/core.hpp"
#include "priqa/image.hpp"
#include "priqa/rng.hpp"

namespace priqa {

enum class DatabaseKind { tid2013, live, csiq, kadid10k };

std::string to_string(DatabaseKind kind);
DatabaseKind database_from_string(const std::string& name);

// Distorted-image record count of the full database (before any exclusion),
// used for ingest sanity reporting.
int expected_record_count(DatabaseKind kind);
int expected_reference_count(DatabaseKind kind);

struct ImageRecord {
  std::string image_id;         // path of the distorted image, relative to root
  std::string reference_id;     // key into DatabaseManifest::references
  std::string distortion_type;  // database vocabulary string
  int distortion_level = 0;
  double raw_score = 0.0;       // database-native units
  double dmos = 0.0;            // normalized, [0,100], higher = worse
};

struct DatabaseManifest {
  DatabaseKind kind = DatabaseKind::tid2013;
  std::filesystem::path root;
  std::vector<ImageRecord> records;
  // Reference pixels are resolved lazily: paths are recorded here but only
  // opened when a consumer actually needs reference pixels, so score-only
  // workflows run with reference files absent.
  std::map<std::string, std::filesystem::path> references;

  std::filesystem::path distorted_path(const ImageRecord& r) const {
    return root / r.image_id;
  }
  std::filesystem::path reference_path(const ImageRecord& r) const {
    auto it = references.find(r.reference_id);
    PRIQA_REQUIRE(it != references.end(), ErrorCategory::integrity,
                  "unknown reference id '" + r.reference_id + "'");
    return it->second;
  }
};

// Linear map of the native score range onto DMOS in [0,100] (higher = worse);
// MOS-oriented databases are flipped.
double normalize_score(double raw, DatabaseKind kind);

DatabaseManifest load_manifest(const std::filesystem::path& root, DatabaseKind kind);

void write_manifest_csv(const DatabaseManifest& manifest,
                        const std::filesystem::path& path);

struct SplitSpec {
  DatabaseKind database = DatabaseKind::tid2013;
  std::uint64_t seed = 0;
  std::set<std::string> train_refs, val_refs, test_refs;
};

// Content-disjoint reference split. Validation and test sizes are the ratio
// rounded half-up; every remaining reference goes to train.
SplitSpec split_by_reference(const DatabaseManifest& manifest,
                             const std::array<double, 3>& ratios, std::uint64_t seed);

void save_split(const SplitSpec& split, const std::filesystem::path& path);
SplitSpec load_split(const std::filesystem::path& path);

// Indices into manifest.records whose reference belongs to `refs`.
std::vector<int> records_with_refs(const DatabaseManifest& manifest,
                                   const std::set<std::string>& refs);

// Decoded-image cache with a byte-bounded LRU policy.
class ImageStore {
 public:
  explicit ImageStore(std::size_t max_bytes = std::size_t(2) << 30)
      : max_bytes_(max_bytes) {}

  const Image& get(const std::filesystem::path& path);

 private:
  struct Entry {
    Image image;
    std::list<std::string>::iterator lru_it;
  };
  std::size_t max_bytes_;
  std::size_t used_bytes_ = 0;
  std::unordered_map<std::string, Entry> cache_;
  std::list<std::string> lru_;  // front = most recent
};

struct TrainingBatch {
  int pairs = 0;        // sampled image pairs (groups)
  int duplication = 0;  // aligned patch pairs per image
  std::vector<int> record_indices;               // size pairs
  std::vector<std::string> image_ids;            // size pairs
  VectorX<double> labels;                        // size pairs, dmos
  std::vector<PatchBytes> ref_patches;           // size pairs*duplication
  std::vector<PatchBytes> dist_patches;          // aligned with ref_patches
  std::vector<std::pair<Eigen::Index, Eigen::Index>> offsets;  // pixel (y0, x0)
  std::vector<int> group_of;                     // patch index -> group index

  Eigen::Index n_patches() const {
    return static_cast<Eigen::Index>(ref_patches.size());
  }
};

// Samples `batch_pairs` training images (without replacement when the split
// is large enough) and cuts `duplication` randomly positioned aligned patch
// pairs from each; group-major order.
TrainingBatch make_training_batch(const DatabaseManifest& manifest,
                                  const SplitSpec& split, ImageStore& store,
                                  int batch_pairs, int duplication, Rng& rng);

inline TrainingBatch make_training_batch(const DatabaseManifest& manifest,
                                         const SplitSpec& split, ImageStore& store,
                                         int batch_pairs, int duplication,
                                         std::uint64_t seed) {
  Rng rng(seed);
  return make_training_batch(manifest, split, store, batch_pairs, duplication, rng);
}

}  // namespace priqa
