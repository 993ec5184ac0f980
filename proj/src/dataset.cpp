#include "priqa/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "priqa/image_io.hpp"

namespace priqa {

namespace fs = std::filesystem;

std::string to_string(DatabaseKind kind) {
  switch (kind) {
    case DatabaseKind::tid2013: return "tid2013";
    case DatabaseKind::live: return "live";
    case DatabaseKind::csiq: return "csiq";
    case DatabaseKind::kadid10k: return "kadid10k";
  }
  return "?";
}

DatabaseKind database_from_string(const std::string& name) {
  std::string s;
  for (char c : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (s == "tid2013") return DatabaseKind::tid2013;
  if (s == "live") return DatabaseKind::live;
  if (s == "csiq") return DatabaseKind::csiq;
  if (s == "kadid10k" || s == "kadid-10k" || s == "kadid") return DatabaseKind::kadid10k;
  fail(ErrorCategory::usage, "unknown database kind '" + name +
                                 "' (expected tid2013, live, csiq, or kadid10k)");
}

int expected_record_count(DatabaseKind kind) {
  switch (kind) {
    case DatabaseKind::tid2013: return 3000;
    case DatabaseKind::live: return 982;
    case DatabaseKind::csiq: return 866;
    case DatabaseKind::kadid10k: return 10125;
  }
  return 0;
}

int expected_reference_count(DatabaseKind kind) {
  switch (kind) {
    case DatabaseKind::tid2013: return 25;
    case DatabaseKind::live: return 29;
    case DatabaseKind::csiq: return 30;
    case DatabaseKind::kadid10k: return 81;
  }
  return 0;
}

double normalize_score(double raw, DatabaseKind kind) {
  auto check = [&](double lo, double hi) {
    if (!(raw >= lo && raw <= hi)) {
      std::ostringstream msg;
      msg << "score " << raw << " outside the nominal " << to_string(kind)
          << " range [" << lo << ", " << hi << "]";
      fail(ErrorCategory::range, msg.str());
    }
  };
  switch (kind) {
    case DatabaseKind::live:  // DMOS already in [0,100]
      check(0.0, 100.0);
      return raw;
    case DatabaseKind::csiq:  // DMOS in [0,1]
      check(0.0, 1.0);
      return raw * 100.0;
    case DatabaseKind::tid2013:  // MOS in [0,9], flipped
      check(0.0, 9.0);
      return (9.0 - raw) / 9.0 * 100.0;
    case DatabaseKind::kadid10k:  // MOS in [1,5], flipped
      check(1.0, 5.0);
      return (5.0 - raw) / 4.0 * 100.0;
  }
  fail(ErrorCategory::usage, "unknown database kind");
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) fields.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double parse_real(const std::string& s, const std::string& what, int line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    PRIQA_REQUIRE(pos == s.size(), ErrorCategory::ingestion, "trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCategory::ingestion, "cannot parse " + what + " '" + s + "' on line " +
                                       std::to_string(line_no));
  }
}

int parse_int(const std::string& s, const std::string& what, int line_no) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    PRIQA_REQUIRE(pos == s.size(), ErrorCategory::ingestion, "trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCategory::ingestion, "cannot parse " + what + " '" + s + "' on line " +
                                       std::to_string(line_no));
  }
}

std::ifstream open_score_file(const fs::path& path) {
  std::ifstream in(path);
  PRIQA_REQUIRE(in.good(), ErrorCategory::ingestion,
                "missing score file: expected " + path.string());
  return in;
}

// Pick the first existing candidate; fall back to the first candidate without
// failing so that score-only workflows never require reference pixels.
fs::path resolve_candidate(const fs::path& root, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (fs::exists(root / n)) return root / n;
  }
  return root / names.front();
}

void ingest_tid2013(DatabaseManifest& m) {
  const fs::path score_path = m.root / "mos_with_names.txt";
  std::ifstream in = open_score_file(score_path);
  std::string line;
  int line_no = 0;
  std::set<std::string> seen_refs;
  std::vector<std::string> bad_names;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string mos_str, name;
    ls >> mos_str >> name;
    if (name.empty()) {
      fail(ErrorCategory::ingestion,
           "malformed line " + std::to_string(line_no) + " in " + score_path.string());
    }
    // names look like i01_05_3.bmp / I01_05_3.bmp
    bool ok = name.size() >= 12 && (name[0] == 'i' || name[0] == 'I') &&
              std::isdigit(static_cast<unsigned char>(name[1])) &&
              std::isdigit(static_cast<unsigned char>(name[2])) && name[3] == '_' &&
              std::isdigit(static_cast<unsigned char>(name[4])) &&
              std::isdigit(static_cast<unsigned char>(name[5])) && name[6] == '_' &&
              std::isdigit(static_cast<unsigned char>(name[7]));
    if (!ok) {
      bad_names.push_back(name);
      continue;
    }
    const std::string ref_num = name.substr(1, 2);
    const std::string type_id = name.substr(4, 2);
    const int level = name[7] - '0';
    if (ref_num == "25") continue;  // excluded reference content
    ImageRecord rec;
    rec.image_id = "distorted_images/" + name;
    rec.reference_id = "I" + ref_num;
    rec.distortion_type = type_id;
    rec.distortion_level = level;
    rec.raw_score = parse_real(mos_str, "MOS", line_no);
    rec.dmos = normalize_score(rec.raw_score, DatabaseKind::tid2013);
    seen_refs.insert(rec.reference_id);
    m.records.push_back(std::move(rec));
  }
  if (!bad_names.empty()) {
    std::string listing;
    for (std::size_t i = 0; i < bad_names.size() && i < 8; ++i)
      listing += (i ? ", " : "") + bad_names[i];
    fail(ErrorCategory::integrity,
         "unresolvable reference ids in tid2013 records: " + listing);
  }
  for (const auto& ref : seen_refs) {
    const std::string num = ref.substr(1);
    m.references[ref] = resolve_candidate(
        m.root / "reference_images",
        {"I" + num + ".BMP", "I" + num + ".bmp", "i" + num + ".bmp", "i" + num + ".BMP",
         "I" + num + ".png"});
  }
}

void ingest_kadid10k(DatabaseManifest& m) {
  const fs::path score_path = m.root / "dmos.csv";
  std::ifstream in = open_score_file(score_path);
  std::string line;
  int line_no = 0;
  std::set<std::string> seen_refs;
  std::vector<std::string> bad_rows;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line_no == 1 && line.find("dist_img") != std::string::npos) continue;  // header
    auto fields = split_csv_line(line);
    PRIQA_REQUIRE(fields.size() >= 3, ErrorCategory::ingestion,
                  "malformed line " + std::to_string(line_no) + " in " +
                      score_path.string());
    const std::string& dist = fields[0];
    const std::string& ref = fields[1];
    // dist: I??_??_??.png ; ref: I??.png
    bool ok = dist.size() == 13 && dist[0] == 'I' && dist[3] == '_' && dist[6] == '_' &&
              ref.size() == 7 && ref[0] == 'I';
    if (!ok) {
      bad_rows.push_back(dist + " -> " + ref);
      continue;
    }
    ImageRecord rec;
    rec.image_id = "images/" + dist;
    rec.reference_id = ref.substr(0, 3);
    rec.distortion_type = dist.substr(4, 2);
    rec.distortion_level = parse_int(dist.substr(7, 2), "distortion level", line_no);
    rec.raw_score = parse_real(fields[2], "MOS", line_no);
    rec.dmos = normalize_score(rec.raw_score, DatabaseKind::kadid10k);
    seen_refs.insert(rec.reference_id);
    m.records.push_back(std::move(rec));
  }
  if (!bad_rows.empty()) {
    std::string listing;
    for (std::size_t i = 0; i < bad_rows.size() && i < 8; ++i)
      listing += (i ? ", " : "") + bad_rows[i];
    fail(ErrorCategory::integrity,
         "unresolvable reference ids in kadid10k records: " + listing);
  }
  for (const auto& ref : seen_refs) m.references[ref] = m.root / "images" / (ref + ".png");
}

// LIVE and CSIQ ship their scores in binary/spreadsheet formats; we ingest a
// converted CSV (see README for the recipe) with the columns
// distorted_path,reference_path,distortion_type,distortion_level,raw_score.
void ingest_converted_csv(DatabaseManifest& m, const std::string& csv_name) {
  const fs::path score_path = m.root / csv_name;
  std::ifstream in = open_score_file(score_path);
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      PRIQA_REQUIRE(fields.size() == 5 && fields[0] == "distorted_path" &&
                        fields[1] == "reference_path" && fields[2] == "distortion_type" &&
                        fields[3] == "distortion_level" && fields[4] == "raw_score",
                    ErrorCategory::ingestion,
                    "unexpected header in " + score_path.string() +
                        " (expected distorted_path,reference_path,distortion_type,"
                        "distortion_level,raw_score)");
      continue;
    }
    PRIQA_REQUIRE(fields.size() == 5, ErrorCategory::ingestion,
                  "malformed line " + std::to_string(line_no) + " in " +
                      score_path.string());
    PRIQA_REQUIRE(!fields[1].empty(), ErrorCategory::integrity,
                  "empty reference for record '" + fields[0] + "' (line " +
                      std::to_string(line_no) + ")");
    ImageRecord rec;
    rec.image_id = fields[0];
    rec.reference_id = fields[1];
    rec.distortion_type = fields[2];
    rec.distortion_level = parse_int(fields[3], "distortion level", line_no);
    rec.raw_score = parse_real(fields[4], "raw score", line_no);
    rec.dmos = normalize_score(rec.raw_score, m.kind);
    m.references[rec.reference_id] = m.root / rec.reference_id;
    m.records.push_back(std::move(rec));
  }
}

}  // namespace

DatabaseManifest load_manifest(const fs::path& root, DatabaseKind kind) {
  PRIQA_REQUIRE(fs::is_directory(root), ErrorCategory::ingestion,
                "dataset root is not a directory: " + root.string());
  DatabaseManifest m;
  m.kind = kind;
  m.root = root;
  switch (kind) {
    case DatabaseKind::tid2013: ingest_tid2013(m); break;
    case DatabaseKind::kadid10k: ingest_kadid10k(m); break;
    case DatabaseKind::live: ingest_converted_csv(m, "live_scores.csv"); break;
    case DatabaseKind::csiq: ingest_converted_csv(m, "csiq_scores.csv"); break;
  }
  PRIQA_REQUIRE(!m.records.empty(), ErrorCategory::ingestion,
                "no records ingested from " + root.string());
  const int expected = expected_record_count(kind) -
                       (kind == DatabaseKind::tid2013 ? 120 : 0);
  if (static_cast<int>(m.records.size()) != expected) {
    std::cerr << "warning: " << to_string(kind) << " has " << m.records.size()
              << " records, full database has " << expected << "\n";
  }
  return m;
}

void write_manifest_csv(const DatabaseManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "cannot write " + path.string());
  out << "image_id,reference_id,distortion_type,distortion_level,raw_score,dmos\n";
  for (const auto& r : manifest.records) {
    out << r.image_id << ',' << r.reference_id << ',' << r.distortion_type << ','
        << r.distortion_level << ',' << r.raw_score << ',' << r.dmos << '\n';
  }
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "write failed for " + path.string());
}

SplitSpec split_by_reference(const DatabaseManifest& manifest,
                             const std::array<double, 3>& ratios, std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  PRIQA_REQUIRE(std::abs(total - 1.0) <= 1e-9, ErrorCategory::config,
                "split ratios must sum to 1");
  std::vector<std::string> refs;
  refs.reserve(manifest.references.size());
  for (const auto& [id, _] : manifest.references) refs.push_back(id);
  const auto n = static_cast<Eigen::Index>(refs.size());
  PRIQA_REQUIRE(n >= 5, ErrorCategory::size,
                "need at least 5 references to split, have " + std::to_string(n));

  Rng rng(mix_seed(seed, "split", static_cast<std::uint64_t>(manifest.kind)));
  rng.shuffle(refs);

  const auto n_val = static_cast<Eigen::Index>(std::floor(ratios[1] * static_cast<double>(n) + 0.5));
  const auto n_test = static_cast<Eigen::Index>(std::floor(ratios[2] * static_cast<double>(n) + 0.5));
  const Eigen::Index n_train = n - n_val - n_test;
  PRIQA_REQUIRE(n_train >= 1 && n_val >= 0 && n_test >= 0, ErrorCategory::config,
                "degenerate split sizes");

  SplitSpec split;
  split.database = manifest.kind;
  split.seed = seed;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string& id = refs[static_cast<std::size_t>(i)];
    if (i < n_train)
      split.train_refs.insert(id);
    else if (i < n_train + n_val)
      split.val_refs.insert(id);
    else
      split.test_refs.insert(id);
  }
  return split;
}

void save_split(const SplitSpec& split, const fs::path& path) {
  std::ofstream out(path);
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "cannot write " + path.string());
  out << "# database=" << to_string(split.database) << " seed=" << split.seed << "\n";
  auto section = [&](const char* name, const std::set<std::string>& refs) {
    out << '[' << name << "]\n";
    for (const auto& id : refs) out << id << '\n';
  };
  section("train", split.train_refs);
  section("val", split.val_refs);
  section("test", split.test_refs);
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "write failed for " + path.string());
}

SplitSpec load_split(const fs::path& path) {
  std::ifstream in(path);
  PRIQA_REQUIRE(in.good(), ErrorCategory::io, "cannot read split file " + path.string());
  SplitSpec split;
  std::string line;
  std::set<std::string>* current = nullptr;
  bool header = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string token;
      while (ls >> token) {
        auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
        if (key == "database") split.database = database_from_string(value);
        if (key == "seed") split.seed = std::stoull(value);
      }
      header = true;
      continue;
    }
    if (line == "[train]") { current = &split.train_refs; continue; }
    if (line == "[val]") { current = &split.val_refs; continue; }
    if (line == "[test]") { current = &split.test_refs; continue; }
    PRIQA_REQUIRE(current != nullptr, ErrorCategory::ingestion,
                  "split file entry outside a section: " + line);
    current->insert(line);
  }
  PRIQA_REQUIRE(header, ErrorCategory::ingestion,
                "split file missing '# database=... seed=...' header");
  return split;
}

std::vector<int> records_with_refs(const DatabaseManifest& manifest,
                                   const std::set<std::string>& refs) {
  std::vector<int> out;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (refs.count(manifest.records[i].reference_id))
      out.push_back(static_cast<int>(i));
  }
  return out;
}

const Image& ImageStore::get(const fs::path& path) {
  const std::string key = path.string();
  auto it = cache_.find(key);
  if (it != cache_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second.lru_it);
    return it->second.image;
  }
  Image img = load_image(path);
  const std::size_t bytes = img.data.size();
  while (used_bytes_ + bytes > max_bytes_ && !lru_.empty()) {
    const std::string& victim = lru_.back();
    auto vit = cache_.find(victim);
    used_bytes_ -= vit->second.image.data.size();
    cache_.erase(vit);
    lru_.pop_back();
  }
  lru_.push_front(key);
  Entry entry{std::move(img), lru_.begin()};
  auto [pos, _] = cache_.emplace(key, std::move(entry));
  used_bytes_ += bytes;
  return pos->second.image;
}

TrainingBatch make_training_batch(const DatabaseManifest& manifest,
                                  const SplitSpec& split, ImageStore& store,
                                  int batch_pairs, int duplication, Rng& rng) {
  PRIQA_REQUIRE(batch_pairs >= 1 && duplication >= 1, ErrorCategory::config,
                "batch_pairs and duplication must be >= 1");
  std::vector<int> pool = records_with_refs(manifest, split.train_refs);
  PRIQA_REQUIRE(!pool.empty(), ErrorCategory::size,
                "training split contains no records");

  TrainingBatch batch;
  batch.pairs = batch_pairs;
  batch.duplication = duplication;
  batch.labels.resize(batch_pairs);

  std::vector<int> chosen;
  if (static_cast<int>(pool.size()) >= batch_pairs) {
    rng.shuffle(pool);
    chosen.assign(pool.begin(), pool.begin() + batch_pairs);
  } else {
    for (int i = 0; i < batch_pairs; ++i)
      chosen.push_back(pool[static_cast<std::size_t>(rng.uniform_int(pool.size()))]);
  }

  for (int g = 0; g < batch_pairs; ++g) {
    const int rec_idx = chosen[static_cast<std::size_t>(g)];
    const ImageRecord& rec = manifest.records[static_cast<std::size_t>(rec_idx)];
    const Image& dist = store.get(manifest.distorted_path(rec));
    const Image& ref = store.get(manifest.reference_path(rec));
    PRIQA_REQUIRE(ref.height == dist.height && ref.width == dist.width,
                  ErrorCategory::alignment,
                  "reference/distorted size mismatch for " + rec.image_id);
    PRIQA_REQUIRE(dist.height >= kPatchSize && dist.width >= kPatchSize,
                  ErrorCategory::size, "image smaller than a patch: " + rec.image_id);
    batch.record_indices.push_back(rec_idx);
    batch.image_ids.push_back(rec.image_id);
    batch.labels(g) = rec.dmos;
    for (int d = 0; d < duplication; ++d) {
      const auto y0 = static_cast<Eigen::Index>(
          rng.uniform_int(static_cast<std::size_t>(dist.height - kPatchSize + 1)));
      const auto x0 = static_cast<Eigen::Index>(
          rng.uniform_int(static_cast<std::size_t>(dist.width - kPatchSize + 1)));
      batch.ref_patches.push_back(crop_patch_at(ref, y0, x0));
      batch.dist_patches.push_back(crop_patch_at(dist, y0, x0));
      batch.offsets.emplace_back(y0, x0);
      batch.group_of.push_back(g);
    }
  }
  return batch;
}

}  // namespace priqa
