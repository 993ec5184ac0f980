#include "priqa/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace priqa {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'P', 'R', 'Q', 'A'};
constexpr std::uint32_t kVersion = 1;

json net_to_json(const NetConfig& n) {
  return json{{"feature_dim", n.feature_dim},
              {"conv_channels", n.conv_channels},
              {"inn_blocks", n.inn_blocks},
              {"inn_subnet_width", n.inn_subnet_width},
              {"gru_hidden", n.gru_hidden}};
}

NetConfig net_from_json(const json& j) {
  NetConfig n;
  n.feature_dim = j.at("feature_dim").get<int>();
  n.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  n.inn_blocks = j.at("inn_blocks").get<int>();
  n.inn_subnet_width = j.at("inn_subnet_width").get<int>();
  n.gru_hidden = j.at("gru_hidden").get<int>();
  return n;
}

json variant_to_json(const Variant& v) {
  return json{{"use_pr", v.use_pr},
              {"use_inn", v.use_inn},
              {"use_triplet", v.use_triplet},
              {"agg", to_string(v.agg)}};
}

Variant variant_from_json(const json& j) {
  Variant v;
  v.use_pr = j.at("use_pr").get<bool>();
  v.use_inn = j.at("use_inn").get<bool>();
  v.use_triplet = j.at("use_triplet").get<bool>();
  v.agg = agg_kind_from_string(j.at("agg").get<std::string>());
  return v;
}

void write_array(std::ofstream& out, const MatrixX<float>& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(m.size())));
}

void read_array(std::ifstream& in, MatrixX<float>& m) {
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(m.size())));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, PrfModel<float>& model,
                     const CheckpointMeta& meta, const AdamState* adam) {
  auto params = model.params();
  json header;
  header["version"] = kVersion;
  header["net"] = net_to_json(model.cfg);
  header["variant"] = variant_to_json(model.variant);
  header["epoch"] = meta.epoch;
  header["seed"] = meta.seed;
  header["database"] = meta.database;
  header["best_epoch"] = meta.best_epoch;
  header["best_val_srcc"] = meta.best_val_srcc;
  header["has_adam"] = adam != nullptr;
  if (adam) header["adam_t"] = adam->t;
  json plist = json::array();
  for (const auto* p : params) {
    plist.push_back(json{{"name", p->name},
                         {"rows", p->value.rows()},
                         {"cols", p->value.cols()}});
  }
  header["params"] = plist;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "cannot write " + path.string());
  out.write(kMagic, 4);
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(len));
  for (const auto* p : params) write_array(out, p->value);
  if (adam) {
    PRIQA_REQUIRE(adam->m.size() == params.size() && adam->v.size() == params.size(),
                  ErrorCategory::integrity, "adam state does not match parameter list");
    for (const auto& m : adam->m) write_array(out, m);
    for (const auto& v : adam->v) write_array(out, v);
  }
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "write failed for " + path.string());
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path,
                               PrfModel<float>& model, AdamState* adam) {
  std::ifstream in(path, std::ios::binary);
  PRIQA_REQUIRE(in.good(), ErrorCategory::io,
                "cannot read checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  PRIQA_REQUIRE(in.good() && std::memcmp(magic, kMagic, 4) == 0, ErrorCategory::integrity,
                path.string() + " is not a checkpoint file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  PRIQA_REQUIRE(version == kVersion, ErrorCategory::integrity,
                "unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  PRIQA_REQUIRE(in.good(), ErrorCategory::integrity, "truncated checkpoint header");

  json header = json::parse(header_str, nullptr, false);
  PRIQA_REQUIRE(!header.is_discarded(), ErrorCategory::integrity,
                "corrupt checkpoint header");

  CheckpointMeta meta;
  meta.net = net_from_json(header.at("net"));
  meta.variant = variant_from_json(header.at("variant"));
  meta.epoch = header.at("epoch").get<int>();
  meta.seed = header.at("seed").get<std::uint64_t>();
  meta.database = header.at("database").get<std::string>();
  meta.best_epoch = header.value("best_epoch", -1);
  meta.best_val_srcc = header.value("best_val_srcc", -2.0);
  meta.has_adam = header.value("has_adam", false);

  model.init(meta.net, meta.variant, /*seed=*/meta.seed);
  auto params = model.params();
  const json& plist = header.at("params");
  PRIQA_REQUIRE(plist.size() == params.size(), ErrorCategory::integrity,
                "checkpoint parameter count does not match the stored network config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& e = plist[i];
    PRIQA_REQUIRE(e.at("name").get<std::string>() == params[i]->name &&
                      e.at("rows").get<Eigen::Index>() == params[i]->value.rows() &&
                      e.at("cols").get<Eigen::Index>() == params[i]->value.cols(),
                  ErrorCategory::integrity,
                  "checkpoint parameter mismatch at '" + params[i]->name + "'");
    read_array(in, params[i]->value);
  }
  if (adam) {
    adam->reset(params);
    if (meta.has_adam) {
      adam->t = header.at("adam_t").get<std::int64_t>();
      for (auto& m : adam->m) read_array(in, m);
      for (auto& v : adam->v) read_array(in, v);
    }
  }
  PRIQA_REQUIRE(in.good(), ErrorCategory::integrity,
                "truncated checkpoint payload in " + path.string());
  return meta;
}

void write_best_marker(const std::filesystem::path& dir, const std::string& filename) {
  std::ofstream out(dir / "best.ckpt");
  PRIQA_REQUIRE(out.good(), ErrorCategory::io,
                "cannot write best-checkpoint marker in " + dir.string());
  out << filename << "\n";
}

std::filesystem::path read_best_marker(const std::filesystem::path& dir) {
  std::ifstream in(dir / "best.ckpt");
  PRIQA_REQUIRE(in.good(), ErrorCategory::io,
                "missing best-checkpoint marker in " + dir.string());
  std::string name;
  std::getline(in, name);
  PRIQA_REQUIRE(!name.empty(), ErrorCategory::integrity, "empty best-checkpoint marker");
  return dir / name;
}

}  // namespace priqa
