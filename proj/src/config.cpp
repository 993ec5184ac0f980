#include "priqa/config.hpp"

#include <fstream>
#include <sstream>

namespace priqa {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(value, &pos);
    PRIQA_REQUIRE(pos == value.size(), ErrorCategory::config, "trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCategory::config, "config key '" + key + "': '" + value +
                                    "' is not an integer");
  }
}

double to_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    PRIQA_REQUIRE(pos == value.size(), ErrorCategory::config, "trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCategory::config, "config key '" + key + "': '" + value +
                                    "' is not a number");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  fail(ErrorCategory::config, "config key '" + key + "': '" + value +
                                  "' is not a boolean");
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_int(key, trim(item)));
  PRIQA_REQUIRE(!out.empty(), ErrorCategory::config,
                "config key '" + key + "': empty list");
  return out;
}

std::string join(const std::vector<int>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i)
    s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::string format_real(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "database") database = value;
  else if (key == "data_root") data_root = value;
  else if (key == "feature_dim") feature_dim = to_int(key, value);
  else if (key == "conv_channels") conv_channels = to_int_list(key, value);
  else if (key == "inn_blocks") inn_blocks = to_int(key, value);
  else if (key == "inn_subnet_width") inn_subnet_width = to_int(key, value);
  else if (key == "gru_hidden") gru_hidden = to_int(key, value);
  else if (key == "learning_rate") learning_rate = to_real(key, value);
  else if (key == "weight_decay") weight_decay = to_real(key, value);
  else if (key == "batch_pairs") batch_pairs = to_int(key, value);
  else if (key == "duplication") duplication = to_int(key, value);
  else if (key == "max_epochs") max_epochs = to_int(key, value);
  else if (key == "eval_every") eval_every = to_int(key, value);
  else if (key == "lambda") lambda = to_real(key, value);
  else if (key == "margin_alpha") margin_alpha = to_real(key, value);
  else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "aggregation") { agg_kind_from_string(value); aggregation = value; }
  else if (key == "use_pr") use_pr = to_bool(key, value);
  else if (key == "use_inn") use_inn = to_bool(key, value);
  else if (key == "use_triplet") use_triplet = to_bool(key, value);
  else if (key == "chunk_groups") chunk_groups = to_int(key, value);
  else fail(ErrorCategory::config, "unknown config key '" + key + "'");
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  PRIQA_REQUIRE(in.good(), ErrorCategory::config,
                "cannot read config file " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    PRIQA_REQUIRE(eq != std::string::npos, ErrorCategory::config,
                  "config line " + std::to_string(line_no) +
                      " is not 'key = value': " + line);
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string RunConfig::serialized() const {
  std::ostringstream out;
  out << "database = " << database << "\n";
  out << "data_root = " << data_root << "\n";
  out << "feature_dim = " << feature_dim << "\n";
  out << "conv_channels = " << join(conv_channels) << "\n";
  out << "inn_blocks = " << inn_blocks << "\n";
  out << "inn_subnet_width = " << inn_subnet_width << "\n";
  out << "gru_hidden = " << gru_hidden << "\n";
  out << "learning_rate = " << format_real(learning_rate) << "\n";
  out << "weight_decay = " << format_real(weight_decay) << "\n";
  out << "batch_pairs = " << batch_pairs << "\n";
  out << "duplication = " << duplication << "\n";
  out << "max_epochs = " << max_epochs << "\n";
  out << "eval_every = " << eval_every << "\n";
  out << "lambda = " << format_real(lambda) << "\n";
  out << "margin_alpha = " << format_real(margin_alpha) << "\n";
  out << "seed = " << seed << "\n";
  out << "aggregation = " << aggregation << "\n";
  out << "use_pr = " << (use_pr ? "true" : "false") << "\n";
  out << "use_inn = " << (use_inn ? "true" : "false") << "\n";
  out << "use_triplet = " << (use_triplet ? "true" : "false") << "\n";
  out << "chunk_groups = " << chunk_groups << "\n";
  return out.str();
}

void RunConfig::save_file(const std::filesystem::path& path) const {
  std::ofstream out(path);
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "cannot write " + path.string());
  out << serialized();
  PRIQA_REQUIRE(out.good(), ErrorCategory::io, "write failed for " + path.string());
}

NetConfig RunConfig::net() const {
  NetConfig cfg;
  cfg.feature_dim = feature_dim;
  cfg.conv_channels = conv_channels;
  cfg.inn_blocks = inn_blocks;
  cfg.inn_subnet_width = inn_subnet_width;
  cfg.gru_hidden = gru_hidden;
  cfg.validate();
  return cfg;
}

Variant RunConfig::variant() const {
  Variant v;
  v.use_pr = use_pr;
  v.use_inn = use_inn;
  v.use_triplet = use_triplet;
  v.agg = agg_kind_from_string(aggregation);
  return v;
}

TrainConfig RunConfig::train() const {
  TrainConfig cfg;
  cfg.learning_rate = learning_rate;
  cfg.weight_decay = weight_decay;
  cfg.batch_pairs = batch_pairs;
  cfg.duplication = duplication;
  cfg.max_epochs = max_epochs;
  cfg.eval_every = eval_every;
  cfg.lambda = lambda;
  cfg.margin_alpha = margin_alpha;
  cfg.seed = seed;
  cfg.chunk_groups = chunk_groups;
  return cfg;
}

LossConfig RunConfig::loss() const {
  LossConfig cfg;
  cfg.lambda = lambda;
  cfg.margin_alpha = margin_alpha;
  return cfg;
}

DatabaseKind RunConfig::database_kind() const {
  PRIQA_REQUIRE(!database.empty(), ErrorCategory::config,
                "missing config key 'database'");
  return database_from_string(database);
}

void RunConfig::validate_for_training() const {
  PRIQA_REQUIRE(!database.empty(), ErrorCategory::config,
                "missing config key 'database'");
  PRIQA_REQUIRE(!data_root.empty(), ErrorCategory::config,
                "missing config key 'data_root'");
  PRIQA_REQUIRE(learning_rate >= 0 && weight_decay >= 0, ErrorCategory::config,
                "learning_rate and weight_decay must be >= 0");
  PRIQA_REQUIRE(batch_pairs >= 1 && duplication >= 1, ErrorCategory::config,
                "batch_pairs and duplication must be >= 1");
  PRIQA_REQUIRE(max_epochs >= 1 && eval_every >= 1, ErrorCategory::config,
                "max_epochs and eval_every must be >= 1");
  PRIQA_REQUIRE(lambda >= 0 && margin_alpha >= 0, ErrorCategory::config,
                "lambda and margin_alpha must be >= 0");
  PRIQA_REQUIRE(chunk_groups >= 1, ErrorCategory::config, "chunk_groups must be >= 1");
  net();       // validates network shape
  variant();   // validates aggregation name
}

}  // namespace priqa
