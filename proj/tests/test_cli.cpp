#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "priqa/config.hpp"

using namespace priqa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  if (!fs::exists(path)) return {};
  return testutil::read_text_file(path);
}

CliResult run_cli(const std::string& args) {
  static int invocation = 0;
  const fs::path dir = fs::current_path() / "tmp_cli_io";
  fs::create_directories(dir);
  const fs::path out_file = dir / ("out_" + std::to_string(invocation) + ".txt");
  const fs::path err_file = dir / ("err_" + std::to_string(invocation) + ".txt");
  ++invocation;

  const std::string cmd = std::string("\"") + PRIQA_CLI_PATH + "\" " + args +
                          " >\"" + out_file.string() + "\" 2>\"" +
                          err_file.string() + "\"";
  const int status = std::system(cmd.c_str());

  CliResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_file);
  result.err = slurp(err_file);
  return result;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// network, batch, and epoch settings that keep command tests fast
std::string tiny_sets() {
  return "--set feature_dim=8 --set conv_channels=4,8 --set inn_blocks=2"
         " --set inn_subnet_width=8 --set gru_hidden=4 --set batch_pairs=2"
         " --set duplication=2 --set chunk_groups=2 --set eval_every=1";
}

json first_json_line(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  return json::parse(line);
}

// One shared training run: a mini database plus a two-epoch tiny-model fit.
struct TrainedRun {
  fs::path root;
  fs::path out;
  CliResult result;
};

const TrainedRun& trained_run() {
  static const TrainedRun run = [] {
    TrainedRun r;
    r.root = testutil::scratch_dir("cli_train");
    testutil::write_mini_database(r.root, 5, 3);
    r.out = r.root / "run";
    r.result = run_cli("train --database kadid10k --data-root \"" +
                       r.root.string() + "\" --out \"" + r.out.string() +
                       "\" --seed 9 --max-epochs 2 " + tiny_sets());
    return r;
  }();
  return run;
}

}  // namespace

TEST_CASE("parse failures exit with code two and a usage line") {
  const CliResult bare = run_cli("");
  CHECK(bare.code == 2);
  CHECK(bare.err.rfind("error[usage]: ", 0) == 0);

  const CliResult bad_flag = run_cli("prepare --no-such-flag");
  CHECK(bad_flag.code == 2);
  CHECK(bad_flag.err.rfind("error[usage]: ", 0) == 0);
}

TEST_CASE("unknown database names are refused by name") {
  const CliResult r = run_cli("prepare --database tid2008 --data-root /tmp --out /tmp/x");
  CHECK(r.code == 1);
  CHECK(r.err ==
        "error[usage]: unknown database kind 'tid2008' "
        "(expected tid2013, live, csiq, or kadid10k)\n");
}

TEST_CASE("a missing config key is reported by key name") {
  const fs::path dir = testutil::scratch_dir("cli_missing_key");
  const CliResult no_db = run_cli("train --out \"" + (dir / "a").string() + "\"");
  CHECK(no_db.code == 1);
  CHECK(no_db.err == "error[config]: missing config key 'database'\n");

  const CliResult no_root = run_cli("train --database kadid10k --out \"" +
                                    (dir / "b").string() + "\"");
  CHECK(no_root.code == 1);
  CHECK(no_root.err == "error[config]: missing config key 'data_root'\n");
}

TEST_CASE("prepare summarizes a kadid-layout database") {
  const fs::path root = testutil::scratch_dir("cli_prepare");
  testutil::write_mini_database(root, 5, 3);
  const fs::path out = root / "prep";

  const CliResult r = run_cli("prepare --database kadid10k --data-root \"" +
                              root.string() + "\" --out \"" + out.string() + "\"");
  REQUIRE(r.code == 0);
  const std::vector<std::string> lines = lines_of(r.out);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "kadid10k: 15 distorted / 5 refs");
  CHECK(lines[1] == "full database ships 10125 distorted / 81 references");
  CHECK(lines[2] == "distortion types: 1, dmos range [15.5, 36.5]");
  CHECK(lines[3] == "wrote " + (out / "manifest.csv").string());

  const std::vector<std::string> csv =
      lines_of(testutil::read_text_file(out / "manifest.csv"));
  REQUIRE(csv.size() == 16);
  CHECK(csv[0] == "image_id,reference_id,distortion_type,distortion_level,raw_score,dmos");
  CHECK(csv[1].rfind("images/I01_01_01.png,I01,01,1,", 0) == 0);
}

TEST_CASE("prepare flags the excluded tid content") {
  const fs::path root = testutil::scratch_dir("cli_prepare_tid");
  {
    std::ofstream mos(root / "mos_with_names.txt");
    mos << "5.51429 i01_01_1.bmp\n";
    mos << "6.1 i02_10_4.bmp\n";
    mos << "4.0 i25_01_1.bmp\n";  // not part of the protocol
  }
  const CliResult r = run_cli("prepare --database tid2013 --data-root \"" +
                              root.string() + "\" --out \"" +
                              (root / "prep").string() + "\"");
  REQUIRE(r.code == 0);
  const std::vector<std::string> lines = lines_of(r.out);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "tid2013: 2 distorted / 2 refs (image 25 excluded)");
  CHECK(lines[1] == "full database ships 3000 distorted / 25 references");
}

TEST_CASE("train writes its artifacts and honors flag overrides") {
  const TrainedRun& run = trained_run();
  REQUIRE(run.result.code == 0);
  CHECK(run.result.out.find("trained 2 epochs") != std::string::npos);
  CHECK(run.result.out.find("best checkpoint: ") != std::string::npos);
  CHECK(run.result.out.find("log: ") != std::string::npos);

  CHECK(fs::exists(run.out / "config.txt"));
  CHECK(fs::exists(run.out / "split.txt"));
  CHECK(fs::exists(run.out / "training_log.jsonl"));
  CHECK(fs::exists(run.out / "kadid10k_9_2.ckpt"));
  CHECK(fs::exists(run.out / "best.ckpt"));

  // --seed and --max-epochs took effect and were logged
  const json start = first_json_line(run.out / "training_log.jsonl");
  CHECK(start.at("event") == "start");
  CHECK(start.at("seed").get<std::uint64_t>() == 9);
  CHECK(start.at("config").at("max_epochs") == 2);
  CHECK(start.at("config").at("batch_pairs") == 2);

  // the echoed config is loadable and reproduces the effective settings
  RunConfig echoed;
  echoed.load_file(run.out / "config.txt");
  CHECK(echoed.database == "kadid10k");
  CHECK(echoed.seed == 9);
  CHECK(echoed.max_epochs == 2);
  CHECK(echoed.feature_dim == 8);
  const std::vector<int> tiny_channels = {4, 8};
  CHECK(echoed.conv_channels == tiny_channels);

  // the saved split is loadable and covers all five references
  const SplitSpec split = load_split(run.out / "split.txt");
  CHECK(split.train_refs.size() +
            split.val_refs.size() +
            split.test_refs.size() ==
        5);
}

TEST_CASE("command line values beat config file values") {
  const fs::path dir = testutil::scratch_dir("cli_precedence");
  testutil::write_mini_database(dir, 5, 2);
  const fs::path cfg_file = dir / "run.cfg";
  {
    std::ofstream cfg(cfg_file);
    cfg << "database = kadid10k\n";
    cfg << "data_root = " << dir.string() << "\n";
    cfg << "seed = 3\n";
    cfg << "max_epochs = 5\n";
    cfg << "feature_dim = 8\n";
    cfg << "conv_channels = 4,8\n";
    cfg << "inn_blocks = 2\n";
    cfg << "inn_subnet_width = 8\n";
    cfg << "gru_hidden = 4\n";
    cfg << "batch_pairs = 2\n";
    cfg << "duplication = 2\n";
    cfg << "chunk_groups = 2\n";
  }
  const fs::path out = dir / "run";
  const CliResult r = run_cli("train --config \"" + cfg_file.string() +
                              "\" --seed 9 --max-epochs 1 --out \"" +
                              out.string() + "\"");
  REQUIRE(r.code == 0);
  const json start = first_json_line(out / "training_log.jsonl");
  CHECK(start.at("seed").get<std::uint64_t>() == 9);
  CHECK(start.at("config").at("max_epochs") == 1);

  RunConfig echoed;
  echoed.load_file(out / "config.txt");
  CHECK(echoed.seed == 9);
  CHECK(echoed.max_epochs == 1);
}

TEST_CASE("eval writes byte-identical csv on rerun") {
  const TrainedRun& run = trained_run();
  REQUIRE(run.result.code == 0);
  const std::string common = "eval --checkpoint \"" +
                             (run.out / "kadid10k_9_2.ckpt").string() +
                             "\" --database kadid10k --data-root \"" +
                             run.root.string() + "\" --split \"" +
                             (run.out / "split.txt").string() +
                             "\" --section test";

  const fs::path out_a = run.root / "eval_a";
  const fs::path out_b = run.root / "eval_b";
  const CliResult a = run_cli(common + " --out \"" + out_a.string() + "\"");
  REQUIRE(a.code == 0);
  CHECK(a.out.rfind("nr kadid10k test: srcc=", 0) == 0);
  CHECK(a.out.find("wrote " + (out_a / "eval.csv").string()) != std::string::npos);

  const CliResult b = run_cli(common + " --out \"" + out_b.string() + "\"");
  REQUIRE(b.code == 0);
  CHECK(testutil::read_text_file(out_a / "eval.csv") ==
        testutil::read_text_file(out_b / "eval.csv"));

  const std::vector<std::string> csv =
      lines_of(testutil::read_text_file(out_a / "eval.csv"));
  REQUIRE(!csv.empty());
  CHECK(csv[0] == "split,database,distortion_type,srcc,plcc,n");
  CHECK(csv[1].rfind("test,kadid10k,ALL,", 0) == 0);
}

TEST_CASE("eval enforces the reference-directory contract") {
  const TrainedRun& run = trained_run();
  REQUIRE(run.result.code == 0);
  const std::string base = "eval --checkpoint \"" +
                           (run.out / "kadid10k_9_2.ckpt").string() +
                           "\" --database kadid10k --data-root \"" +
                           run.root.string() + "\" --out \"" +
                           (run.root / "eval_fr").string() + "\"";

  const CliResult nr_with_refs =
      run_cli(base + " --reference-dir \"" + (run.root / "images").string() + "\"");
  CHECK(nr_with_refs.code == 1);
  CHECK(nr_with_refs.err ==
        "error[usage]: no-reference evaluation never reads references; "
        "--reference-dir is only valid with --fr\n");

  const CliResult fr_without_refs = run_cli(base + " --fr");
  CHECK(fr_without_refs.code == 1);
  CHECK(fr_without_refs.err ==
        "error[usage]: full-reference evaluation requires --reference-dir\n");

  const CliResult fr = run_cli(base + " --fr --reference-dir \"" +
                               (run.root / "images").string() + "\"");
  REQUIRE(fr.code == 0);
  CHECK(fr.out.rfind("fr kadid10k full: srcc=", 0) == 0);

  const CliResult bad_section = run_cli(base + " --split \"" +
                                        (run.out / "split.txt").string() +
                                        "\" --section bogus");
  CHECK(bad_section.code == 1);
  CHECK(bad_section.err ==
        "error[usage]: unknown --section 'bogus' (expected train, val, or test)\n");
}

TEST_CASE("ablate writes the six-row table") {
  const fs::path root = testutil::scratch_dir("cli_ablate");
  testutil::write_mini_database(root, 5, 2);
  const fs::path out = root / "ablation";
  const CliResult r = run_cli("ablate --database kadid10k --data-root \"" +
                              root.string() + "\" --out \"" + out.string() +
                              "\" --seed 1 --max-epochs 1 " + tiny_sets());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("wrote " + (out / "ablation.csv").string()) != std::string::npos);

  const std::vector<std::string> csv =
      lines_of(testutil::read_text_file(out / "ablation.csv"));
  REQUIRE(csv.size() == 7);
  CHECK(csv[0] == "row,use_pr,use_inn,use_triplet,aggregation,srcc,plcc");
  CHECK(csv[1].rfind("1,false,false,false,gru,", 0) == 0);
  CHECK(csv[2].rfind("2,true,false,true,gru,", 0) == 0);
  CHECK(csv[3].rfind("3,true,true,false,gru,", 0) == 0);
  CHECK(csv[4].rfind("4,true,true,true,mean,", 0) == 0);
  CHECK(csv[5].rfind("5,true,true,true,per_patch,", 0) == 0);
  CHECK(csv[6].rfind("6,true,true,true,gru,", 0) == 0);
  for (int row = 1; row <= 6; ++row)
    CHECK(fs::exists(out / ("row" + std::to_string(row))));
  CHECK(fs::exists(out / "split.txt"));
}

TEST_CASE("tsne embeds the four roles from a checkpoint") {
  const TrainedRun& run = trained_run();
  REQUIRE(run.result.code == 0);
  const fs::path out = run.root / "viz";
  const CliResult r = run_cli("tsne --checkpoint \"" +
                              (run.out / "kadid10k_9_2.ckpt").string() +
                              "\" --database kadid10k --data-root \"" +
                              run.root.string() + "\" --out \"" + out.string() +
                              "\" --pairs 4 --seed 2 --iterations 40 --perplexity 3");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("embedded 4 pairs x 4 roles") != std::string::npos);
  CHECK(fs::exists(out / "tsne_points.csv"));
  CHECK(fs::exists(out / "tsne_scatter.svg"));
}

TEST_CASE("cross-eval trains once and scores every target database") {
  const fs::path root = testutil::scratch_dir("cli_cross");
  testutil::write_mini_database(root, 5, 2);
  const fs::path out = root / "cross";
  const CliResult r = run_cli("cross-eval --database kadid10k --data-root \"" +
                              root.string() + "\" --test-db kadid10k:\"" +
                              root.string() + "\" --out \"" + out.string() +
                              "\" --seed 4 --max-epochs 1 " + tiny_sets());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("kadid10k: srcc=") != std::string::npos);
  CHECK(r.out.find("wrote " + (out / "cross_eval.csv").string()) != std::string::npos);
  const std::vector<std::string> csv =
      lines_of(testutil::read_text_file(out / "cross_eval.csv"));
  REQUIRE(csv.size() >= 2);
  CHECK(csv[0] == "split,database,distortion_type,srcc,plcc,n");
}
