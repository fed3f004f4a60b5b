#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dagnmt/config.hpp"
#include "testutil.hpp"

using namespace dagnmt;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return "";
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

CmdResult run_cli(const std::string& args, const std::string& workdir) {
  const std::string out = workdir + "/stdout.txt";
  const std::string err = workdir + "/stderr.txt";
  const std::string cmd = "cd " + workdir + " && " + DAGNMT_BIN + " " + args + " > " + out +
                          " 2> " + err;
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.code = WEXITSTATUS(raw);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// config small enough for second-scale training in the smoke tests
void write_tiny_config(const std::string& path) {
  std::ofstream os(path);
  os << "[model]\n"
        "d_model = 16\n"
        "n_heads = 2\n"
        "n_enc_layers = 1\n"
        "n_dec_layers = 1\n"
        "ffn_width = 32\n"
        "max_positions = 32\n"
        "upsample_factor = 3\n"
        "[data]\n"
        "languages = 3\n"
        "concept_vocab = 8\n"
        "min_len = 2\n"
        "max_len = 4\n"
        "train_per_direction = 30\n"
        "valid_per_direction = 6\n"
        "test_per_direction = 6\n"
        "seed = 9\n"
        "[train]\n"
        "total_updates = 6\n"
        "warmup_updates = 2\n"
        "token_budget = 32\n"
        "checkpoint_interval = 3\n"
        "keep_best = 2\n"
        "log_every = 2\n"
        "[bt]\n"
        "mode = off\n"
        "[paths]\n"
        "data_dir = data\n"
        "out_dir = run\n";
}

}  // namespace

TEST_CASE("config: defaults, file parsing, overrides, unknown keys") {
  RunConfig cfg = RunConfig::defaults();
  CHECK(cfg.model.d_model == 64);
  CHECK(cfg.train.peak_lr == doctest::Approx(5e-4));
  CHECK(cfg.bt.lambda == doctest::Approx(0.5));

  testutil::TempDir dir("cfg");
  const std::string path = dir.str() + "/run.cfg";
  {
    std::ofstream os(path);
    os << "# comment\n[model]\nd_model = 32\nn_heads = 4\n\n[bt]\nmode = rand-lang\n"
          "lambda = 0.25\n[data]\norder_rules = identity,reverse,rotate:2\n";
  }
  RunConfig loaded = RunConfig::load(path);
  CHECK(loaded.model.d_model == 32);
  CHECK(loaded.model.n_heads == 4);
  CHECK(loaded.bt.mode == BtMode::RandNoPivot);
  CHECK(loaded.bt.lambda == doctest::Approx(0.25));
  REQUIRE(loaded.data.order_rules.size() == 3);
  CHECK(loaded.data.order_rules[1].rule == OrderRule::Reverse);
  CHECK(loaded.data.order_rules[2].amount == 2);

  loaded.set("train.total_updates", "123");
  CHECK(loaded.train.total_updates == 123);
  CHECK(loaded.get("train.total_updates") == "123");

  CHECK_THROWS_AS(loaded.set("model.bogus", "1"), ConfigError);
  CHECK_THROWS_AS(loaded.set("model.d_model", "abc"), ConfigError);
  CHECK_THROWS_AS(RunConfig::load(dir.str() + "/missing.cfg"), ConfigError);

  {
    std::ofstream os(path);
    os << "[model]\nunknown_key = 3\n";
  }
  CHECK_THROWS_WITH_AS(RunConfig::load(path), doctest::Contains("unknown key"), ConfigError);

  // every known key must round-trip through get
  for (const std::string& key : RunConfig::known_keys()) CHECK_NOTHROW(cfg.get(key));
}

TEST_CASE("config validation catches cross-field problems") {
  RunConfig cfg = RunConfig::defaults();
  cfg.data.n_languages = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = RunConfig::defaults();
  cfg.train.warmup_updates = cfg.train.total_updates + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = RunConfig::defaults();
  cfg.model.d_model = 63;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(RunConfig::defaults().validate());
}

TEST_CASE("config dump covers every key") {
  std::ostringstream os;
  RunConfig::defaults().dump(os);
  const std::string text = os.str();
  CHECK(text.find("[model]") != std::string::npos);
  CHECK(text.find("d_model = 64") != std::string::npos);
  CHECK(text.find("[paths]") != std::string::npos);
}

TEST_CASE("cli end to end: gen-corpus, train, translate, evaluate, exit codes") {
  testutil::TempDir dir("cli");
  write_tiny_config(dir.str() + "/run.cfg");

  // dry-run validates without side effects
  CmdResult dry = run_cli("--config run.cfg train --dry-run", dir.str());
  CHECK(dry.code == 0);
  CHECK(dry.out.find("config ok") != std::string::npos);

  // invalid config: exit 1
  CmdResult bad = run_cli("--config run.cfg --set data.languages=2 train --dry-run", dir.str());
  CHECK(bad.code == 1);
  CHECK(bad.err.find("error") != std::string::npos);

  // unknown key: exit 1
  CmdResult unk = run_cli("--config run.cfg --set model.nope=1 train --dry-run", dir.str());
  CHECK(unk.code == 1);

  // direct --section.key value overrides work and unknown flags are rejected
  CmdResult direct = run_cli(
      "--config run.cfg --train.total_updates 4 --train.warmup_updates 2 train --dry-run",
      dir.str());
  CHECK(direct.code == 0);
  CHECK(run_cli("--config run.cfg --train.bogus 4 train --dry-run", dir.str()).code == 1);

  // gen-corpus writes files and a summary
  CmdResult gen = run_cli("--config run.cfg gen-corpus", dir.str());
  CHECK(gen.code == 0);
  CHECK(gen.out.find("supervised directions") != std::string::npos);
  CHECK(slurp(dir.str() + "/data/manifest.txt").find("dagnmt-corpus") != std::string::npos);

  // refuses to overwrite without --force
  CmdResult again = run_cli("--config run.cfg gen-corpus", dir.str());
  CHECK(again.code == 2);
  CHECK(run_cli("--config run.cfg gen-corpus --force", dir.str()).code == 0);

  // deterministic regeneration: identical bytes
  CmdResult regen = run_cli(
      "--config run.cfg --set paths.data_dir=data2 gen-corpus", dir.str());
  CHECK(regen.code == 0);
  CHECK(slurp(dir.str() + "/data/train.l0-l1.l1") == slurp(dir.str() + "/data2/train.l0-l1.l1"));
  CHECK(slurp(dir.str() + "/data/vocab.txt") == slurp(dir.str() + "/data2/vocab.txt"));

  // train a few updates
  CmdResult tr = run_cli("--config run.cfg train", dir.str());
  CHECK(tr.code == 0);
  CHECK(tr.out.find("averaged model") != std::string::npos);
  CHECK(slurp(dir.str() + "/run/metrics.jsonl").find("\"loss\"") != std::string::npos);
  CHECK(!slurp(dir.str() + "/run/lm.l0.txt").empty());

  // translate: empty input gives empty output, exit 0
  { std::ofstream os(dir.str() + "/empty.txt"); }
  CmdResult t_empty = run_cli(
      "--config run.cfg translate --model run/model_avg.ckpt --input empty.txt "
      "--output empty.out --src l0 --tgt l1",
      dir.str());
  CHECK(t_empty.code == 0);
  CHECK(slurp(dir.str() + "/empty.out").empty());

  // translate twice: identical output; accepts a zero-shot pair
  {
    std::ofstream os(dir.str() + "/in.txt");
    os << slurp(dir.str() + "/data/test.l1-l2.l1");
  }
  CmdResult t1 = run_cli(
      "--config run.cfg translate --model run/model_avg.ckpt --input in.txt --output o1.txt "
      "--src l1 --tgt l2",
      dir.str());
  CmdResult t2 = run_cli(
      "--config run.cfg translate --model run/model_avg.ckpt --input in.txt --output o2.txt "
      "--src l1 --tgt l2 --decode ngram-beam",
      dir.str());
  CmdResult t3 = run_cli(
      "--config run.cfg translate --model run/model_avg.ckpt --input in.txt --output o3.txt "
      "--src l1 --tgt l2",
      dir.str());
  CHECK(t1.code == 0);
  CHECK(t2.code == 0);
  CHECK(slurp(dir.str() + "/o1.txt") == slurp(dir.str() + "/o3.txt"));

  // unknown language tag: exit 1 listing the known tags
  CmdResult t_bad = run_cli(
      "--config run.cfg translate --model run/model_avg.ckpt --input in.txt --output o4.txt "
      "--src l9 --tgt l1",
      dir.str());
  CHECK(t_bad.code == 1);
  CHECK(t_bad.err.find("known languages") != std::string::npos);
  CHECK(t_bad.err.find("l2") != std::string::npos);

  // evaluate writes a report
  CmdResult ev = run_cli(
      "--config run.cfg evaluate --model run/model_avg.ckpt --report eval.json", dir.str());
  CHECK(ev.code == 0);
  auto report = nlohmann::json::parse(slurp(dir.str() + "/eval.json"));
  CHECK(report["directions"].size() == 6);

  // missing checkpoint: runtime failure, exit 2
  CmdResult missing = run_cli(
      "--config run.cfg evaluate --model run/nope.ckpt --report x.json", dir.str());
  CHECK(missing.code == 2);

  // bench refuses batch size != 1
  CmdResult bench_bad = run_cli(
      "--config run.cfg --set bench.batch_size=2 bench --model run/model_avg.ckpt "
      "--report bench.json",
      dir.str());
  CHECK(bench_bad.code == 1);
  CHECK(bench_bad.err.find("batch size") != std::string::npos);

  // usage error: exit 1
  CHECK(run_cli("no-such-command", dir.str()).code == 1);
}

TEST_CASE("cli ablate emits exactly four rows with both columns") {
  testutil::TempDir dir("ablate");
  write_tiny_config(dir.str() + "/run.cfg");
  REQUIRE(run_cli("--config run.cfg gen-corpus", dir.str()).code == 0);
  CmdResult abl = run_cli(
      "--config run.cfg --set train.total_updates=4 --set train.checkpoint_interval=2 "
      "--set bt.warmup_frac=0.5 ablate --report ablation.json",
      dir.str());
  REQUIRE(abl.code == 0);
  auto j = nlohmann::json::parse(slurp(dir.str() + "/ablation.json"));
  REQUIRE(j["rows"].size() == 4);
  CHECK(j["rows"][0]["mode"] == "pivotbt");
  CHECK(j["rows"][1]["mode"] == "rand-lang");
  CHECK(j["rows"][2]["mode"] == "src-lang");
  CHECK(j["rows"][3]["mode"] == "off");
  for (const auto& row : j["rows"]) {
    CHECK(row.contains("supervised"));
    CHECK(row.contains("zero_shot"));
  }
}
