// Command-line entry point: corpus generation, training, translation,
// evaluation, latency benchmarking, and the back-translation ablation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "dagnmt/config.hpp"
#include "dagnmt/dag_objective.hpp"
#include "dagnmt/decoding.hpp"
#include "dagnmt/eval.hpp"
#include "dagnmt/train.hpp"

using namespace dagnmt;

namespace {

int verbosity() {
  const char* env = std::getenv("DAGNMT_LOG");
  if (env == nullptr) return 1;
  const std::string v(env);
  if (v == "quiet" || v == "0") return 0;
  if (v == "debug" || v == "2") return 2;
  return 1;
}

int parse_lang_tag(const std::string& tag, int n_languages) {
  if (tag.size() >= 2 && tag[0] == 'l') {
    try {
      const int id = std::stoi(tag.substr(1));
      if (id >= 0 && id < n_languages) return id;
    } catch (const std::exception&) {
    }
  }
  std::string known;
  for (int l = 0; l < n_languages; ++l) known += (l ? ", l" : "l") + std::to_string(l);
  throw ConfigError("unknown language tag '" + tag + "'; known languages: " + known);
}

ModelConfig model_config_for(const RunConfig& cfg, const Corpus& corpus) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = corpus.vocab.size();
  mc.n_languages = corpus.spec.n_languages;
  return mc;
}

std::vector<NgramLM> build_lms(const Corpus& corpus, const DecodeSettings& decode) {
  return train_language_models(corpus, decode.lm_order, decode.lm_addk);
}

TranslateOptions translate_options(const RunConfig& cfg, const Corpus& corpus,
                                   const std::string& method,
                                   const std::vector<NgramLM>* lms) {
  TranslateOptions opts;
  opts.kind = parse_decoder(method);
  opts.beam.beam_width = cfg.decode.beam_width;
  opts.beam.lm_weight = cfg.decode.lm_weight;
  opts.beam.len_alpha = cfg.decode.len_alpha;
  opts.collapse_repeats = cfg.decode.collapse_repeats;
  opts.special_boundary = kNumSpecials + corpus.spec.n_languages;
  opts.lms = lms;
  opts.ar_extra_len = cfg.bench.ar_extra_len;
  opts.ar_min_len_ratio = cfg.bench.ar_min_len_ratio;
  return opts;
}

int cmd_gen_corpus(const RunConfig& cfg, bool force) {
  cfg.validate();
  Corpus corpus = gen_corpus(cfg.data);
  save_corpus(corpus, cfg.paths.data_dir, force);
  std::cout << "corpus written to " << cfg.paths.data_dir << "\n";
  std::cout << "languages: " << corpus.spec.n_languages << ", hub: l" << corpus.spec.hub << "\n";
  std::cout << "supervised directions:";
  for (auto [a, b] : corpus.graph.edges()) std::cout << " l" << a << "->l" << b;
  std::cout << "\nzero-shot directions (test only):";
  for (const ParallelData& d : corpus.test)
    if (!corpus.graph.has(d.l_src, d.l_tgt))
      std::cout << " l" << d.l_src << "->l" << d.l_tgt;
  std::cout << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& resume, bool dry_run) {
  cfg.validate();
  if (dry_run) {
    std::cout << "config ok\n";
    if (verbosity() >= 2) cfg.dump(std::cout);
    return 0;
  }
  Corpus corpus = load_corpus(cfg.paths.data_dir);
  Model model(model_config_for(cfg, corpus));
  if (verbosity() >= 1)
    std::cerr << "training " << cfg.train.total_updates << " updates, bt mode "
              << bt_mode_str(cfg.bt.mode) << "\n";
  TrainResult result = train(model, corpus, cfg.bt, cfg.train, cfg.paths.out_dir, resume);
  std::vector<NgramLM> lms = build_lms(corpus, cfg.decode);
  for (size_t l = 0; l < lms.size(); ++l)
    lms[l].save(cfg.paths.out_dir + "/lm.l" + std::to_string(l) + ".txt");
  std::cout << "finished " << cfg.train.total_updates << " updates; "
            << result.checkpoints.size() << " checkpoints; averaged model at "
            << result.averaged_path << "\n";
  if (!result.checkpoints.empty())
    std::cout << "best validation bleu "
              << std::max_element(result.checkpoints.begin(), result.checkpoints.end(),
                                  [](const auto& a, const auto& b) {
                                    return a.val_bleu < b.val_bleu;
                                  })
                     ->val_bleu
              << "\n";
  return 0;
}

int cmd_translate(const RunConfig& cfg, const std::string& model_path, const std::string& input,
                  const std::string& output, const std::string& src_tag,
                  const std::string& tgt_tag, const std::string& method) {
  cfg.validate();
  Corpus corpus = load_corpus(cfg.paths.data_dir);
  parse_lang_tag(src_tag, corpus.spec.n_languages);  // validates; tag travels in the encoder
  const int l_tgt = parse_lang_tag(tgt_tag, corpus.spec.n_languages);
  Model model = load_checkpoint(model_path);

  std::vector<NgramLM> lms;
  if (method == "ngram-beam") lms = build_lms(corpus, cfg.decode);
  TranslateOptions opts =
      translate_options(cfg, corpus, method, method == "ngram-beam" ? &lms : nullptr);

  std::ifstream is(input);
  if (!is) throw std::runtime_error("translate: cannot open input " + input);
  std::ofstream os(output, std::ios::trunc);
  if (!os) throw std::runtime_error("translate: cannot open output " + output);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<int> ids = corpus.vocab.encode(line);
    if (ids.empty()) {
      os << "\n";
      continue;
    }
    os << corpus.vocab.decode(translate_one(model, ids, l_tgt, opts)) << "\n";
  }
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& model_path,
                 const std::string& report_path) {
  cfg.validate();
  Corpus corpus = load_corpus(cfg.paths.data_dir);
  Model model = load_checkpoint(model_path);
  std::vector<NgramLM> lms;
  if (cfg.decode.method == "ngram-beam") lms = build_lms(corpus, cfg.decode);
  TranslateOptions opts = translate_options(
      cfg, corpus, cfg.decode.method, cfg.decode.method == "ngram-beam" ? &lms : nullptr);
  EvalReport report = evaluate_model(model, corpus, opts);
  report.save_json(report_path);
  std::cout << "supervised avg bleu " << report.supervised_avg << ", zero-shot avg bleu "
            << report.zero_shot_avg << "\n";
  std::cout << "report written to " << report_path << "\n";
  return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& model_path,
              const std::string& report_path) {
  cfg.validate();
  if (cfg.bench.batch_size != 1)
    throw ConfigError("bench: batch size must be 1, got " +
                      std::to_string(cfg.bench.batch_size));
  Corpus corpus = load_corpus(cfg.paths.data_dir);
  Model model = load_checkpoint(model_path);
  std::vector<NgramLM> lms = build_lms(corpus, cfg.decode);

  // first supervised test direction provides the sentences
  const ParallelData* dir = nullptr;
  for (const ParallelData& d : corpus.test)
    if (corpus.graph.has(d.l_src, d.l_tgt)) {
      dir = &d;
      break;
    }
  if (dir == nullptr) throw std::runtime_error("bench: no supervised test direction");
  std::vector<std::vector<int>> xs(
      dir->src.begin(),
      dir->src.begin() + std::min<size_t>(dir->src.size(),
                                          static_cast<size_t>(cfg.bench.max_sentences)));

  nlohmann::json decoders = nlohmann::json::array();
  double ar_mean = 0.0;
  struct Row {
    std::string name;
    LatencyStats stats;
  };
  std::vector<Row> rows;
  for (const std::string& name : {std::string("ar-greedy"), std::string("lookahead"),
                                  std::string("ngram-beam")}) {
    TranslateOptions opts = translate_options(cfg, corpus, name, &lms);
    LatencyStats stats = bench_latency(model, xs, dir->l_tgt, opts, cfg.bench.warmup);
    if (name == "ar-greedy") ar_mean = stats.mean_ms;
    rows.push_back({name, stats});
  }
  std::cout << "latency over " << xs.size() << " sentences, direction l" << dir->l_src << "->l"
            << dir->l_tgt << ", batch size 1\n";
  for (const Row& r : rows) {
    const double speedup = r.stats.mean_ms > 0 ? ar_mean / r.stats.mean_ms : 0.0;
    std::cout << "  " << r.name << ": mean " << r.stats.mean_ms << " ms, p50 " << r.stats.p50_ms
              << " ms, p95 " << r.stats.p95_ms << " ms, speedup " << speedup << "x\n";
    decoders.push_back({{"decoder", r.name},
                        {"mean_ms", r.stats.mean_ms},
                        {"p50_ms", r.stats.p50_ms},
                        {"p95_ms", r.stats.p95_ms},
                        {"speedup_vs_ar", speedup}});
  }
  nlohmann::json j{{"schema", "dagnmt-bench-report-v1"},
                   {"batch_size", 1},
                   {"sentences", xs.size()},
                   {"direction", "l" + std::to_string(dir->l_src) + "-l" +
                                     std::to_string(dir->l_tgt)},
                   {"decoders", decoders}};
  std::ofstream os(report_path, std::ios::trunc);
  if (!os) throw std::runtime_error("bench: cannot write " + report_path);
  os << j.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& report_path) {
  cfg.validate();
  Corpus corpus = load_corpus(cfg.paths.data_dir);
  std::vector<NgramLM> lms;
  if (cfg.decode.method == "ngram-beam") lms = build_lms(corpus, cfg.decode);
  TranslateOptions opts = translate_options(
      cfg, corpus, cfg.decode.method, cfg.decode.method == "ngram-beam" ? &lms : nullptr);

  nlohmann::json rows = nlohmann::json::array();
  std::cout << "mode        supervised   zero-shot\n";
  for (BtMode mode : {BtMode::PivotBT, BtMode::RandNoPivot, BtMode::SrcNoPivot, BtMode::Off}) {
    RunConfig variant = cfg;
    variant.bt.mode = mode;
    Model model(model_config_for(variant, corpus));
    const std::string out_dir = cfg.paths.out_dir + "/" + bt_mode_str(mode);
    if (verbosity() >= 1) std::cerr << "ablation variant " << bt_mode_str(mode) << "\n";
    train(model, corpus, variant.bt, variant.train, out_dir);
    Model averaged = load_checkpoint(out_dir + "/model_avg.ckpt");
    EvalReport report = evaluate_model(averaged, corpus, opts);
    rows.push_back({{"mode", bt_mode_str(mode)},
                    {"supervised", report.supervised_avg},
                    {"zero_shot", report.zero_shot_avg}});
    std::printf("%-11s %10.2f %11.2f\n", bt_mode_str(mode).c_str(), report.supervised_avg,
                report.zero_shot_avg);
  }
  nlohmann::json j{{"schema", "dagnmt-ablation-report-v1"}, {"rows", rows}};
  std::ofstream os(report_path, std::ios::trunc);
  if (!os) throw std::runtime_error("ablate: cannot write " + report_path);
  os << j.dump(2) << "\n";
  std::cout << "report written to " << report_path << "\n";
  return 0;
}

RunConfig assemble_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
  RunConfig cfg = config_path.empty() ? RunConfig::defaults() : RunConfig::load(config_path);
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + kv + "' must look like section.key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"non-autoregressive multilingual translation testbed"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "configuration file (sectioned key=value)");
  app.add_option("--set", overrides, "override a config key, e.g. --set train.seed=7");

  // every config key is also a direct flag: --train.seed 7
  std::map<std::string, std::string> direct;
  for (const std::string& key : RunConfig::known_keys())
    app.add_option("--" + key, direct[key])->group("config overrides");

  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic multilingual corpus");
  bool force = false;
  gen->add_flag("--force", force, "overwrite a non-empty data directory");

  auto* tr = app.add_subcommand("train", "train a model on the generated corpus");
  std::string resume;
  bool dry_run = false;
  tr->add_option("--resume", resume, "checkpoint to resume from");
  tr->add_flag("--dry-run", dry_run, "validate the configuration and exit");

  auto* trans = app.add_subcommand("translate", "translate a file line by line");
  std::string model_path, input_path, output_path, src_tag, tgt_tag;
  std::string decode_method = "lookahead";
  trans->add_option("--model", model_path, "model checkpoint")->required();
  trans->add_option("--input", input_path, "input file, one sentence per line")->required();
  trans->add_option("--output", output_path, "output file")->required();
  trans->add_option("--src", src_tag, "source language tag, e.g. l0")->required();
  trans->add_option("--tgt", tgt_tag, "target language tag, e.g. l1")->required();
  trans->add_option("--decode", decode_method, "lookahead | ngram-beam");

  auto* ev = app.add_subcommand("evaluate", "score the test split and write a report");
  std::string eval_model, eval_report = "eval.json";
  ev->add_option("--model", eval_model, "model checkpoint")->required();
  ev->add_option("--report", eval_report, "report path");

  auto* bench = app.add_subcommand("bench", "latency benchmark at batch size one");
  std::string bench_model, bench_report = "bench.json";
  bench->add_option("--model", bench_model, "model checkpoint")->required();
  bench->add_option("--report", bench_report, "report path");

  auto* abl = app.add_subcommand("ablate", "train and evaluate all back-translation variants");
  std::string abl_report = "ablation.json";
  abl->add_option("--report", abl_report, "report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = assemble_config(config_path, overrides);
    for (const auto& [key, value] : direct)
      if (app.count("--" + key) > 0) cfg.set(key, value);
    if (gen->parsed()) return cmd_gen_corpus(cfg, force);
    if (tr->parsed()) return cmd_train(cfg, resume, dry_run);
    if (trans->parsed())
      return cmd_translate(cfg, model_path, input_path, output_path, src_tag, tgt_tag,
                           decode_method);
    if (ev->parsed()) return cmd_evaluate(cfg, eval_model, eval_report);
    if (bench->parsed()) return cmd_bench(cfg, bench_model, bench_report);
    if (abl->parsed()) return cmd_ablate(cfg, abl_report);
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
