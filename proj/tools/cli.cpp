// Copyright 2026 The bang Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "bang/bench.hpp"
#include "bang/checkpoint.hpp"
#include "bang/config.hpp"
#include "bang/data.hpp"
#include "bang/decoding.hpp"
#include "bang/log.hpp"
#include "bang/masking.hpp"
#include "bang/trainer.hpp"

namespace bang {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Flags mirroring RunConfig fields, registered on one subcommand.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  // With decode_mode_flag, --mode selects the decode mode instead of the
  // training mode.
  void attach(CLI::App* app, bool decode_mode_flag) {
    app->add_option("--config", config_path, "JSON run config file");
    for (const auto& f : config_fields()) {
      if (decode_mode_flag && f.name == "mode") continue;
      std::string names = "--" + kebab_case(f.name);
      if (f.name.find('_') != std::string::npos) names += ",--" + f.name;
      if (decode_mode_flag && f.name == "decode_mode") names += ",--mode";
      options.emplace_back(f.name, app->add_option(names, values[f.name], "RunConfig." + f.name));
    }
  }

  // Default < config file < flag.
  RunConfig resolve(const RunConfig& defaults = {}) const {
    RunConfig c = config_path.empty() ? defaults : load_run_config(config_path);
    for (const auto& [name, opt] : options)
      if (opt->count() > 0) apply_override(c, name, values.at(name));
    return c;
  }
};

LogSink line_sink(std::ostream& out) {
  return [&out](const ordered_json& j) { out << j.dump() << '\n' << std::flush; };
}

void log_effective(const RunConfig& c) { log_info("effective config " + to_json(c).dump()); }

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

ordered_json result_json(const std::string& id, DecodeMode mode, const DecodeResult& r, const Vocabulary& vocab,
                         bool timing) {
  ordered_json j;
  j["id"] = id;
  j["mode"] = to_string(mode);
  std::vector<std::string> toks;
  for (int t : r.tokens) toks.push_back(vocab.token(t));
  j["tokens"] = toks;
  j["detokenized"] = vocab.decode(r.tokens);
  j["score"] = r.score;
  j["forward_passes"] = r.forward_passes;
  j["latency_ms"] = timing ? r.latency_ms : 0.0;
  return j;
}

// Text of one scored line: a JSON object's first present key, else the raw line.
std::string line_text(const std::string& line, std::initializer_list<const char*> keys, std::string* mode) {
  const auto first = line.find_first_not_of(" \t");
  if (first == std::string::npos || line[first] != '{') return line;
  const json j = json::parse(line);
  if (mode && j.contains("mode") && j["mode"].is_string()) *mode = j["mode"].get<std::string>();
  for (const char* k : keys)
    if (j.contains(k) && j[k].is_string()) return j[k].get<std::string>();
  return "";
}

int cmd_train(const ConfigFlags& flags, bool resume, bool finetune, std::ostream& out) {
  const RunConfig c = flags.resolve();
  log_effective(c);
  const auto summary = finetune ? run_finetune(c, resume, line_sink(out)) : run_pretrain(c, resume, line_sink(out));
  log_info("finished at step " + std::to_string(summary.steps));
  return 0;
}

int cmd_decode(const ConfigFlags& flags, const std::string& checkpoint, const std::string& input, bool timing,
               std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint, false);
  RunConfig c = flags.resolve();
  c.model = ck.config;
  c.validate();
  log_effective(c);
  const DecodeOptions opt = c.decode_options();
  int failures = 0;
  const auto lines = read_lines(input);
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string line_no = std::to_string(i + 1);
    std::string id = line_no;
    try {
      std::string src = lines[i];
      const auto first = src.find_first_not_of(" \t");
      if (first != std::string::npos && src[first] == '{') {
        const json j = json::parse(src);
        if (j.contains("id")) id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        src = j.at("src").get<std::string>();
      }
      const std::vector<int> ids = ck.vocab.encode(src);
      if (ids.empty()) throw std::invalid_argument("empty source");
      if (static_cast<int>(ids.size()) > ck.config.max_positions)
        throw std::invalid_argument("source has " + std::to_string(ids.size()) + " tokens, max_positions is " +
                                    std::to_string(ck.config.max_positions));
      const DecodeResult r = decode(ids, ck.params, ck.config, opt);
      out << result_json(id, opt.mode, r, ck.vocab, timing).dump() << '\n';
    } catch (const std::exception& e) {
      ++failures;
      log_error("line " + line_no + ": " + e.what());
      ordered_json j;
      j["id"] = id;
      j["mode"] = to_string(opt.mode);
      j["error"] = "line " + line_no + ": " + e.what();
      out << j.dump() << '\n';
    }
  }
  out << std::flush;
  return failures == 0 ? 0 : 1;
}

int cmd_eval(const std::string& hyp_path, const std::string& ref_path, std::ostream& out) {
  const auto hyp_lines = read_lines(hyp_path);
  const auto ref_lines = read_lines(ref_path);
  if (hyp_lines.empty()) throw std::invalid_argument("empty corpus");
  std::string mode = "text";
  Interner interner;
  std::vector<Sequence> hyps, refs;
  for (const auto& l : hyp_lines) hyps.push_back(interner.intern(split_whitespace(line_text(l, {"detokenized", "tgt"}, &mode))));
  for (const auto& l : ref_lines) refs.push_back(interner.intern(split_whitespace(line_text(l, {"tgt", "detokenized"}, nullptr))));
  EvalReport report;
  report.revision = build_revision();
  report.config_hash = config_hash(to_json(RunConfig{}));
  ModeReport m;
  m.mode = mode;
  m.samples = static_cast<int>(hyps.size());
  m.metrics = score_all(hyps, refs);
  report.modes.push_back(std::move(m));
  out << to_json(report).dump(2) << '\n';
  std::cerr << format_table(report);
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct BenchArgs {
  std::string checkpoint;
  std::string data;
  std::string modes = "ar,nar,semi";
  int limit = 0;
  int warmup = 5;
  int reps = 50;
  bool no_latency = false;
  bool gate = false;
  std::string report_path;
  GateThresholds thresholds;
  // ablation
  bool ablation = false;
  std::string task = "sort";
  int payload = 32;
  int task_min_len = 4;
  int task_max_len = 8;
  int task_pairs = 5000;
  std::string seeds = "1,2,3";
  int pretrain_steps = 1200;
  int finetune_steps = 400;
  double pretrain_lr = 1e-3;
  double finetune_lr = 1e-3;
  int ablation_warmup = 100;
  int corpus_docs = 2000;
  int eval_samples = 200;
  std::string csv_path;
  double gate_margin = 3.0;
};

int cmd_ablation(const ConfigFlags& flags, const BenchArgs& a, std::ostream& out) {
  AblationOptions o;
  RunConfig defaults;
  defaults.model = o.model;
  const RunConfig c = flags.resolve(defaults);
  o.task = SynthOptions{parse_synth_kind(a.task), a.payload, a.task_min_len, a.task_max_len, a.task_pairs,
                        c.model.seed, c.model.max_positions};
  o.model = c.model;
  o.seeds.clear();
  for (const auto& s : split_list(a.seeds)) o.seeds.push_back(std::stoull(s));
  o.pretrain_steps = {0, a.pretrain_steps, a.pretrain_steps, a.pretrain_steps};
  o.finetune_steps = {a.finetune_steps, a.finetune_steps, a.finetune_steps, a.finetune_steps};
  o.batch_size = c.batch_size;
  o.pretrain_lr = a.pretrain_lr;
  o.finetune_lr = a.finetune_lr;
  o.warmup_steps = a.ablation_warmup;
  o.smoothing = c.smoothing;
  o.corpus_docs = a.corpus_docs;
  o.span.max_span = c.effective_max_span();
  o.eval_samples = a.eval_samples;
  log_effective(c);
  const AblationResult r = ablation_run(o, nullptr);
  for (const auto& row : r.rows) {
    ordered_json j;
    j["arm"] = row.arm;
    j["seed"] = row.seed;
    j["pretrain_steps"] = row.pretrain_steps;
    j["finetune_steps"] = row.finetune_steps;
    j["metrics"] = row.metrics;
    out << j.dump() << '\n';
  }
  if (!a.csv_path.empty()) write_file_atomic(a.csv_path, r.to_csv());
  std::cerr << r.table();
  if (!a.gate) return 0;
  const double d = r.arm("d_bang_pretrain").metrics.at("BLEU-4").first;
  const double base = r.arm("a_no_pretrain").metrics.at("BLEU-4").first;
  const bool pass = d >= base + a.gate_margin;
  std::cerr << (pass ? "PASS" : "FAIL") << " ablation: BLEU-4 d " << d << " >= a " << base << " + " << a.gate_margin
            << '\n';
  return pass ? 0 : 1;
}

int cmd_bench(const ConfigFlags& flags, const BenchArgs& a, std::ostream& out) {
  if (a.ablation) return cmd_ablation(flags, a, out);
  if (a.checkpoint.empty() || a.data.empty()) throw std::invalid_argument("bench: --checkpoint and --data are required");
  const Checkpoint ck = load_checkpoint(a.checkpoint, false);
  RunConfig c = flags.resolve();
  c.model = ck.config;
  c.validate();
  log_effective(c);
  auto pairs = encode_pairs(read_dataset(a.data), ck.vocab);
  if (a.limit > 0 && static_cast<int>(pairs.size()) > a.limit) pairs.resize(a.limit);
  EvalReport report;
  report.config_hash = config_hash(ck.run_config.is_null() ? to_json(c) : ck.run_config);
  report.seed = ck.config.seed;
  report.revision = build_revision();
  DecodeOptions base = c.decode_options();
  for (const auto& mode : split_list(a.modes)) {
    DecodeOptions o = base;
    o.mode = parse_decode_mode(mode);
    report.modes.push_back(evaluate_mode(pairs, ck.params, ck.config, o, LatencyOptions{!a.no_latency, a.warmup, a.reps}));
    log_info("bench " + mode + " done");
  }
  const std::string text = to_json(report).dump(2);
  out << text << '\n';
  if (!a.report_path.empty()) write_file_atomic(a.report_path, text + "\n");
  std::cerr << format_table(report);
  if (!a.gate) return 0;
  bool ok = true;
  for (const auto& g : gate_checks(report, base, a.thresholds)) {
    std::cerr << (g.pass ? "PASS " : "FAIL ") << g.name << ": " << g.detail << '\n';
    ok = ok && g.pass;
  }
  return ok ? 0 : 1;
}

int cmd_mask_render(int T, int streams, const std::string& format, const std::string& out_path, std::ostream& out) {
  const StreamLayout layout(T, streams);
  std::string text;
  if (format == "svg") {
    text = render_mask_svg(layout);
  } else if (format == "text") {
    text = render_mask_text(layout);
  } else {
    throw std::invalid_argument("mask-render: --format must be svg or text");
  }
  if (out_path.empty()) {
    out << text;
  } else {
    write_file_atomic(out_path, text);
  }
  return 0;
}

struct SynthArgs {
  std::string task = "copy";
  int payload = 32;
  int min_len = 4;
  int max_len = 12;
  int pairs = 5000;
  uint64_t seed = 1;
  int max_positions = 128;
  std::string out_dir;
  int corpus_docs = 0;
  int pairs_per_doc = 4;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const SynthOptions o{parse_synth_kind(a.task), a.payload, a.min_len, a.max_len, a.pairs, a.seed, a.max_positions};
  const SynthDataset ds = synth_task(o);
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  write_dataset(dir / "train.jsonl", to_text_pairs(ds.splits.train, ds.vocab));
  write_dataset(dir / "dev.jsonl", to_text_pairs(ds.splits.dev, ds.vocab));
  write_dataset(dir / "test.jsonl", to_text_pairs(ds.splits.test, ds.vocab));
  ds.vocab.save(dir / "vocab.txt");
  ordered_json j;
  j["train"] = ds.splits.train.size();
  j["dev"] = ds.splits.dev.size();
  j["test"] = ds.splits.test.size();
  if (a.corpus_docs > 0) {
    AblationOptions ao;
    ao.task = o;
    ao.corpus_docs = a.corpus_docs;
    ao.pairs_per_doc = a.pairs_per_doc;
    std::string text;
    for (const auto& line : ablation_corpus(ao, a.seed)) text += line + "\n";
    write_file_atomic(dir / "corpus.txt", text);
    j["corpus_docs"] = a.corpus_docs;
  }
  out << j.dump() << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"bang: cross-stream visible n-stream sequence-to-sequence toolkit"};
  app.require_subcommand(1);

  auto* pretrain = app.add_subcommand("pretrain", "span-masked pretraining on a text corpus");
  ConfigFlags pretrain_flags;
  pretrain_flags.attach(pretrain, false);
  bool pretrain_resume = false;
  pretrain->add_flag("--resume", pretrain_resume, "continue from the checkpoint in checkpoint_dir");

  auto* finetune = app.add_subcommand("finetune", "finetune on a JSON-lines dataset (mode ar, nar or multi)");
  ConfigFlags finetune_flags;
  finetune_flags.attach(finetune, false);
  bool finetune_resume = false;
  finetune->add_flag("--resume", finetune_resume, "continue from <checkpoint_dir>/last");

  auto* decode_cmd = app.add_subcommand("decode", "decode one source per input line");
  ConfigFlags decode_flags;
  decode_flags.attach(decode_cmd, true);
  std::string decode_checkpoint, decode_input;
  bool no_timing = false;
  decode_cmd->add_option("--checkpoint", decode_checkpoint, "checkpoint directory")->required();
  decode_cmd->add_option("--input", decode_input, "plain-text or JSON-lines sources")->required();
  decode_cmd->add_flag("--no-timing", no_timing, "write latency_ms as 0 for byte-comparable output");

  auto* eval = app.add_subcommand("eval", "score hypotheses against references");
  std::string hyp_path, ref_path;
  eval->add_option("--hyp", hyp_path, "decode output or plain text")->required();
  eval->add_option("--ref", ref_path, "dataset JSON lines or plain text")->required();

  auto* bench = app.add_subcommand("bench", "quality and latency report, or the pretraining ablation");
  ConfigFlags bench_flags;
  bench_flags.attach(bench, true);
  BenchArgs ba;
  bench->add_option("--checkpoint", ba.checkpoint, "checkpoint directory");
  bench->add_option("--data", ba.data, "JSON-lines test set");
  bench->add_option("--modes", ba.modes, "comma-separated decode modes");
  bench->add_option("--limit", ba.limit, "use at most this many pairs (0: all)");
  bench->add_option("--warmup", ba.warmup, "discarded latency runs");
  bench->add_option("--reps", ba.reps, "timed latency runs");
  bench->add_flag("--no-latency", ba.no_latency, "skip latency measurement");
  bench->add_flag("--gate", ba.gate, "exit 1 when a gated threshold fails");
  bench->add_option("--report", ba.report_path, "also write the JSON report here");
  bench->add_option("--gate-ar-em", ba.thresholds.ar_exact_match, "AR exact-match threshold");
  bench->add_option("--gate-nar-em", ba.thresholds.nar_exact_match, "NAR exact-match threshold");
  bench->add_option("--gate-semi-margin", ba.thresholds.semi_margin, "semi-NAR may trail NAR by this much");
  bench->add_flag("--ablation", ba.ablation, "run the pretraining-strategy ablation");
  bench->add_option("--task", ba.task, "ablation task: copy, reverse or sort");
  bench->add_option("--payload", ba.payload, "ablation payload vocabulary size");
  bench->add_option("--task-min-len", ba.task_min_len, "ablation minimum source length");
  bench->add_option("--task-max-len", ba.task_max_len, "ablation maximum source length");
  bench->add_option("--task-pairs", ba.task_pairs, "ablation dataset size");
  bench->add_option("--seeds", ba.seeds, "comma-separated ablation seeds");
  bench->add_option("--pretrain-steps", ba.pretrain_steps, "pretraining steps per arm (b, c, d)");
  bench->add_option("--finetune-steps", ba.finetune_steps, "NAR finetuning steps per arm");
  bench->add_option("--pretrain-lr", ba.pretrain_lr, "ablation pretraining peak lr");
  bench->add_option("--finetune-lr", ba.finetune_lr, "ablation finetuning peak lr");
  bench->add_option("--ablation-warmup", ba.ablation_warmup, "ablation warmup steps");
  bench->add_option("--corpus-docs", ba.corpus_docs, "ablation pretraining documents");
  bench->add_option("--eval-samples", ba.eval_samples, "ablation test pairs scored");
  bench->add_option("--csv", ba.csv_path, "write arm,seed,metric,value rows here");
  bench->add_option("--gate-margin", ba.gate_margin, "required BLEU-4 gain of arm d over arm a");

  auto* render = app.add_subcommand("mask-render", "draw the stream visibility mask");
  int render_t = 4, render_streams = 4;
  std::string render_format = "svg", render_out;
  render->add_option("--T", render_t, "target length")->required();
  render->add_option("--streams", render_streams, "predicting streams")->required();
  render->add_option("--format", render_format, "svg or text");
  render->add_option("--out", render_out, "output file (default stdout)");

  auto* synth = app.add_subcommand("synth", "write a synthetic copy/reverse/sort dataset");
  SynthArgs sa;
  synth->add_option("--task", sa.task, "copy, reverse or sort");
  synth->add_option("--payload", sa.payload, "payload vocabulary size");
  synth->add_option("--min-len", sa.min_len, "minimum source length");
  synth->add_option("--max-len", sa.max_len, "maximum source length");
  synth->add_option("--pairs", sa.pairs, "number of pairs");
  synth->add_option("--seed", sa.seed, "generator seed");
  synth->add_option("--max-positions", sa.max_positions, "model position limit");
  synth->add_option("--out-dir", sa.out_dir, "output directory")->required();
  synth->add_option("--corpus-docs", sa.corpus_docs, "also write a pretraining corpus.txt with this many lines");
  synth->add_option("--pairs-per-doc", sa.pairs_per_doc, "pairs concatenated per corpus line");

  std::vector<std::string> argv_store = {"bang"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*pretrain) return cmd_train(pretrain_flags, pretrain_resume, false, out);
    if (*finetune) return cmd_train(finetune_flags, finetune_resume, true, out);
    if (*decode_cmd) return cmd_decode(decode_flags, decode_checkpoint, decode_input, !no_timing, out);
    if (*eval) return cmd_eval(hyp_path, ref_path, out);
    if (*bench) return cmd_bench(bench_flags, ba, out);
    if (*render) return cmd_mask_render(render_t, render_streams, render_format, render_out, out);
    if (*synth) return cmd_synth(sa, out);
  } catch (const std::exception& e) {
    log_error(app.get_subcommands().front()->get_name() + ": " + e.what());
    return 1;
  }
  return 1;
}

}  // namespace bang
