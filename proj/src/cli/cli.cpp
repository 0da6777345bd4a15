// Copyright 2026 The promptopt Authors.
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

#include "promptopt/cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "promptopt/binary_io.hpp"
#include "promptopt/checkpoint.hpp"
#include "promptopt/dataset.hpp"
#include "promptopt/diagnostics.hpp"
#include "promptopt/engine.hpp"
#include "promptopt/errors.hpp"
#include "promptopt/experiment.hpp"
#include "promptopt/gradcheck.hpp"
#include "promptopt/inference.hpp"
#include "promptopt/pretrain.hpp"
#include "promptopt/prompt.hpp"
#include "promptopt/tasks.hpp"

namespace promptopt::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Records every option bound on a subcommand so the resolved values can be
// echoed into the run directory.
class OptionSet {
 public:
  explicit OptionSet(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    echo_.emplace_back([name, &var](json& j) { j[name] = var; });
    return app_->add_option("--" + name, var, help)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    echo_.emplace_back([name, &var](json& j) { j[name] = var; });
    return app_->add_flag("--" + name, var, help);
  }

  json resolved() const {
    json j = json::object();
    for (const auto& fn : echo_) fn(j);
    return j;
  }

  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> echo_;
};

// Fills options absent from the command line with values from a JSON object.
void apply_config_file(CLI::App* app, const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("config " + path + " must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "config") throw UsageError("config files cannot name another config file");
    CLI::Option* opt = app->get_option_no_throw("--" + key);
    if (!opt) throw UsageError("config " + path + ": unknown option '" + key + "'");
    if (opt->count() > 0) continue;
    auto to_text = [](const json& v) {
      return v.is_string() ? v.get<std::string>() : v.dump();
    };
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(to_text(v));
    } else {
      opt->add_result(to_text(value));
    }
    opt->run_callback();
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Output directory of one command run plus its console/log mirror.
class Run {
 public:
  Run(std::ostream& out, std::string command) : out_(out), command_(std::move(command)) {}

  void say(const std::string& line) {
    out_ << line << '\n';
    log_ += line + '\n';
  }

  bool has_dir() const { return !dir_.empty(); }
  const fs::path& dir() const { return dir_; }

  // Empty `out` means <env root or "runs">/<command>[-seed<seed>].
  void open(const std::string& out, bool force, const std::vector<std::string>& inputs,
            std::optional<std::uint64_t> seed, const json& resolved) {
    if (!out.empty()) {
      dir_ = out;
    } else {
      const char* root = std::getenv(kOutRootEnv);
      dir_ = fs::path(root && *root ? root : "runs") /
             (command_ + (seed ? "-seed" + std::to_string(*seed) : std::string()));
    }
    const fs::path abs_dir = fs::weakly_canonical(fs::absolute(dir_));
    for (const std::string& in : inputs) {
      if (in.empty()) continue;
      const fs::path abs_in = fs::weakly_canonical(fs::absolute(in));
      auto mismatch = std::mismatch(abs_dir.begin(), abs_dir.end(), abs_in.begin(), abs_in.end());
      if (mismatch.first == abs_dir.end())
        throw UsageError("input " + in + " lies inside the output directory " + dir_.string());
    }
    if (fs::exists(dir_) && !fs::is_empty(dir_)) {
      if (!force)
        throw UsageError("output directory " + dir_.string() +
                         " already exists; pass --force to replace it");
      fs::remove_all(dir_);
    }
    fs::create_directories(dir_);
    json cfg = resolved;
    cfg["command"] = command_;
    io::write_text_file(dir_ / "config.json", cfg.dump(2) + "\n");
    started_ = std::chrono::steady_clock::now();
    stamp_ = utc_timestamp();
  }

  void write(const std::string& name, const std::string& text) {
    if (has_dir()) io::write_text_file(dir_ / name, text);
  }

  // Timing lives only here so that every other file is reproducible.
  void finish() {
    if (!has_dir()) return;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    std::ostringstream os;
    os << log_ << "started " << stamp_ << "\nwall_seconds " << std::fixed
       << std::setprecision(3) << secs << '\n';
    io::write_text_file(dir_ / "log.txt", os.str());
  }

 private:
  std::ostream& out_;
  std::string command_;
  fs::path dir_;
  std::string log_;
  std::string stamp_;
  std::chrono::steady_clock::time_point started_;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// Shortest decimal text that parses back to exactly v.
std::string fmt_exact(double v) {
  for (int precision = 1; precision < 17; ++precision) {
    std::string t = fmt(v, precision);
    if (std::strtod(t.c_str(), nullptr) == v) return t;
  }
  return fmt(v, 17);
}

std::vector<std::string> read_lines(const std::string& path) {
  const std::string text = io::read_text_file(path);
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + '\n';
  return out;
}

struct PromptSource {
  std::string prompt;
  std::string prompt_file;
  std::string artifact;

  void bind(OptionSet& o, bool allow_artifact) {
    auto* p = o.add("prompt", prompt, "Prompt text to start from");
    auto* f = o.add("prompt-file", prompt_file, "File holding the prompt text");
    p->excludes(f);
    if (allow_artifact) {
      auto* a = o.add("artifact", artifact, "Optimized prompt artifact");
      a->excludes(p)->excludes(f);
    }
  }

  std::string text() const {
    if (!prompt_file.empty()) {
      std::string t = io::read_text_file(prompt_file);
      while (!t.empty() && (t.back() == '\n' || t.back() == '\r')) t.pop_back();
      return t;
    }
    return prompt;
  }

  PromptEmbedding load(const ModelCheckpoint& ck) const {
    if (!artifact.empty()) return load_artifact(artifact, &ck);
    const std::string t = text();
    if (t.empty()) throw UsageError("one of --prompt, --prompt-file or --artifact is required");
    return init_prompt(t, ck);
  }

  std::vector<std::string> paths() const { return {prompt_file, artifact}; }
};

json train_report_json(const TrainReport& r, const TrainConfig& cfg, const ModelCheckpoint& ck) {
  json j;
  j["checkpoint_hash"] = to_hex(ck.hash());
  j["learning_rate"] = cfg.learning_rate;
  j["seed"] = cfg.seed;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["train_examples"] = r.train_examples;
  j["val_examples"] = r.val_examples;
  j["validation_is_training_set"] = r.validation_is_training_set;
  j["initial_train_loss"] = r.initial_train_loss;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["best_epoch"] = r.best_epoch;
  j["stop_reason"] = to_string(r.stop_reason);
  return j;
}

std::string train_report_text(const TrainReport& r) {
  std::ostringstream os;
  os << "epoch  train_loss  val_loss\n";
  for (std::size_t e = 0; e < r.train_loss.size(); ++e)
    os << std::setw(5) << e + 1 << "  " << std::setw(10) << fmt(r.train_loss[e]) << "  "
       << std::setw(8) << fmt(r.val_loss[e]) << '\n';
  os << "best epoch: " << r.best_epoch << '\n'
     << "stop reason: " << to_string(r.stop_reason) << '\n'
     << "monitored set: " << (r.validation_is_training_set ? "training set" : "validation split")
     << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

struct CommonOut {
  std::string out;
  bool force = false;
  std::string config;

  void bind(OptionSet& o) {
    o.add("out", out, "Run directory (default: $" + std::string(kOutRootEnv) + "/<command>)");
    o.flag("force", force, "Replace an existing run directory");
    o.app()->add_option("--config", config, "JSON file of option values");
  }
};

struct TaskCmd {
  std::string name = "sentiment-toy";
  std::uint64_t seed = 1;
  tasks::TaskSizes sizes;
  CommonOut common;

  void bind(OptionSet& o) {
    o.add("name", name, "Task generator: sentiment-toy or arith-toy");
    o.add("seed", seed, "Generator seed");
    o.add("corpus-size", sizes.corpus, "Pretraining documents");
    o.add("train-size", sizes.train, "Training examples");
    o.add("test-size", sizes.test, "Test examples");
    o.add("stimuli-size", sizes.stimuli, "Probe stimuli per condition");
    common.bind(o);
  }

  void run(Run& run, const json& resolved) {
    const tasks::TaskBundle b = tasks::make_task(name, seed, sizes);
    run.open(common.out, common.force, {}, seed, resolved);
    run.write("corpus.txt", join_lines(b.corpus));
    run.write("train.jsonl", dataset_to_jsonl(b.train));
    run.write("test.jsonl", dataset_to_jsonl(b.test));
    run.write("stimuli_a.txt", join_lines(b.stimuli_a));
    run.write("stimuli_b.txt", join_lines(b.stimuli_b));
    run.write("prompt.txt", b.prompt + "\n");
    run.write("task.json",
              json{{"name", b.name}, {"prompt", b.prompt}, {"matcher", b.matcher}, {"seed", seed}}
                      .dump(2) +
                  "\n");
    run.say("task " + b.name + " written to " + run.dir().string());
    run.say("prompt: " + b.prompt);
    run.say("matcher: " + b.matcher);
  }
};

struct PretrainCmd {
  std::string corpus;
  std::string alphabet;
  ModelConfig model;
  PretrainConfig pre;
  CommonOut common;

  void bind(OptionSet& o) {
    o.add("corpus", corpus, "Text corpus, one document per line")->required();
    o.add("alphabet", alphabet, "Symbols of the vocabulary (default: bundled alphabet plus corpus)");
    o.add("d-model", model.d_model, "Model width");
    o.add("layers", model.layers, "Transformer blocks");
    o.add("heads", model.heads, "Attention heads");
    o.add("d-ff", model.d_ff, "Feed-forward width");
    o.add("max-seq", model.max_seq, "Context length");
    o.add("steps", pre.steps, "Optimizer steps");
    o.add("lr", pre.learning_rate, "Learning rate");
    o.add("batch-size", pre.batch_size, "Windows per step");
    o.add("seed", pre.seed, "Seed");
    common.bind(o);
  }

  void run(Run& run, const json& resolved) {
    const std::vector<std::string> docs = read_corpus(corpus);
    std::string symbols = alphabet;
    if (symbols.empty()) {
      symbols = tasks::alphabet();
      for (const std::string& cp : split_code_points(corpus_alphabet(docs)))
        if (symbols.find(cp) == std::string::npos) symbols += cp;
    }
    const Vocabulary vocab = Vocabulary::from_alphabet(symbols);
    const auto tokens = tokenize_corpus(docs, vocab);
    run.open(common.out, common.force, {corpus}, pre.seed, resolved);
    PretrainReport report;
    const ModelCheckpoint ck = pretrain_base(tokens, vocab, model, pre, &report, [&](int step, double loss) {
      if (step % 100 == 0) run.say("step " + std::to_string(step) + " loss " + fmt(loss));
    });
    save_checkpoint(ck, run.dir() / "model.ckpt");
    run.write("pretrain.json", json{{"initial_ce", report.initial_ce},
                                    {"final_ce", report.final_ce},
                                    {"steps", pre.steps},
                                    {"checkpoint_hash", to_hex(ck.hash())}}
                                       .dump(2) +
                                   "\n");
    run.say("initial per-token CE " + fmt(report.initial_ce));
    run.say("final per-token CE " + fmt(report.final_ce));
    run.say("checkpoint hash " + to_hex(ck.hash()));
  }
};

struct OptimizeCmd {
  std::string checkpoint, train, val, test, matcher = "exact";
  PromptSource prompt;
  TrainConfig cfg;
  int max_tokens = 64;
  CommonOut common;

  void bind(OptionSet& o) {
    o.add("checkpoint", checkpoint, "Frozen base model")->required();
    prompt.bind(o, false);
    o.add("train", train, "Training set (JSONL)")->required();
    o.add("val", val, "Validation set (JSONL); default: a seeded split of --train");
    o.add("test", test, "Test set scored before and after (JSONL)");
    o.add("lr", cfg.learning_rate, "Adam learning rate (> 0)");
    o.add("epochs", cfg.max_epochs, "Maximum epochs");
    o.add("patience", cfg.patience, "Early-stopping patience in epochs");
    o.add("seed", cfg.seed, "Seed for the split and example order");
    o.add("validation-fraction", cfg.validation_fraction, "Held-out share when --val is absent");
    o.add("matcher", matcher, "exact or delimiter:<marker>");
    o.add("max-tokens", max_tokens, "Generation budget for --test scoring");
    common.bind(o);
  }

  void run(Run& run, const json& resolved) {
    if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate))
      throw UsageError("--lr must be a finite value > 0");
    cfg.validate();
    const ModelCheckpoint ck = load_checkpoint(checkpoint);
    const Digest frozen = ck.hash();
    const PromptEmbedding p0 = prompt.load(ck);
    const auto train_set = load_dataset(train, ck.vocab());
    std::optional<std::vector<TrainingExample>> val_set, test_set;
    if (!val.empty()) val_set = load_dataset(val, ck.vocab());
    if (!test.empty()) test_set = load_dataset(test, ck.vocab());
    for (const auto& ex : train_set) check_example_fits(p0.length(), ex, ck);
    if (val_set)
      for (const auto& ex : *val_set) check_example_fits(p0.length(), ex, ck);
    const auto match = make_matcher(matcher);

    std::vector<std::string> inputs = {checkpoint, train, val, test};
    for (const auto& p : prompt.paths()) inputs.push_back(p);
    run.open(common.out, common.force, inputs, cfg.seed, resolved);

    GenerateOptions gen;
    gen.max_tokens = max_tokens;
    std::optional<EvalReport> before;
    if (test_set) {
      before = evaluate(p0, *test_set, ck, *match, gen);
      run.say("accuracy before " + fmt(before->accuracy));
    }
    const OptimizeResult r =
        optimize(p0, train_set, ck, cfg, val_set ? &*val_set : nullptr,
                 [&](int e, double tr, double va) {
                   run.say("epoch " + std::to_string(e) + " train_loss " + fmt(tr) +
                           " val_loss " + fmt(va));
                 });
    if (ck.recompute_hash() != frozen) throw IntegrityError("checkpoint changed during optimize");

    save_artifact(r.prompt, run.dir() / "prompt.bin");
    json report = train_report_json(r.report, cfg, ck);
    std::string text = train_report_text(r.report);
    if (test_set) {
      const EvalReport after = evaluate(r.prompt, *test_set, ck, *match, gen);
      run.say("accuracy after " + fmt(after.accuracy));
      report["accuracy_before"] = before->accuracy;
      report["accuracy_after"] = after.accuracy;
      text += "accuracy before: " + fmt(before->accuracy) + "\naccuracy after: " +
              fmt(after.accuracy) + "\n";
      run.write("eval_before.json", eval_report_to_json(*before) + "\n");
      run.write("eval_after.json", eval_report_to_json(after) + "\n");
    }
    run.write("report.json", report.dump(2) + "\n");
    run.write("report.txt", text);
    run.say("stop reason " + std::string(to_string(r.report.stop_reason)) + ", best epoch " +
            std::to_string(r.report.best_epoch));
    run.say("artifact " + (run.dir() / "prompt.bin").string());
  }
};

struct InferCmd {
  std::string checkpoint, input;
  PromptSource prompt;
  int max_tokens = 64;
  bool top1 = false;
  CommonOut common;

  void bind(OptionSet& o) {
    o.add("checkpoint", checkpoint, "Base model")->required();
    prompt.bind(o, true);
    o.add("input", input, "User query")->required();
    o.add("max-tokens", max_tokens, "Generation budget");
    o.flag("top1", top1, "Record only the chosen-token probability per step");
    common.bind(o);
  }

  void run(Run& run, const json& resolved) {
    if (max_tokens < 0) throw UsageError("--max-tokens must be >= 0");
    const ModelCheckpoint ck = load_checkpoint(checkpoint);
    const PromptEmbedding p = prompt.load(ck);
    std::vector<std::string> inputs = {checkpoint};
    for (const auto& s : prompt.paths()) inputs.push_back(s);
    run.open(common.out, common.force, inputs, std::nullopt, resolved);
    GenerateOptions opts;
    opts.max_tokens = max_tokens;
    opts.record_distributions = !top1;
    const GenerationTrace t = generate(p, input, ck, opts);
    save_trace(t, ck.vocab(), run.dir() / "trace.json");
    run.say(trace_text(t, ck.vocab()));
    run.say("stop " + std::string(to_string(t.stop)) + " after " + std::to_string(t.steps()) +
            " tokens");
  }
};

struct EvalCmd {
  std::string checkpoint, test, matcher = "exact";
  PromptSource prompt;
  int max_tokens = 64;
  CommonOut common;

  void bind(OptionSet& o) {
    o.add("checkpoint", checkpoint, "Base model")->required();
    prompt.bind(o, true);
    o.add("test", test, "Test set (JSONL)")->required();
    o.add("matcher", matcher, "exact or delimiter:<marker>");
    o.add("max-tokens", max_tokens, "Generation budget");
    common.bind(o);
  }

  void run(Run& run, const json& resolved) {
    const ModelCheckpoint ck = load_checkpoint(checkpoint);
    const PromptEmbedding p = prompt.load(ck);
    const auto data = load_dataset(test, ck.vocab());
    const auto match = make_matcher(matcher);
    std::vector<std::string> inputs = {checkpoint, test};
    for (const auto& s : prompt.paths()) inputs.push_back(s);
    run.open(common.out, common.force, inputs, std::nullopt, resolved);
    GenerateOptions opts;
    opts.max_tokens = max_tokens;
    const EvalReport r = evaluate(p, data, ck, *match, opts);
    run.write("eval.json", eval_report_to_json(r) + "\n");
    std::size_t right = 0;
    for (const auto& it : r.items) right += it.correct ? 1 : 0;
    run.say("accuracy " + fmt(r.accuracy) + " (" + std::to_string(right) + "/" +
            std::to_string(r.items.size()) + ")");
  }
};

// Diagnostics print their report and write files only when --out is given.
struct DiagOut {
  std::string out;
  bool force = false;
  std::string config;
  void bind(OptionSet& o) {
    o.add("out", out, "Directory for report files (optional)");
    o.flag("force", force, "Replace an existing directory");
    o.app()->add_option("--config", config, "JSON file of option values");
  }
  void open(Run& run, const std::vector<std::string>& inputs, const json& resolved) const {
    if (!out.empty()) run.open(out, force, inputs, std::nullopt, resolved);
  }
};

struct EntropyCmd {
  std::string trace;
  std::size_t max_period = kDefaultMaxPeriod;
  std::size_t min_repeats = kDefaultMinRepeats;
  DiagOut common;

  void bind(OptionSet& o) {
    o.add("trace", trace, "Generation trace (JSON)")->required();
    o.add("max-period", max_period, "Longest repetition period checked");
    o.add("min-repeats", min_repeats, "Back-to-back copies that make a loop");
    common.bind(o);
  }

  void run(Run& run, const json& resolved) {
    GenerationTrace t = load_trace(trace);
    const EntropyReport r = trajectory_entropy(t, max_period, min_repeats);
    common.open(run, {trace}, resolved);
    run.write("entropy.json", entropy_report_to_json(r) + "\n");
    std::istringstream lines(entropy_report_to_text(r));
    for (std::string l; std::getline(lines, l);) run.say(l);
  }
};

struct AnchorCmd {
  std::string checkpoint, artifact;
  DiagOut common;

  void bind(OptionSet& o) {
    o.add("checkpoint", checkpoint, "Base model")->required();
    o.add("artifact", artifact, "Optimized prompt artifact")->required();
    common.bind(o);
  }

  void run(Run& run, const json& resolved) {
    const ModelCheckpoint ck = load_checkpoint(checkpoint);
    const PromptEmbedding p = load_artifact(artifact, &ck);
    const AnchorReport r = anchor_report(p, ck);
    common.open(run, {checkpoint, artifact}, resolved);
    const std::string text = anchor_report_to_text(r, ck.vocab());
    run.write("anchor.json", anchor_report_to_json(r, ck.vocab()) + "\n");
    run.write("anchor.txt", text);
    std::istringstream lines(text);
    for (std::string l; std::getline(lines, l);) run.say(l);
  }
};

struct LatCmd {
  std::string checkpoint, artifact, stimuli_a, stimuli_b, query;
  DiagOut common;

  void bind(OptionSet& o) {
    o.add("checkpoint", checkpoint, "Base model")->required();
    o.add("artifact", artifact, "Optimized prompt artifact")->required();
    o.add("stimuli-a", stimuli_a, "Target-condition stimuli, one per line")->required();
    o.add("stimuli-b", stimuli_b, "Contrast-condition stimuli, one per line")->required();
    o.add("query", query, "Query appended after the prompt")->required();
    common.bind(o);
  }

  void run(Run& run, const json& resolved) {
    const ModelCheckpoint ck = load_checkpoint(checkpoint);
    const PromptEmbedding optimized = load_artifact(artifact, &ck);
    const PromptEmbedding original = init_prompt(ck.vocab().detokenize(optimized.tokens), ck);
    const ProbeDirections dirs = lat_direction(read_lines(stimuli_a), read_lines(stimuli_b), ck);
    const LatReport r = lat_delta(original, optimized, dirs, query, ck);
    common.open(run, {checkpoint, artifact, stimuli_a, stimuli_b}, resolved);
    run.write("lat.csv", lat_report_to_csv(r));
    run.write("lat.json", lat_report_to_json(r) + "\n");
    std::istringstream lines(lat_report_to_text(r));
    for (std::string l; std::getline(lines, l);) run.say(l);
    const double d1 = r.first_block_delta();
    run.say(std::string("first-block delta sign ") + (d1 > 0 ? "+" : d1 < 0 ? "-" : "0"));
  }
};

struct GradcheckCmd {
  std::string checkpoint;
  std::uint64_t seed = 0;
  int seeds = 20;
  double h = 1e-5;
  double tolerance = kGradientTolerance;
  std::string config;

  void bind(OptionSet& o) {
    o.add("checkpoint", checkpoint, "Check this model instead of random default-config ones");
    o.add("seed", seed, "First seed");
    o.add("seeds", seeds, "Number of seeds");
    o.add("fd-step", h, "Central-difference step h");
    o.add("tolerance", tolerance, "Largest accepted relative error");
    o.app()->add_option("--config", config, "JSON file of option values");
  }

  bool run(Run& run) {
    if (seeds < 1) throw UsageError("--seeds must be >= 1");
    std::optional<ModelCheckpoint> ck;
    if (!checkpoint.empty()) ck.emplace(load_checkpoint(checkpoint));
    double worst = 0.0;
    for (int i = 0; i < seeds; ++i) {
      const auto s = seed + static_cast<std::uint64_t>(i);
      const GradientCheckResult r = check_prompt_gradient(s, ModelConfig{}, h, ck ? &*ck : nullptr);
      run.say("seed " + std::to_string(s) + " entries " + std::to_string(r.entries) +
              " max abs error " + fmt(r.max_abs_error, 3) + " floor " + fmt(r.floor, 3) +
              " max relative error " + fmt(r.max_relative_error, 3));
      worst = std::max(worst, r.max_relative_error);
    }
    run.say("max relative error " + fmt(worst, 3));
    const bool pass = worst < tolerance;
    run.say(pass ? "PASS" : "FAIL");
    return pass;
  }
};

struct SweepCmd {
  std::string checkpoint, train, val, test, matcher = "exact";
  PromptSource prompt;
  std::vector<double> lrs = {0.001, 0.01, 0.1};
  std::vector<int> epochs = {5, 10};
  int patience = 2;
  std::uint64_t seed = 0;
  int jobs = 1;
  int max_tokens = 64;
  CommonOut common;

  void bind(OptionSet& o) {
    o.add("checkpoint", checkpoint, "Frozen base model")->required();
    prompt.bind(o, false);
    o.add("train", train, "Training set (JSONL)")->required();
    o.add("val", val, "Validation set (JSONL)");
    o.add("test", test, "Test set (JSONL)")->required();
    o.add("lrs", lrs, "Learning rates")->delimiter(',');
    o.add("epochs", epochs, "Epoch counts")->delimiter(',');
    o.add("patience", patience, "Early-stopping patience");
    o.add("seed", seed, "Seed shared by all grid points");
    o.add("jobs", jobs, "Grid points run concurrently");
    o.add("matcher", matcher, "exact or delimiter:<marker>");
    o.add("max-tokens", max_tokens, "Generation budget");
    common.bind(o);
  }

  struct Row {
    double lr = 0.0;
    int epochs = 0;
    std::optional<double> val_loss;
    std::optional<double> accuracy;
  };

  void run(Run& run, const json& resolved) {
    if (lrs.empty() || epochs.empty()) throw UsageError("--lrs and --epochs must be nonempty");
    for (double lr : lrs)
      if (!(lr > 0.0)) throw UsageError("every learning rate must be > 0");
    for (int e : epochs)
      if (e < 1) throw UsageError("every epoch count must be >= 1");
    if (jobs < 1) throw UsageError("--jobs must be >= 1");
    const ModelCheckpoint ck = load_checkpoint(checkpoint);
    const PromptEmbedding p0 = prompt.load(ck);
    const auto train_set = load_dataset(train, ck.vocab());
    std::optional<std::vector<TrainingExample>> val_set;
    if (!val.empty()) val_set = load_dataset(val, ck.vocab());
    const auto test_set = load_dataset(test, ck.vocab());
    const auto match = make_matcher(matcher);
    std::vector<std::string> inputs = {checkpoint, train, val, test};
    for (const auto& s : prompt.paths()) inputs.push_back(s);
    run.open(common.out, common.force, inputs, seed, resolved);

    std::vector<Row> rows;
    for (double lr : lrs)
      for (int e : epochs) rows.push_back({lr, e, {}, {}});
    GenerateOptions gen;
    gen.max_tokens = max_tokens;
    auto work = [&](Row& row) {
      TrainConfig cfg;
      cfg.learning_rate = row.lr;
      cfg.max_epochs = row.epochs;
      cfg.patience = patience;
      cfg.seed = seed;
      try {
        const OptimizeResult r = optimize(p0, train_set, ck, cfg, val_set ? &*val_set : nullptr);
        row.val_loss = r.prompt.metadata.final_val_loss;
        row.accuracy = evaluate(r.prompt, test_set, ck, *match, gen).accuracy;
      } catch (const DivergenceError&) {
        // Left empty: the row reports the divergence.
      }
    };
    if (jobs == 1) {
      for (Row& row : rows) work(row);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      for (int t = 0; t < jobs; ++t)
        pool.emplace_back([&] {
          for (std::size_t i; (i = next++) < rows.size();) work(rows[i]);
        });
      for (auto& t : pool) t.join();
    }
    std::string csv = "lr,epochs,val_loss,test_accuracy\n";
    for (const Row& r : rows) {
      const std::string line = fmt_exact(r.lr) + "," + std::to_string(r.epochs) + "," +
                               (r.val_loss ? fmt_exact(*r.val_loss) : "diverged") + "," +
                               (r.accuracy ? fmt_exact(*r.accuracy) : "");
      csv += line + "\n";
      run.say(line);
    }
    run.write("sweep.csv", csv);
  }
};

struct ExperimentCmd {
  ExperimentConfig cfg;
  std::string checkpoint;
  CommonOut common;

  void bind(OptionSet& o) {
    o.add("task", cfg.task, "Bundled task");
    o.add("seed", cfg.seed, "Seed for task data, pretraining and optimization");
    o.add("checkpoint", checkpoint, "Reuse this base model instead of pretraining");
    o.add("pretrain-steps", cfg.pretrain.steps, "Pretraining steps");
    o.add("pretrain-lr", cfg.pretrain.learning_rate, "Pretraining learning rate");
    o.add("lr", cfg.train.learning_rate, "Prompt learning rate (> 0)");
    o.add("epochs", cfg.train.max_epochs, "Maximum epochs");
    o.add("patience", cfg.train.patience, "Early-stopping patience");
    o.add("train-size", cfg.sizes.train, "Training examples");
    o.add("test-size", cfg.sizes.test, "Test examples");
    common.bind(o);
  }

  void run(Run& run, const json& resolved) {
    if (!(cfg.train.learning_rate > 0.0)) throw UsageError("--lr must be > 0");
    std::optional<ModelCheckpoint> ck;
    if (!checkpoint.empty()) ck.emplace(load_checkpoint(checkpoint));
    run.open(common.out, common.force, {checkpoint}, cfg.seed, resolved);
    const ExperimentResult r =
        run_experiment(cfg, ck ? &*ck : nullptr, [&](const std::string& l) { run.say(l); });
    const ModelCheckpoint& model = *r.checkpoint;
    if (!ck) save_checkpoint(model, run.dir() / "model.ckpt");
    save_artifact(r.optimized.prompt, run.dir() / "prompt.bin");
    run.write("eval_before.json", eval_report_to_json(r.before) + "\n");
    run.write("eval_after.json", eval_report_to_json(r.after) + "\n");
    const AnchorReport anchors = anchor_report(r.optimized.prompt, model);
    run.write("anchor.json", anchor_report_to_json(anchors, model.vocab()) + "\n");
    run.write("anchor.txt", anchor_report_to_text(anchors, model.vocab()));
    const ProbeDirections dirs = lat_direction(r.task.stimuli_a, r.task.stimuli_b, model);
    const LatReport lat = lat_delta(r.initial, r.optimized.prompt, dirs,
                                    r.task.test.front().input, model);
    run.write("lat.csv", lat_report_to_csv(lat));
    TrainConfig used = cfg.train;
    used.seed = cfg.seed;
    json report = train_report_json(r.optimized.report, used, model);
    report["task"] = r.task.name;
    report["accuracy_before"] = r.before.accuracy;
    report["accuracy_after"] = r.after.accuracy;
    report["all_anchored"] = anchors.all_anchored();
    report["pretrain_final_ce"] = r.pretrain.final_ce;
    run.write("report.json", report.dump(2) + "\n");
    run.say("all prompt positions anchored: " + std::string(anchors.all_anchored() ? "yes" : "no"));
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prompt-embedding optimization against a frozen character-level transformer"};
  app.name("promptopt");
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app;
    OptionSet opts;
    std::string* config;
  };
  std::vector<Sub> subs;
  auto sub = [&](const std::string& name, const std::string& help) -> OptionSet& {
    CLI::App* a = app.add_subcommand(name, help);
    subs.push_back({a, OptionSet(a), nullptr});
    return subs.back().opts;
  };
  subs.reserve(16);

  TaskCmd task;
  PretrainCmd pretrain;
  OptimizeCmd optimize_cmd;
  InferCmd infer;
  EvalCmd eval;
  EntropyCmd entropy;
  AnchorCmd anchor;
  LatCmd lat;
  GradcheckCmd gradcheck;
  SweepCmd sweep;
  ExperimentCmd experiment;

  task.bind(sub("task", "Write a bundled task's corpus, datasets and stimuli"));
  subs.back().config = &task.common.config;
  pretrain.bind(sub("pretrain", "Pretrain a base model on a text corpus"));
  subs.back().config = &pretrain.common.config;
  optimize_cmd.bind(sub("optimize", "Optimize a prompt embedding against a frozen model"));
  subs.back().config = &optimize_cmd.common.config;
  infer.bind(sub("infer", "Greedy generation for one query"));
  subs.back().config = &infer.common.config;
  eval.bind(sub("eval", "Score a prompt on a test set"));
  subs.back().config = &eval.common.config;
  gradcheck.bind(sub("gradcheck", "Compare prompt gradients with finite differences"));
  subs.back().config = &gradcheck.config;
  sweep.bind(sub("sweep", "Grid over learning rates and epoch counts"));
  subs.back().config = &sweep.common.config;
  experiment.bind(sub("experiment", "Pretrain, optimize and score a bundled task end to end"));
  subs.back().config = &experiment.common.config;

  CLI::App* diag = app.add_subcommand("diag", "Entropy, anchoring and probing diagnostics");
  diag->require_subcommand(1);
  auto diag_sub = [&](const std::string& name, const std::string& help) -> OptionSet& {
    CLI::App* a = diag->add_subcommand(name, help);
    subs.push_back({a, OptionSet(a), nullptr});
    return subs.back().opts;
  };
  entropy.bind(diag_sub("entropy", "Trajectory entropy and repetition loops of a trace"));
  subs.back().config = &entropy.common.config;
  anchor.bind(diag_sub("anchor", "Nearest-token anchoring of an optimized prompt"));
  subs.back().config = &anchor.common.config;
  lat.bind(diag_sub("lat", "Per-layer projection shift along a probe direction"));
  subs.back().config = &lat.common.config;

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      CLI::App* target = &app;
      for (CLI::App* s = &app; s;) {
        auto chosen = s->get_subcommands();
        if (chosen.empty()) break;
        target = s = chosen.front();
      }
      out << target->help();
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\n\n" << app.help();
      return kExitUsage;
    }

    Sub* chosen = nullptr;
    for (Sub& s : subs)
      if (s.app->parsed()) chosen = &s;
    if (!chosen) {
      err << app.help();
      return kExitUsage;
    }
    if (chosen->config && !chosen->config->empty()) apply_config_file(chosen->app, *chosen->config);
    const json resolved = chosen->opts.resolved();
    const std::string name = chosen->app->get_name();
    Run run_dir(out, chosen->app->get_parent() == diag ? "diag-" + name : name);

    int code = kExitOk;
    if (name == "task") task.run(run_dir, resolved);
    else if (name == "pretrain") pretrain.run(run_dir, resolved);
    else if (name == "optimize") optimize_cmd.run(run_dir, resolved);
    else if (name == "infer") infer.run(run_dir, resolved);
    else if (name == "eval") eval.run(run_dir, resolved);
    else if (name == "entropy") entropy.run(run_dir, resolved);
    else if (name == "anchor") anchor.run(run_dir, resolved);
    else if (name == "lat") lat.run(run_dir, resolved);
    else if (name == "gradcheck") code = gradcheck.run(run_dir) ? kExitOk : kExitNumerical;
    else if (name == "sweep") sweep.run(run_dir, resolved);
    else if (name == "experiment") experiment.run(run_dir, resolved);
    run_dir.finish();
    return code;
  } catch (const DivergenceError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace promptopt::cli
