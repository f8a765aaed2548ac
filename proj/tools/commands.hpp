#pragma once

// Implementation of the sarcnet command-line subcommands. Kept separate from
// main() so the test suite can drive the commands in-process.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sarcnet/sarcnet.hpp"

namespace sarcnet::cli {

namespace fs = std::filesystem;

/// Worker cap from SARCNET_THREADS (default 1), never above the hardware.
inline std::size_t worker_threads() {
  std::size_t n = 1;
  if (const char* env = std::getenv("SARCNET_THREADS")) {
    try {
      n = std::stoul(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SARCNET_THREADS must be a positive integer, got '") + env + "'");
    }
    if (n == 0) throw ConfigError("SARCNET_THREADS must be a positive integer");
  }
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  return std::min(n, hw);
}

/// One reproducibility record per command invocation.
class RunManifest {
 public:
  explicit RunManifest(std::string command)
      : command_(std::move(command)), started_(std::chrono::steady_clock::now()), wall_(std::time(nullptr)) {}

  void config(const ModelConfig& c) { config_ = config_to_string(c); }
  void seed(std::uint64_t s) { seed_ = s; }
  void input(const fs::path& p) { inputs_[p.string()] = file_sha256(p); }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command_;
    if (config_) {
      nlohmann::json cfg = nlohmann::json::object();
      std::istringstream in(*config_);
      std::string line;
      while (std::getline(in, line))
        if (const auto eq = line.find(" = "); eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 3);
      j["config"] = cfg;
    }
    if (seed_) j["seed"] = *seed_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&wall_));
    j["started_at"] = stamp;
    j["duration_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    return j;
  }

  // Writes to `path`, or to `fallback` when no path is set.
  void emit(const std::optional<fs::path>& path, std::ostream& fallback) const {
    if (path) {
      std::ofstream out(*path);
      if (!out) throw IoError("cannot write manifest " + path->string());
      out << to_json().dump(2) << '\n';
    } else {
      fallback << to_json().dump() << '\n';
    }
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point started_;
  std::time_t wall_;
  std::optional<std::string> config_;
  std::optional<std::uint64_t> seed_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

inline std::string with_commas(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

// ------------------------------------------------------------------- stats

struct StatsOptions {
  fs::path dataset;
  std::optional<fs::path> embeddings;
  std::size_t top_k = 20;
  std::optional<fs::path> manifest;
};

inline int cmd_stats(const StatsOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("stats");
  const auto records = load_dataset(o.dataset);
  manifest.input(o.dataset);
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(records.size());
  for (const auto& r : records) corpus.push_back(tokenize(r.headline));
  const Vocabulary vocab = build_vocabulary(corpus, 1);
  const DatasetStats s = dataset_stats(records, vocab);

  out << "# Records\t" << with_commas(s.records) << '\n'
      << "# Sarcastic records\t" << with_commas(s.sarcastic) << '\n'
      << "# Non-sarcastic records\t" << with_commas(s.non_sarcastic) << '\n'
      << "Vocabulary size\t" << with_commas(s.vocabulary_size) << '\n';
  if (o.embeddings) {
    const auto pre = load_vectors_text(*o.embeddings, &vocab);
    manifest.input(*o.embeddings);
    out << "% word embeddings not available\t" << std::fixed << std::setprecision(2) << coverage(vocab, pre)
        << std::defaultfloat << '\n';
    out << "\n[coverage]\n";
    write_coverage_report(out, vocab, pre);
  }
  const auto freq = class_word_frequencies(records, o.top_k);
  const auto emit = [&](const char* title, const RankedCounts& rc) {
    out << "\n[" << title << " top " << o.top_k << ", stopwords " << kStopwordsVersion << "]\n";
    for (const auto& [tok, n] : rc) out << tok << '\t' << n << '\n';
  };
  emit("sarcastic", freq.sarcastic);
  emit("non-sarcastic", freq.non_sarcastic);
  manifest.emit(o.manifest, err);
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainOptions {
  fs::path dataset;
  std::optional<fs::path> config;
  fs::path out_dir;
  std::optional<fs::path> embeddings;
  std::optional<std::uint64_t> seed;
  std::optional<Variant> variant;
};

/// Resolved configuration: file (or defaults), then command-line overrides.
inline ModelConfig resolve_config(const std::optional<fs::path>& path, std::optional<std::uint64_t> seed,
                                  std::optional<Variant> variant) {
  ModelConfig c = path ? load_config(path->string()) : ModelConfig{};
  if (seed) c.seed = *seed;
  if (variant) c.variant = *variant;
  validate(c);
  return c;
}

/// Everything derived from a dataset before fitting: split, vocabulary,
/// encoded partitions, initial embedding table.
struct PreparedData {
  std::vector<HeadlineRecord> records;
  std::string digest;
  SplitIndices split;
  Vocabulary vocab;
  std::vector<Example> train, val, test;
  Tensor<float> embedding;
  std::optional<double> missing_pct;
};

inline PreparedData prepare_data(const fs::path& dataset, ModelConfig& config,
                                 const std::optional<fs::path>& embeddings) {
  PreparedData p;
  p.records = load_dataset(dataset);
  p.digest = file_sha256(dataset);
  p.split = split_dataset(p.records.size(), config.seed);
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(p.split.train.size());
  for (auto idx : p.split.train) corpus.push_back(tokenize(p.records[idx].headline));
  p.vocab = build_vocabulary(corpus, config.min_count);
  p.train = make_examples(p.records, p.split.train, p.vocab, config.max_len);
  p.val = make_examples(p.records, p.split.val, p.vocab, config.max_len);
  p.test = make_examples(p.records, p.split.test, p.vocab, config.max_len);
  std::optional<PretrainedVectors> pre;
  if (embeddings) {
    pre = load_vectors_text(*embeddings, &p.vocab);
    config.embedding_dim = pre->dimension;
    p.missing_pct = coverage(p.vocab, *pre);
  }
  p.embedding = build_embedding_matrix<float>(p.vocab, pre ? &*pre : nullptr, config.embedding_dim, config.oov_range,
                                              config.seed ^ 0xE3B)
                    .table;
  return p;
}

inline int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("train");
  ModelConfig config = resolve_config(o.config, o.seed, o.variant);
  if (o.config) manifest.input(*o.config);
  manifest.input(o.dataset);
  if (o.embeddings) manifest.input(*o.embeddings);
  PreparedData data = prepare_data(o.dataset, config, o.embeddings);
  manifest.config(config);
  manifest.seed(config.seed);

  fs::create_directories(o.out_dir);
  const fs::path metrics_path = o.out_dir / "metrics.tsv";
  const fs::path checkpoint_path = o.out_dir / "model.sarc";
  const fs::path split_path = o.out_dir / "split.txt";
  const fs::path manifest_path = o.out_dir / "manifest.json";
  {
    std::ofstream split_out(split_path);
    if (!split_out) throw IoError("cannot write " + split_path.string());
    write_split_manifest(split_out, data.split, data.digest);
  }

  FitOptions opt = FitOptions::from(config);
  opt.threads = worker_threads();
  opt.on_epoch = [&](const EpochMetrics& m) {
    err << "epoch " << m.epoch << "  train_loss " << m.train_loss << "  train_acc " << m.train_accuracy
        << "  val_loss " << m.val_loss << "  val_acc " << m.val_accuracy << '\n';
  };
  auto result = fit(Model<float>::initialize(config, std::move(data.embedding)), data.train, data.val, opt);
  {
    std::ofstream log(metrics_path);
    if (!log) throw IoError("cannot write " + metrics_path.string());
    write_metrics_log(log, result.metrics);
  }
  save_checkpoint(checkpoint_path, result.best, data.vocab);
  const EvalReport test = evaluate(data.test, result.best);
  out << "variant\t" << to_string(config.variant) << '\n'
      << "best_epoch\t" << result.best_epoch << '\n'
      << "test_accuracy\t" << test.accuracy << '\n'
      << "test_loss\t" << test.mean_loss << '\n';
  if (result.diverged) err << "warning: training diverged; kept the last finite checkpoint\n";
  for (const auto& p : {checkpoint_path, metrics_path, split_path, manifest_path}) manifest.output(p);
  manifest.emit(manifest_path, err);
  return result.diverged ? static_cast<int>(ExitCode::numeric) : 0;
}

// -------------------------------------------------------------------- grid

struct GridOptions {
  fs::path dataset;
  std::optional<fs::path> config;
  fs::path out_dir;
  std::optional<fs::path> embeddings;
  std::optional<std::uint64_t> seed;
  std::optional<Variant> variant;
  std::size_t budget = 1000;
  std::vector<std::string> overrides;  // "key=v1,v2,..." replaces the default grid
};

inline ParamGrid parse_grid(const std::vector<std::string>& specs) {
  if (specs.empty()) return default_grid();
  ParamGrid grid;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("grid axis must look like key=v1,v2: '" + s + "'");
    std::vector<std::string> values;
    std::istringstream in(s.substr(eq + 1));
    std::string v;
    while (std::getline(in, v, ',')) values.push_back(v);
    grid.emplace_back(s.substr(0, eq), values);
  }
  return grid;
}

inline int cmd_grid(const GridOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("grid");
  ModelConfig config = resolve_config(o.config, o.seed, o.variant);
  if (o.config) manifest.input(*o.config);
  manifest.input(o.dataset);
  if (o.embeddings) manifest.input(*o.embeddings);
  PreparedData data = prepare_data(o.dataset, config, o.embeddings);
  manifest.config(config);
  manifest.seed(config.seed);
  const auto grid = parse_grid(o.overrides);
  const Tensor<float> table = data.embedding;
  auto result = grid_search<float>(config, grid, data.train, data.val, o.budget,
                                   [&](const ModelConfig&) { return table; }, worker_threads());
  fs::create_directories(o.out_dir);
  const fs::path table_path = o.out_dir / "grid.tsv", ckpt = o.out_dir / "best.sarc";
  {
    std::ofstream t(table_path);
    if (!t) throw IoError("cannot write " + table_path.string());
    write_grid_table(t, result.rows);
  }
  write_grid_table(out, result.rows);
  save_checkpoint(ckpt, result.best, data.vocab);
  {
    std::ofstream split_out(o.out_dir / "split.txt");
    write_split_manifest(split_out, data.split, data.digest);
  }
  const EvalReport test = evaluate(data.test, result.best);
  out << "best_test_accuracy\t" << test.accuracy << '\n';
  manifest.output(table_path);
  manifest.output(ckpt);
  manifest.output(o.out_dir / "split.txt");
  manifest.emit(o.out_dir / "manifest.json", err);
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalOptions {
  fs::path checkpoint;
  fs::path dataset;
  std::optional<fs::path> split;  // defaults to split.txt next to the checkpoint
  std::string partition = "test";
  std::optional<fs::path> manifest;
};

inline int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  if (o.partition != "train" && o.partition != "val" && o.partition != "test")
    throw UsageError("partition must be train, val or test, got '" + o.partition + "'");
  RunManifest manifest("eval");
  const Artifacts art = load_checkpoint(o.checkpoint);
  manifest.input(o.checkpoint);
  manifest.config(art.model.config());
  const fs::path split_path = o.split ? *o.split : o.checkpoint.parent_path() / "split.txt";
  std::ifstream split_in(split_path);
  if (!split_in) throw IoError("cannot open split manifest " + split_path.string());
  const SplitManifest sm = read_split_manifest(split_in);
  manifest.input(split_path);
  manifest.seed(sm.split.seed);
  const std::string digest = file_sha256(o.dataset);
  manifest.input(o.dataset);
  if (digest != sm.dataset_digest)
    throw ValidationError("dataset digest " + digest + " does not match the split manifest (" + sm.dataset_digest +
                          "); refusing to evaluate");
  const auto records = load_dataset(o.dataset);
  const auto& idx = o.partition == "train" ? sm.split.train : o.partition == "val" ? sm.split.val : sm.split.test;
  for (auto i : idx)
    if (i >= records.size()) throw ValidationError("split index " + std::to_string(i) + " beyond dataset");
  const auto examples = make_examples(records, idx, art.vocab, art.model.config().max_len);
  const EvalReport r = evaluate(examples, art.model);
  out << "partition\t" << o.partition << '\n'
      << "records\t" << examples.size() << '\n'
      << "accuracy\t" << r.accuracy << '\n'
      << "loss\t" << r.mean_loss << '\n'
      << "true_negative\t" << r.confusion.true_negative << '\n'
      << "false_positive\t" << r.confusion.false_positive << '\n'
      << "false_negative\t" << r.confusion.false_negative << '\n'
      << "true_positive\t" << r.confusion.true_positive << '\n';
  manifest.emit(o.manifest, err);
  return 0;
}

// ----------------------------------------------------------------- predict

struct PredictOptions {
  fs::path checkpoint;
  std::vector<std::string> texts;
};

inline int cmd_predict(const PredictOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("predict");
  const Artifacts art = load_checkpoint(o.checkpoint);
  manifest.input(o.checkpoint);
  manifest.config(art.model.config());
  for (const auto& text : o.texts) {
    const auto p = predict(text, art);
    out << p.label << '\t' << p.probs[1] << '\t' << text << '\n';
  }
  manifest.emit(std::nullopt, err);
  return 0;
}

// ------------------------------------------------------------------ attend

struct AttendOptions {
  fs::path checkpoint;
  std::vector<std::string> texts;
  std::optional<fs::path> input;  // one text per line
  fs::path out;                   // JSON lines; the heatmap goes to <out>.html
};

inline std::string html_escape(const std::string& s) {
  std::string r;
  for (char c : s) {
    switch (c) {
      case '&': r += "&amp;"; break;
      case '<': r += "&lt;"; break;
      case '>': r += "&gt;"; break;
      case '"': r += "&quot;"; break;
      case '\'': r += "&#39;"; break;
      default: r += c;
    }
  }
  return r;
}

struct AttentionRecord {
  std::string text;
  std::vector<std::pair<std::string, float>> weights;
  int label = 0;
  double confidence = 0;
};

/// Static page, inline styles only. Each token's background opacity is its
/// weight divided by the sentence maximum.
inline void write_heatmap(std::ostream& out, const std::vector<AttentionRecord>& recs) {
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Attention heatmap</title></head>\n"
      << "<body style=\"font-family:sans-serif;margin:2em;\">\n<h1 style=\"font-size:1.2em;\">Attention over headline "
         "tokens</h1>\n";
  for (const auto& r : recs) {
    float peak = 0;
    for (const auto& [t, a] : r.weights) peak = std::max(peak, a);
    out << "<div style=\"margin:0.8em 0;\"><span style=\"color:#555;margin-right:1em;\">"
        << (r.label == 1 ? "sarcastic" : "not sarcastic") << " (" << std::fixed << std::setprecision(3)
        << r.confidence << ")</span>";
    for (const auto& [tok, a] : r.weights) {
      const double level = peak > 0 ? a / peak : 0.0;
      out << "<span title=\"" << std::setprecision(4) << a << "\" style=\"background:rgba(220,40,40," << level
          << ");padding:2px 4px;margin:1px;border-radius:3px;\">" << html_escape(tok) << "</span>";
    }
    out << std::defaultfloat << "</div>\n";
  }
  out << "</body></html>\n";
}

inline int cmd_attend(const AttendOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("attend");
  const Artifacts art = load_checkpoint(o.checkpoint);
  manifest.input(o.checkpoint);
  manifest.config(art.model.config());
  if (art.model.variant() != Variant::hybrid)
    throw UnsupportedVariant("attend needs a hybrid checkpoint; this one is a baseline");
  std::vector<std::string> texts = o.texts;
  if (o.input) {
    std::ifstream in(*o.input);
    if (!in) throw IoError("cannot open " + o.input->string());
    manifest.input(*o.input);
    std::string line;
    while (std::getline(in, line))
      if (!detail::trim(line).empty()) texts.push_back(line);
  }
  if (texts.empty()) throw UsageError("attend needs --text or --input");

  std::vector<AttentionRecord> recs;
  for (const auto& text : texts) {
    const auto pred = predict(text, art);
    recs.push_back({text, explain(text, art), pred.label, pred.probs[static_cast<std::size_t>(pred.label)]});
  }
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  {
    std::ofstream lines(o.out);
    if (!lines) throw IoError("cannot write " + o.out.string());
    for (const auto& r : recs) {
      nlohmann::json j;
      j["text"] = r.text;
      std::vector<std::string> toks;
      std::vector<float> alphas;
      for (const auto& [t, a] : r.weights) {
        toks.push_back(t);
        alphas.push_back(a);
      }
      j["tokens"] = toks;
      j["alphas"] = alphas;
      j["label"] = r.label;
      j["confidence"] = r.confidence;
      lines << j.dump() << '\n';
    }
  }
  fs::path html = o.out;
  html += ".html";
  {
    std::ofstream page(html);
    if (!page) throw IoError("cannot write " + html.string());
    write_heatmap(page, recs);
  }
  out << "records\t" << recs.size() << '\n' << "lines\t" << o.out.string() << '\n' << "heatmap\t" << html.string() << '\n';
  manifest.output(o.out);
  manifest.output(html);
  fs::path mpath = o.out;
  mpath += ".manifest.json";
  manifest.output(mpath);
  manifest.emit(mpath, err);
  return 0;
}

// --------------------------------------------------------------- selfcheck

struct SelfcheckOptions {
  std::string inject_fault;
  std::optional<fs::path> manifest;
};

inline int cmd_selfcheck(const SelfcheckOptions& o, std::ostream& out, std::ostream& err) {
  RunManifest manifest("selfcheck");
  GradCheckOptions opt;
  opt.inject_fault = o.inject_fault;
  manifest.seed(opt.seed);
  bool ok = true;
  for (const auto& r : run_gradient_checks(opt)) {
    out << (r.passed ? "PASS" : "FAIL") << '\t' << r.name << "\tmax_rel_error=" << std::scientific
        << std::setprecision(3) << r.max_rel_error << std::defaultfloat << '\n';
    ok = ok && r.passed;
  }
  manifest.emit(o.manifest, err);
  return ok ? 0 : static_cast<int>(ExitCode::numeric);
}

}  // namespace sarcnet::cli
