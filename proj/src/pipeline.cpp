#include "aadam/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>

#include "aadam/augmentation.hpp"
#include "aadam/checkpoint.hpp"
#include "aadam/error.hpp"
#include "aadam/hashing.hpp"
#include "aadam/transfer.hpp"

namespace fs = std::filesystem;

namespace aadam {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return 1;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const TranslationError*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const LeakageError*>(&e)) return 4;
  return 1;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", s);
  return buf;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(start, nl - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
    start = nl + 1;
  }
  return out;
}

}  // namespace

// Manifest --------------------------------------------------------------

std::string RunManifest::serialize() const {
  std::string out;
  out += "command\t" + command + "\n";
  out += "run_id\t" + run_id + "\n";
  out += "config_hash\t" + config_hash + "\n";
  out += "status\t" + status + "\n";
  for (const auto& s : stages) out += "stage\t" + s.name + "\t" + (s.hash.empty() ? "-" : s.hash) + "\t" + fmt_seconds(s.seconds) + "\n";
  if (!error.empty()) {
    std::string e = error;
    std::replace(e.begin(), e.end(), '\n', ' ');
    std::replace(e.begin(), e.end(), '\t', ' ');
    out += "error\t" + e + "\n";
  }
  return out;
}

RunManifest RunManifest::parse(std::string_view text) {
  RunManifest m;
  m.status.clear();
  std::size_t line_no = 0;
  for (const auto& line : lines_of(text)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    auto bad = [&](const std::string& why) {
      return DataError("run manifest line " + std::to_string(line_no) + ": " + why);
    };
    if (f.size() < 2) throw bad("expected key<TAB>value");
    if (f[0] == "command") {
      m.command = f[1];
    } else if (f[0] == "run_id") {
      m.run_id = f[1];
    } else if (f[0] == "config_hash") {
      m.config_hash = f[1];
    } else if (f[0] == "status") {
      m.status = f[1];
    } else if (f[0] == "error") {
      m.error = f[1];
    } else if (f[0] == "stage") {
      if (f.size() != 4) throw bad("stage lines have 3 fields");
      StageRecord s{std::string(f[1]), f[2] == "-" ? std::string() : std::string(f[2]), 0.0};
      const auto res = std::from_chars(f[3].data(), f[3].data() + f[3].size(), s.seconds);
      if (res.ec != std::errc()) throw bad("bad seconds '" + std::string(f[3]) + "'");
      m.stages.push_back(std::move(s));
    } else {
      throw bad("unknown key '" + std::string(f[0]) + "'");
    }
  }
  if (m.status.empty()) throw DataError("run manifest: missing status");
  return m;
}

// Lock and run identity ----------------------------------------------------

RunLock::RunLock(const fs::path& dir) : path_(dir / ".lock") {
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw UsageError("run directory " + dir.string() + " is locked by another invocation (remove " +
                       path_.string() + " if it is stale)");
    }
    throw DataError("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::string run_id(const std::string& command, const Config& config) {
  Sha256 h;
  h.update(command);
  h.update(std::string_view("\n"));
  for (const auto& [key, value] : config.values()) {
    if (key == "global.run_root") continue;
    h.update(key + "=" + value + "\n");
    std::error_code ec;
    if (!value.empty() && fs::is_regular_file(value, ec)) h.update("file " + sha256_hex(read_text(value)) + "\n");
  }
  return command + "-" + short_hash(h.hex());
}

namespace {

struct Run {
  fs::path dir;
  RunManifest manifest;
  std::unique_ptr<RunLock> lock;

  void write_manifest() const { write_text((dir / "manifest.tsv").string(), manifest.serialize()); }
  void stage(const std::string& name, const std::string& hash, Clock::time_point start) {
    manifest.stages.push_back({name, hash, seconds_since(start)});
    write_manifest();
  }
  void write(const std::string& file, std::string_view content) const { write_text((dir / file).string(), content); }
  std::string path(const std::string& file) const { return (dir / file).string(); }
};

fs::path run_root(const Config& config) { return fs::path(config.get_or("global.run_root", "runs")); }

/// Runs body inside a locked run directory. Completed runs are skipped
/// unless forced; failures leave the manifest marked incomplete.
int with_run(const std::string& command, const Config& config, const CommandOptions& options, std::ostream& out,
             const std::function<int(Run&)>& body, fs::path* dir_out = nullptr) {
  Run run;
  const std::string id = run_id(command, config);
  run.dir = run_root(config) / id;
  if (dir_out) *dir_out = run.dir;
  std::error_code ec;
  fs::create_directories(run.dir, ec);
  if (ec) throw DataError("cannot create run directory " + run.dir.string() + ": " + ec.message());
  run.lock = std::make_unique<RunLock>(run.dir);

  const fs::path manifest_path = run.dir / "manifest.tsv";
  if (!options.force && fs::exists(manifest_path)) {
    const RunManifest previous = RunManifest::parse(read_text(manifest_path.string()));
    if (previous.status == "complete") {
      out << "run " << run.dir.string() << " is complete; skipped (use --force to rerun)\n";
      return 0;
    }
  }
  run.manifest.command = command;
  run.manifest.run_id = id;
  run.manifest.config_hash = config.hash();
  run.write_manifest();
  run.write("config.ini", config.to_ini());
  try {
    const int code = body(run);
    run.manifest.status = code == 0 ? "complete" : "incomplete";
    run.write_manifest();
    out << "run directory: " << run.dir.string() << "\n";
    return code;
  } catch (const std::exception& e) {
    run.manifest.status = "incomplete";
    run.manifest.error = e.what();
    run.write_manifest();
    throw;
  }
}

std::string require_path(const Config& config, const std::string& key) { return config.require(key); }

std::string data_key(const std::string& language, Split split) {
  return "data." + language + "." + std::string(to_string(split));
}

Corpus require_split(const Config& config, const std::string& language, Split split) {
  auto c = load_split(config, language, split);
  if (!c) throw UsageError("missing configuration key '" + data_key(language, split) + "'");
  return std::move(*c);
}

std::vector<double> parse_lrs(const Config& config, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : config.get_list(key)) {
    double v = 0.0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size() || !(v > 0.0)) {
      throw UsageError("configuration key '" + key + "': bad learning rate '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("configuration key '" + key + "' lists no learning rates");
  return out;
}

bool adapter_mode(const Config& config) {
  const std::string mode = config.get_or("training.mode", "full");
  if (mode == "full") return false;
  if (mode == "adapter") return true;
  throw UsageError("training.mode must be full or adapter, got '" + mode + "'");
}

ModelGraph base_model(const Config& config, const Vocabulary& vocab) {
  if (auto path = config.get("model.base")) {
    ModelGraph m = load_checkpoint(*path);
    if (m.config().vocab_size != vocab.size()) {
      throw DataError("base checkpoint " + *path + " has vocabulary size " + std::to_string(m.config().vocab_size) +
                      " but the experiment vocabulary has " + std::to_string(vocab.size()));
    }
    return m;
  }
  return build_encoder(encoder_config(config, vocab.size()));
}

Vocabulary vocab_beside(const std::string& checkpoint_path, const Config& config) {
  if (auto v = config.get("model.vocab")) return Vocabulary::parse(read_text(*v));
  const fs::path p = fs::path(checkpoint_path).parent_path() / "vocab.txt";
  if (!fs::exists(p)) {
    throw UsageError("no vocabulary for " + checkpoint_path + ": set model.vocab or place vocab.txt beside it");
  }
  return Vocabulary::parse(read_text(p.string()));
}

EvalReport report_for(const Config& config, const std::string& language, const std::string& system,
                      std::span<const double> pred, std::span<const double> gold, const std::string& checkpoint_hash) {
  EvalReport r = make_report(language, system, pred, gold);
  r.bands = band_analysis(pred, gold, parse_bands(config.get_list("evaluation.bands")));
  r.checkpoint_hash = checkpoint_hash;
  r.config_hash = config.hash();
  return r;
}

std::string write_reports(Run& run, const std::vector<EvalReport>& reports) {
  run.write("report.tsv", render_tsv(reports));
  const std::string table = render_table(reports);
  run.write("report.txt", table);
  return table;
}

void check_provenance(const Corpus& corpus, bool want_original, const std::string& what) {
  for (const auto& p : corpus.pairs) {
    if ((p.provenance == Provenance::Original) != want_original) {
      throw DataError(what + " pair '" + p.id + "' has provenance " + std::string(to_string(p.provenance)) +
                      (want_original ? "; final training takes original pairs only"
                                     : "; warmup takes translated pairs only"));
    }
  }
}

TrainConfig stage_config(const Config& config, double lr, std::size_t epochs, TrainMode mode, std::uint64_t stream) {
  TrainConfig t;
  t.batch_size = config.get_size("training.batch_size");
  t.learning_rate = lr;
  t.epochs = epochs;
  t.mode = mode;
  t.seed = derive_seed(config.get_u64("global.seed"), stream);
  t.weight_decay = config.get_double("training.weight_decay");
  validate(t);
  return t;
}

std::string grid_table(const std::vector<GridRow>& rows) {
  std::string out = "learning_rate\tepochs\tdev_spearman_x100\tdiverged\tfinal_hash\tmessage\n";
  for (const auto& r : rows) {
    out += fmt_real(r.config.learning_rate) + "\t" + std::to_string(r.config.epochs) + "\t" +
           format_x100(r.dev_spearman) + "\t" + (r.diverged ? "yes" : "no") + "\t" +
           (r.final_hash.empty() ? "-" : r.final_hash) + "\t" + (r.message.empty() ? "-" : r.message) + "\n";
  }
  return out;
}

struct TrainOutcome {
  fs::path dir;
  std::optional<double> dev_spearman;
};

std::optional<double> read_dev_score(const fs::path& dir) {
  const fs::path p = dir / "scores.tsv";
  if (!fs::exists(p)) return std::nullopt;
  for (const auto& line : lines_of(read_text(p.string()))) {
    const auto f = split_tabs(line);
    if (f.size() == 2 && f[0] == "dev" && f[1] != "NA") {
      double v = 0.0;
      std::from_chars(f[1].data(), f[1].data() + f[1].size(), v);
      return v;
    }
  }
  return std::nullopt;
}

TrainOutcome train_pipeline(const Config& config, const CommandOptions& options, std::ostream& out) {
  TrainOutcome outcome;
  std::optional<double> dev_score;
  bool ran = false;
  with_run(
      "train", config, options, out,
      [&](Run& run) {
        ran = true;
        const std::string lang = config.require("global.language");
        const Corpus train = require_split(config, lang, Split::Train);
        const Corpus dev = require_split(config, lang, Split::Dev);
        const auto test = load_split(config, lang, Split::Test);
        check_provenance(train, true, "training");
        const Vocabulary vocab = experiment_vocab(config);
        run.write("vocab.txt", vocab.serialize());
        const TokenizeOptions tok = tokenize_options(config);
        const bool adapters = adapter_mode(config);
        const std::uint64_t seed = config.get_u64("global.seed");

        auto t = Clock::now();
        ModelGraph model = base_model(config, vocab);
        model.set_config_hash(config.hash());
        run.stage("build", model_hash(model), t);

        TrainLog log;
        if (adapters) {
          AdapterBundle lang_adapter = config.has("adapter.language")
                                           ? load_adapter(config.require("adapter.language"))
                                           : make_adapter(model.config(), AdapterKind::Language, lang, seed);
          if (lang_adapter.kind != AdapterKind::Language) throw DataError("adapter.language is not a language adapter");
          attach_adapter(model, lang_adapter);
        }

        if (config.get_bool("tapt.enabled")) {
          t = Clock::now();
          const Corpus unlabeled = require_split(config, lang, Split::Unlabeled);
          const TrainConfig tc = stage_config(config, config.get_double("tapt.learning_rate"),
                                              config.get_size("tapt.epochs"),
                                              adapters ? TrainMode::LanguageAdapterOnly : TrainMode::Full, 11);
          log.append(tapt(model, unlabeled, vocab, tc, {}, "tapt", tok));
          run.stage("tapt", model_hash(model), t);
        }

        if (adapters) attach_adapter(model, make_adapter(model.config(), AdapterKind::Task, "str-" + lang, seed));
        const TrainMode supervised = adapters ? TrainMode::TaskAdapterOnly : TrainMode::Full;
        RegressionOptions ro;
        ro.architecture = parse_architecture(config.get_or("model.architecture", "cross"));
        ro.tokenize = tok;
        ro.eval_threads = config.has("training.threads") ? config.get_size("training.threads") : 0;

        const std::string source = config.get_or("warmup.source", "none");
        if (source != "none") {
          if (source != "semrel" && source != "stsb") {
            throw UsageError("warmup.source must be none, semrel or stsb, got '" + source + "'");
          }
          t = Clock::now();
          const std::string key = "augmented." + lang + "." + source;
          Corpus augmented = load_labeled(config.require(key), lang, Split::Train);
          check_provenance(augmented, false, "warmup");
          if (augmented.pairs.empty()) {
            log.warnings.push_back("warmup corpus is empty; phase skipped");
          } else {
            const double lr = config.has("warmup.learning_rate") ? config.get_double("warmup.learning_rate")
                                                                 : (adapters ? 1e-4 : 5e-5);
            ro.phase = "warmup";
            log.append(train_regression(model, augmented, &dev, vocab,
                                        stage_config(config, lr, config.get_size("warmup.epochs"), supervised, 12),
                                        ro));
            run.stage("warmup", model_hash(model), t);
          }
        }

        t = Clock::now();
        std::vector<TrainConfig> grid;
        const auto lrs = parse_lrs(config, adapters ? "adapter.grid" : "final.grid");
        const std::size_t epochs = config.get_size(adapters ? "adapter.epochs" : "final.epochs");
        for (double lr : lrs) grid.push_back(stage_config(config, lr, epochs, supervised, 13));
        ro.phase = "final";
        const ModelGraph start = model;
        GridResult result = grid_search([&] { return start; }, grid, train, dev, vocab, ro,
                                        config.has("training.grid_threads") ? config.get_size("training.grid_threads")
                                                                            : 1);
        log.append(result.best_log);
        model = std::move(result.best);
        run.stage("final", model_hash(model), t);
        run.write("grid.tsv", grid_table(result.table));

        const auto violations = audit_two_phase(log);
        std::string audit;
        for (const auto& v : violations) audit += v + "\n";
        run.write("audit.txt", audit.empty() ? "ok\n" : audit);
        if (!violations.empty()) throw DataError("provenance audit failed: " + violations.front());

        const std::string hash = model_hash(model);
        std::vector<EvalReport> reports;
        const auto dev_pred = predict(model, dev, vocab, ro.architecture, tok, ro.eval_threads);
        reports.push_back(report_for(config, lang, "dev", dev_pred, gold_scores(dev), hash));
        dev_score = reports.back().spearman;
        if (test && !test->pairs.empty()) {
          const auto test_pred = predict(model, *test, vocab, ro.architecture, tok, ro.eval_threads);
          reports.push_back(report_for(config, lang, "test", test_pred, gold_scores(*test), hash));
        }

        if (config.has("evaluation.cv") && config.get_bool("evaluation.cv")) {
          t = Clock::now();
          const TrainConfig cv_config = grid[result.best_index];
          RegressionOptions cro = ro;
          cro.phase = "cv";
          const CvResult cv = kfold_cv(train, config.get_size("evaluation.k"), seed, [&](const Corpus& tr, const Corpus& held) {
            ModelGraph m = start;
            train_regression(m, tr, nullptr, vocab, cv_config, cro);
            return predict(m, held, vocab, cro.architecture, tok, cro.eval_threads);
          });
          std::string cv_out = "fold\tn\tspearman_x100\n";
          for (std::size_t i = 0; i < cv.per_fold.size(); ++i) {
            cv_out += std::to_string(i + 1) + "\t" + std::to_string(cv.folds[i].size()) + "\t" +
                      format_x100(cv.per_fold[i]) + "\n";
          }
          cv_out += "mean\t-\t" + format_x100(cv.mean) + "\nstddev\t-\t" + format_x100(cv.stddev) + "\n";
          run.write("cv.tsv", cv_out);
          run.stage("cv", "", t);
        }

        save_checkpoint(model, run.path("model.ckpt"));
        if (adapters) {
          save_adapter(model, AdapterKind::Language, run.path("language-adapter.ckpt"));
          save_adapter(model, AdapterKind::Task, run.path("task-adapter.ckpt"));
        }
        run.write("train_log.tsv", log.serialize());
        run.write("scores.tsv", std::string("split\tspearman\n") + "dev\t" +
                                    (dev_score ? fmt_real(*dev_score) : std::string("NA")) + "\n");
        out << write_reports(run, reports);
        for (const auto& w : log.warnings) out << "warning: " << w << "\n";
        return 0;
      },
      &outcome.dir);
  outcome.dev_spearman = ran ? dev_score : read_dev_score(outcome.dir);
  return outcome;
}

std::string corpus_summary_row(const std::string& key, const std::string& path, const Corpus& c) {
  std::string prov;
  for (const auto& [k, n] : c.provenance_counts()) prov += (prov.empty() ? "" : ",") + k + "=" + std::to_string(n);
  return key + "\t" + path + "\t" + c.language + "\t" + std::string(to_string(c.split)) + "\t" +
         std::to_string(c.size()) + "\t" + (prov.empty() ? "-" : prov) + "\n";
}

}  // namespace

// Shared helpers -------------------------------------------------------------

std::optional<Corpus> load_split(const Config& config, const std::string& language, Split split) {
  const auto path = config.get(data_key(language, split));
  if (!path) return std::nullopt;
  if (split == Split::Unlabeled) return load_unlabeled(*path, language);
  return load_labeled(*path, language, split);
}

Vocabulary experiment_vocab(const Config& config) {
  if (auto v = config.get("model.vocab")) return Vocabulary::parse(read_text(*v));
  std::vector<Corpus> corpora;
  for (const auto& [key, path] : config.section("data")) {
    const auto dot = key.rfind('.');
    if (dot == std::string::npos || path.empty()) continue;
    const std::string lang = key.substr(0, dot), split = key.substr(dot + 1);
    if (split == "train") corpora.push_back(load_labeled(path, lang, Split::Train));
    if (split == "unlabeled") corpora.push_back(load_unlabeled(path, lang));
  }
  for (const auto& [key, path] : config.section("augmented")) {
    const auto dot = key.rfind('.');
    if (dot == std::string::npos || path.empty()) continue;
    corpora.push_back(load_labeled(path, key.substr(0, dot), Split::Train));
  }
  if (corpora.empty()) throw UsageError("no training or unlabeled data configured to build a vocabulary from");
  return build_vocab(corpora, config.get_size("model.vocab_min_freq"), config.get_size("model.vocab_max_size"),
                     tokenize_options(config));
}

EncoderConfig encoder_config(const Config& config, std::size_t vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  c.d_model = config.get_size("model.d_model");
  c.n_layers = config.get_size("model.n_layers");
  c.n_heads = config.get_size("model.n_heads");
  c.d_ff = config.get_size("model.d_ff");
  c.max_len = config.get_size("model.max_len");
  c.adapter_bottleneck = config.get_size("model.adapter_bottleneck");
  c.dropout = config.get_double("model.dropout");
  c.seed = config.get_u64("global.seed");
  validate(c);
  return c;
}

TokenizeOptions tokenize_options(const Config& config) {
  TokenizeOptions t;
  if (config.has("model.lowercase")) t.lowercase = config.get_bool("model.lowercase");
  if (config.has("model.strip_punct")) t.strip_punct = config.get_bool("model.strip_punct");
  return t;
}

std::vector<Band> parse_bands(const std::vector<std::string>& edges) {
  if (edges.empty()) return default_bands();
  std::vector<double> e;
  for (const auto& s : edges) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw UsageError("bad band edge '" + s + "'");
    e.push_back(v);
  }
  if (e.size() < 2) throw UsageError("evaluation.bands needs at least two edges");
  std::vector<Band> bands;
  for (std::size_t i = 0; i + 1 < e.size(); ++i) bands.push_back({e[i], e[i + 1]});
  return bands;
}

// Commands -------------------------------------------------------------------

int cmd_ingest(const Config& config, const CommandOptions& options, std::ostream& out) {
  return with_run("ingest", config, options, out, [&](Run& run) {
    std::string summary = "key\tpath\tlanguage\tsplit\tsize\tprovenance\n";
    std::size_t files = 0;
    for (const auto& [key, path] : config.section("data")) {
      const auto dot = key.rfind('.');
      if (dot == std::string::npos || path.empty()) continue;
      const std::string lang = key.substr(0, dot);
      const Split split = parse_split(key.substr(dot + 1));
      const Corpus c = *load_split(config, lang, split);
      summary += corpus_summary_row("data." + key, path, c);
      run.write(lang + "." + std::string(to_string(split)) + ".tsv",
                split == Split::Unlabeled ? serialize_unlabeled(c) : serialize_labeled(c));
      ++files;
    }
    for (const auto& [key, path] : config.section("augmented")) {
      const auto dot = key.rfind('.');
      if (dot == std::string::npos || path.empty()) continue;
      summary += corpus_summary_row("augmented." + key, path, load_labeled(path, key.substr(0, dot), Split::Train));
      ++files;
    }
    if (files == 0) throw UsageError("nothing to ingest: no data.<language>.<split> keys configured");
    const Vocabulary vocab = experiment_vocab(config);
    run.write("vocab.txt", vocab.serialize());
    run.write("summary.tsv", summary);
    out << summary << "vocabulary: " << vocab.size() << " tokens\n";
    return 0;
  });
}

int cmd_augment(const Config& config, const CommandOptions& options, std::ostream& out) {
  return with_run("augment", config, options, out, [&](Run& run) {
    const auto targets = config.get_list("augmentation.targets");
    if (targets.empty()) throw UsageError("missing configuration key 'augmentation.targets'");
    const auto sources = config.get_list("augmentation.sources");
    if (sources.empty()) throw UsageError("augmentation.sources lists nothing to translate");
    const std::size_t in_flight = config.get_size("augmentation.in_flight");

    std::optional<Corpus> english;
    std::optional<std::vector<RawPair>> stsb;
    for (const auto& s : sources) {
      if (s == "semrel") {
        english = load_labeled(require_path(config, "data.eng.train"), "eng", Split::Train);
      } else if (s == "stsb") {
        stsb = load_stsb(require_path(config, "data.stsb"));
      } else {
        throw UsageError("augmentation.sources entries must be semrel or stsb, got '" + s + "'");
      }
    }

    std::unique_ptr<TranslationClient> client;
    const std::string kind = config.get_or("augmentation.client", "mock");
    if (kind == "mock") {
      std::vector<Corpus> corpora;
      if (english) corpora.push_back(*english);
      if (stsb) {
        Corpus c;
        c.language = "eng";
        for (const auto& p : *stsb) c.pairs.push_back({p.id, p.sentence1, p.sentence2, 0.0, Provenance::Original});
        corpora.push_back(std::move(c));
      }
      const Vocabulary v = build_vocab(corpora, 1, static_cast<std::size_t>(-1), {false, false});
      std::vector<std::string> tokens(v.tokens().begin() + special::kCount, v.tokens().end());
      client = std::make_unique<MockTranslator>(config.get_u64("augmentation.mock_seed"), std::move(tokens), "eng",
                                                config.get_size("augmentation.max_batch"));
    } else if (kind == "http") {
      RetryPolicy retry;
      if (config.has("augmentation.retries")) retry.retries = static_cast<int>(config.get_size("augmentation.retries"));
      if (config.has("augmentation.backoff_ms")) {
        retry.initial_backoff = std::chrono::milliseconds(config.get_size("augmentation.backoff_ms"));
      }
      client = std::make_unique<HttpTranslator>(config.require("augmentation.endpoint"),
                                                config.get_size("augmentation.max_batch"), retry);
    } else {
      throw UsageError("augmentation.client must be mock or http, got '" + kind + "'");
    }

    std::string listing = "file\tlanguage\tprovenance\tpairs\n";
    auto emit = [&](const std::map<std::string, Corpus>& corpora, const std::string& tag) {
      for (const auto& [lang, corpus] : corpora) {
        const std::string file = tag + "-" + lang + ".tsv";
        run.write(file, serialize_labeled(corpus));
        listing += run.path(file) + "\t" + lang + "\t" + tag + "\t" + std::to_string(corpus.pairs.size()) + "\n";
      }
    };
    auto t = Clock::now();
    if (english) {
      emit(augment_semrel(*english, targets, *client, in_flight), "semrel-mt");
      run.stage("semrel", "", t);
    }
    t = Clock::now();
    if (stsb) {
      emit(augment_stsb(*stsb, targets, *client, in_flight), "stsb-mt");
      run.stage("stsb", "", t);
    }
    run.write("files.tsv", listing);
    out << listing;
    return 0;
  });
}

int cmd_tapt(const Config& config, const CommandOptions& options, std::ostream& out) {
  return with_run("tapt", config, options, out, [&](Run& run) {
    const std::string lang = config.require("global.language");
    const Corpus unlabeled = require_split(config, lang, Split::Unlabeled);
    const Vocabulary vocab = experiment_vocab(config);
    run.write("vocab.txt", vocab.serialize());
    const bool adapters = adapter_mode(config);

    auto t = Clock::now();
    ModelGraph model = base_model(config, vocab);
    model.set_config_hash(config.hash());
    run.stage("build", model_hash(model), t);
    if (adapters) {
      if (model.has_adapter(AdapterKind::Task)) detach_adapter(model, AdapterKind::Task);
      if (model.has_adapter(AdapterKind::Language)) detach_adapter(model, AdapterKind::Language);
      AdapterBundle start = config.has("adapter.language")
                                ? load_adapter(config.require("adapter.language"))
                                : make_adapter(model.config(), AdapterKind::Language, lang, config.get_u64("global.seed"));
      start.id = lang;
      attach_adapter(model, start);
    }
    t = Clock::now();
    const TrainConfig tc =
        stage_config(config, config.get_double("tapt.learning_rate"), config.get_size("tapt.epochs"),
                     adapters ? TrainMode::LanguageAdapterOnly : TrainMode::Full, 11);
    const TrainLog log = tapt(model, unlabeled, vocab, tc, {}, "tapt", tokenize_options(config));
    run.stage("tapt", model_hash(model), t);
    save_checkpoint(model, run.path("model.ckpt"));
    if (adapters) save_adapter(model, AdapterKind::Language, run.path("language-adapter.ckpt"));
    run.write("train_log.tsv", log.serialize());
    out << log.serialize();
    return 0;
  });
}

int cmd_train(const Config& config, const CommandOptions& options, std::ostream& out) {
  train_pipeline(config, options, out);
  return 0;
}

int cmd_train_grid(const Config& config, const CommandOptions& options, std::ostream& out) {
  std::string table = "tapt\twarmup\tdev_spearman_x100\trun\n";
  for (const char* tapt_on : {"false", "true"}) {
    for (const char* source : {"none", "semrel", "stsb"}) {
      Config c = config;
      c.set("tapt.enabled", tapt_on);
      c.set("warmup.source", source);
      std::ostringstream sink;
      const TrainOutcome o = train_pipeline(c, options, sink);
      table += std::string(tapt_on) + "\t" + source + "\t" + format_x100(o.dev_spearman) + "\t" + o.dir.string() + "\n";
    }
  }
  const fs::path summary = run_root(config) / (run_id("grid", config) + ".tsv");
  write_text(summary.string(), table);
  out << table << "summary: " << summary.string() << "\n";
  return 0;
}

int cmd_transfer(const Config& config, const CommandOptions& options, std::ostream& out) {
  return with_run("transfer", config, options, out, [&](Run& run) {
    const std::string target = config.require("transfer.target");
    const SelectionStrategy strategy = parse_selection_strategy(config.require("transfer.strategy"));
    const auto candidate_paths = config.section("transfer.candidate");
    if (candidate_paths.empty()) throw UsageError("no transfer.candidate.<language> checkpoints configured");

    const std::string adapter_type = config.get_or("transfer.adapter_type", "base");
    std::vector<std::pair<std::string, AdapterBundle>> target_adapters;
    if (adapter_type != "base" && adapter_type != "tapt" && adapter_type != "both") {
      throw UsageError("transfer.adapter_type must be base, tapt or both, got '" + adapter_type + "'");
    }
    for (const char* label : {"base", "tapt"}) {
      if (adapter_type == label || adapter_type == "both") {
        AdapterBundle b = load_adapter(config.require(std::string("transfer.adapter.") + label));
        if (b.kind != AdapterKind::Language) throw DataError(std::string("transfer.adapter.") + label + " is not a language adapter");
        if (b.id != target) {
          throw DataError(std::string("transfer.adapter.") + label + " belongs to '" + b.id + "', not the target '" +
                          target + "'");
        }
        target_adapters.emplace_back(label, std::move(b));
      }
    }

    auto t = Clock::now();
    std::vector<TransferCandidate> candidates;
    std::optional<Vocabulary> vocab;
    for (const auto& [lang, path] : candidate_paths) {
      candidates.push_back({lang, load_checkpoint(path)});
      Vocabulary v = vocab_beside(path, config);
      if (vocab && !(v == *vocab)) throw DataError("candidate " + path + " uses a different vocabulary");
      vocab = std::move(v);
    }
    run.write("vocab.txt", vocab->serialize());
    const TokenizeOptions tok = tokenize_options(config);
    const auto dev = load_split(config, target, Split::Dev);
    const auto test = load_split(config, target, Split::Test);

    SourceRanking ranking;
    if (strategy == SelectionStrategy::DevPerformance) {
      if (!dev) throw UsageError("dev_performance selection needs " + data_key(target, Split::Dev));
      ranking = dev_performance_ranking(candidates, target_adapters.front().second, *dev, *vocab, tok);
    } else if (strategy == SelectionStrategy::LinguisticDistance) {
      std::vector<std::string> langs;
      for (const auto& c : candidates) langs.push_back(c.source_language);
      ranking = rank_by_distance(langs, target, DistanceTable::load(config.require("transfer.distances")));
    } else {
      std::vector<std::pair<std::string, Corpus>> trains;
      for (const auto& c : candidates) trains.emplace_back(c.source_language, require_split(config, c.source_language, Split::Train));
      if (!test && !dev) throw UsageError("token_overlap selection needs target test or dev data");
      ranking = rank_by_overlap(trains, test ? *test : *dev, tok);
    }
    if (ranking.chosen.empty()) throw DataError("no usable transfer source for '" + target + "'");
    run.stage("select", "", t);

    std::string table = "strategy\trank\tlanguage\tvalue\tchosen\n";
    for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
      const auto& e = ranking.entries[i];
      table += std::string(to_string(ranking.strategy)) + "\t" + std::to_string(i + 1) + "\t" + e.language + "\t" +
               (e.value ? fmt_real(*e.value) : std::string("NA")) + "\t" + (e.language == ranking.chosen ? "*" : "") +
               "\n";
    }
    run.write("ranking.tsv", table);
    out << table;
    for (const auto& w : ranking.warnings) out << "warning: " << w << "\n";

    const auto chosen = std::find_if(candidates.begin(), candidates.end(),
                                     [&](const TransferCandidate& c) { return c.source_language == ranking.chosen; });
    enforce_leakage_guard(chosen->model.lineage(), target);

    std::vector<EvalReport> reports;
    for (const auto& [label, bundle] : target_adapters) {
      t = Clock::now();
      const ModelGraph composed = compose_for_target(chosen->model, bundle);
      const std::string hash = model_hash(composed);
      const std::string system = "transfer-" + ranking.chosen + "-" + label;
      for (const auto* corpus : {dev ? &*dev : nullptr, test ? &*test : nullptr}) {
        if (!corpus || corpus->pairs.empty()) continue;
        const auto pred = zero_shot_predict(composed, target, *corpus, *vocab, false, tok);
        reports.push_back(report_for(config, target, system + "-" + std::string(to_string(corpus->split)), pred,
                                     gold_scores(*corpus), hash));
      }
      run.stage("zero-shot-" + label, hash, t);
    }
    if (!reports.empty()) out << write_reports(run, reports);
    return 0;
  });
}

int cmd_baseline(const Config& config, const CommandOptions& options, std::ostream& out) {
  return with_run("baseline", config, options, out, [&](Run& run) {
    const std::string lang = config.require("global.language");
    const Split split = parse_split(config.get_or("evaluation.split", "dev"));
    const Corpus corpus = require_split(config, lang, split);
    const auto gold = gold_scores(corpus);
    auto systems = config.get_list("baseline.systems");
    if (systems.empty()) systems = {"overlap", "static", "contextual"};
    const TokenizeOptions tok = tokenize_options(config);

    std::vector<EvalReport> reports;
    for (const auto& system : systems) {
      auto t = Clock::now();
      if (system == "overlap") {
        const auto pred = word_overlap_baseline(corpus.pairs);
        reports.push_back(report_for(config, lang, "overlap", pred, gold, ""));
        run.stage("overlap", "", t);
      } else if (system == "static") {
        const std::string path = config.require("baseline.vectors");
        const auto pred = static_embedding_baseline(corpus.pairs, load_word_vectors(path), tok);
        std::vector<double> p, g;
        for (std::size_t i = 0; i < pred.size(); ++i) {
          if (pred[i]) {
            p.push_back(*pred[i]);
            g.push_back(gold[i]);
          }
        }
        EvalReport r = report_for(config, lang, "static", p, g, "");
        r.n_missing = pred.size() - p.size();
        r.n_pairs = pred.size();
        reports.push_back(std::move(r));
        run.stage("static", "", t);
      } else if (system == "contextual") {
        const Vocabulary vocab = experiment_vocab(config);
        const ModelGraph model = base_model(config, vocab);
        const std::string before = model_hash(model);
        const auto pred = contextual_zero_shot_baseline(model, corpus.pairs, vocab, tok);
        if (model_hash(model) != before) throw NumericError("contextual baseline changed model parameters");
        reports.push_back(report_for(config, lang, "contextual", pred, gold, before));
        run.stage("contextual", before, t);
      } else {
        throw UsageError("unknown baseline '" + system + "' (expected overlap, static or contextual)");
      }
    }
    out << write_reports(run, reports);
    return 0;
  });
}

int cmd_evaluate(const Config& config, const CommandOptions& options, std::ostream& out) {
  return with_run("evaluate", config, options, out, [&](Run& run) {
    const std::string path = config.require("evaluate.checkpoint");
    const ModelGraph model = load_checkpoint(path);
    const Vocabulary vocab = vocab_beside(path, config);
    const std::string lang = config.require("global.language");
    Corpus corpus;
    if (auto data = config.get("evaluate.data")) {
      corpus = load_labeled(*data, lang, Split::Test);
    } else {
      corpus = require_split(config, lang, parse_split(config.get_or("evaluation.split", "dev")));
    }
    auto t = Clock::now();
    const auto arch = parse_architecture(config.get_or("model.architecture", "cross"));
    const auto pred = predict(model, corpus, vocab, arch, tokenize_options(config));
    EvalReport r = report_for(config, lang, config.get_or("evaluate.system", "model"), pred, gold_scores(corpus),
                              model_hash(model));
    if (!model.config_hash().empty()) r.config_hash = model.config_hash();
    run.stage("evaluate", r.checkpoint_hash, t);
    std::string preds = "id\tprediction\tgold\n";
    for (std::size_t i = 0; i < pred.size(); ++i) {
      preds += corpus.pairs[i].id + "\t" + fmt_real(pred[i]) + "\t" + fmt_real(corpus.pairs[i].score) + "\n";
    }
    run.write("predictions.tsv", preds);
    out << write_reports(run, {r});
    return 0;
  });
}

int cmd_report(const Config& config, const CommandOptions&, std::ostream& out) {
  const fs::path root = run_root(config);
  if (!fs::is_directory(root)) throw UsageError("run root " + root.string() + " does not exist");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.tsv")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::string runs = "run\tcommand\tstatus\tconfig_hash\tstages\tseconds\n";
  std::string reports;
  std::string header;
  for (const auto& d : dirs) {
    const RunManifest m = RunManifest::parse(read_text((d / "manifest.tsv").string()));
    double total = 0.0;
    for (const auto& s : m.stages) total += s.seconds;
    runs += d.filename().string() + "\t" + m.command + "\t" + m.status + "\t" + m.config_hash + "\t" +
            std::to_string(m.stages.size()) + "\t" + fmt_seconds(total) + "\n";
    const fs::path rp = d / "report.tsv";
    if (!fs::exists(rp)) continue;
    const auto lines = lines_of(read_text(rp.string()));
    if (lines.empty()) continue;
    if (header.empty()) header = "run\t" + lines.front() + "\n";
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (!lines[i].empty()) reports += d.filename().string() + "\t" + lines[i] + "\n";
    }
  }
  write_text((root / "runs.tsv").string(), runs);
  write_text((root / "reports.tsv").string(), header + reports);
  out << runs;
  if (!reports.empty()) out << "\n" << header << reports;
  return 0;
}

}  // namespace aadam
