#include <openssl/sha.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "seed/seed.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

/// Flags shared by train and ablate.
struct RunOptions {
  std::string data;
  std::string dataset;
  std::string split;
  bool date_col = false;
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t patch_len = 16;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t knn_k = 0;
  std::string graph = "tanh";
  std::string variant = "full";
  double lambda = 0.1;
  std::size_t epochs = 10;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::size_t layers = 2;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  std::string out;
};

void add_run_flags(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--data", o.data, "CSV file: header row, one column per variable")->required();
  cmd->add_option("--dataset", o.dataset, "Dataset name; a known benchmark name selects its split ratio");
  cmd->add_option("--split", o.split, "Chronological split ratio train:val:test (default 7:1:2 or the benchmark's)");
  cmd->add_flag("--date-col", o.date_col, "First CSV column is a timestamp and is skipped");
  cmd->add_option("--lookback", o.lookback, "Lookback length L")->capture_default_str();
  cmd->add_option("--horizon", o.horizon, "Forecast horizon T")->capture_default_str();
  cmd->add_option("--patch-len", o.patch_len, "Patch length P")->capture_default_str();
  cmd->add_option("--d-model", o.d_model, "Model width D")->capture_default_str();
  cmd->add_option("--heads", o.heads, "Attention and graph heads (must divide D)")->capture_default_str();
  cmd->add_option("--knn-k", o.knn_k, "Neighbours kept per variable (0 = max(2, ceil(C/2)))")->capture_default_str();
  cmd->add_option("--graph", o.graph, "Signed graph normalization")
      ->check(CLI::IsMember({"tanh", "softmax"}))
      ->capture_default_str();
  cmd->add_option("--variant", o.variant, "Model variant")
      ->check(CLI::IsMember({"full", "wo_tattn", "wo_cse", "re_s1", "re_s2", "re_f1", "re_f2", "re_f3", "re_c1",
                             "re_c2"}))
      ->capture_default_str();
  cmd->add_option("--lambda", o.lambda, "Weight of the spectral-entropy loss")->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "Maximum training epochs (0 = evaluate the initialized model)")
      ->capture_default_str();
  cmd->add_option("--batch", o.batch, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--layers", o.layers, "Number of stacked layers")->capture_default_str();
  cmd->add_option("--patience", o.patience, "Early-stopping patience in epochs")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", o.out, "Output directory")->required();
}

std::string hex(const unsigned char* digest, std::size_t n) {
  std::ostringstream os;
  for (std::size_t i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

/// Content hash in the form git uses for blobs.
std::string git_sha1(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  return hex(digest, SHA_DIGEST_LENGTH);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw seed::DataError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << content)) throw seed::DataError("cannot write '" + path.string() + "'");
}

/// Validates SEED_NUM_THREADS; computation is single-threaded, so this is an upper bound only.
std::size_t thread_cap() {
  const char* env = std::getenv("SEED_NUM_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw seed::ConfigError("SEED_NUM_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

struct Prepared {
  seed::Dataset raw;
  seed::Dataset data;  // standardized with training statistics
  seed::SplitRatio ratio;
  seed::Splits splits;
};

Prepared prepare(const std::string& path, const std::string& name, const std::string& split, bool date_col,
                 std::size_t lookback, std::size_t horizon) {
  Prepared p;
  p.raw = seed::load_csv(path, {.date_col = date_col, .name = name});
  if (p.raw.rejected_rows > 0) {
    std::cerr << "note: skipped " << p.raw.rejected_rows << " rows with missing or non-finite values\n";
  }
  p.ratio = split.empty() ? p.raw.split_ratio : seed::SplitRatio::parse(split);
  p.splits = seed::split(p.raw, p.ratio, lookback, horizon);
  p.data = seed::Standardizer::fit(p.raw, p.splits.train).apply(p.raw);
  return p;
}

seed::ModelConfig model_config(const RunOptions& o, std::size_t n_vars) {
  seed::ModelConfig c;
  c.n_vars = n_vars;
  c.lookback = o.lookback;
  c.horizon = o.horizon;
  c.patch_len = o.patch_len;
  c.d_model = o.d_model;
  c.attn_heads = o.heads;
  c.gcn_heads = o.heads;
  c.knn_k = o.knn_k;
  c.graph_variant = seed::parse_graph_variant(o.graph);
  c.lambda = o.lambda;
  c.n_layers = o.layers;
  c.variant = seed::parse_variant(o.variant);
  c.seed = o.seed;
  c.validate();
  return c;
}

seed::TrainConfig train_config(const RunOptions& o) {
  seed::TrainConfig t;
  t.epochs = o.epochs;
  t.batch_size = o.batch;
  t.learning_rate = o.lr;
  t.lambda = o.lambda;
  t.patience = o.patience;
  t.seed = o.seed;
  t.validate();
  return t;
}

ordered_json segment_json(const seed::Segment& s) {
  return {{"context_begin", s.context_begin}, {"begin", s.begin}, {"end", s.end}};
}

int cmd_train(const RunOptions& o) {
  const std::size_t threads = thread_cap();
  const auto p = prepare(o.data, o.dataset, o.split, o.date_col, o.lookback, o.horizon);
  const auto mc = model_config(o, p.raw.cols);
  const auto tc = train_config(o);

  seed::SeedModel model(mc);
  const auto baseline = seed::persistence_metrics(p.data, p.splits.test, mc.lookback, mc.horizon);
  const auto result = seed::train(model, p.data, p.splits, tc, [](const seed::EpochLog& e) {
    std::cerr << "epoch " << e.epoch << "  train_loss " << e.train_loss << "  val_mse " << e.val_mse << '\n';
  });

  fs::create_directories(o.out);
  const fs::path out(o.out);
  seed::save_checkpoint((out / "model.ckpt").string(), model);
  const auto metrics = seed::metrics_json(result.test);
  write_file(out / "metrics.json", metrics.dump(2) + "\n");

  ordered_json config;
  config["model"] = nlohmann::json(mc);
  config["train"] = nlohmann::json(tc);
  config["dataset"] = {{"name", p.raw.name},
                       {"path", fs::absolute(o.data).string()},
                       {"sha1", git_sha1(read_file(o.data))},
                       {"rows", p.raw.rows},
                       {"columns", p.raw.columns},
                       {"rejected_rows", p.raw.rejected_rows},
                       {"date_col", o.date_col},
                       {"split", p.ratio.to_string()}};
  ordered_json manifest;
  manifest["config_hash"] = git_sha1(config.dump());
  manifest["config"] = config;
  manifest["segments"] = {{"train", segment_json(p.splits.train)},
                          {"val", segment_json(p.splits.val)},
                          {"test", segment_json(p.splits.test)}};
  manifest["result"] = {{"best_epoch", result.best_epoch},
                        {"best_val_mse", result.best_val_mse},
                        {"epochs_run", result.test.epochs},
                        {"persistence_test_mse", baseline.mse},
                        {"parameters", seed::count_params(model)}};
  manifest["threads"] = threads;
  manifest["output_dir"] = fs::absolute(out).string();
  write_file(out / "manifest.json", manifest.dump(2) + "\n");

  std::cout << metrics.dump(2) << '\n';
  return 0;
}

int cmd_eval(const std::string& dir, const std::string& segment, std::optional<std::string> data) {
  const fs::path out(dir);
  const auto ckpt = out / "model.ckpt";
  if (!fs::exists(ckpt)) throw seed::DataError("no checkpoint at '" + ckpt.string() + "'");
  if (segment != "train" && segment != "val" && segment != "test") {
    throw seed::ConfigError("--segment must be train, val or test");
  }
  const auto manifest = nlohmann::json::parse(read_file((out / "manifest.json").string()));
  const auto& ds = manifest.at("config").at("dataset");
  const auto model = seed::load_checkpoint(ckpt.string());
  const auto stored = manifest.at("config").at("model").get<seed::ModelConfig>();
  if (nlohmann::json(stored) != nlohmann::json(model.config())) {
    throw seed::ConfigError("checkpoint config does not match the run manifest");
  }
  const auto& mc = model.config();
  const auto p = prepare(data.value_or(ds.at("path").get<std::string>()), ds.at("name").get<std::string>(),
                         ds.at("split").get<std::string>(), ds.at("date_col").get<bool>(), mc.lookback, mc.horizon);
  if (p.raw.cols != mc.n_vars) {
    throw seed::ConfigError("data has " + std::to_string(p.raw.cols) + " variables, checkpoint expects " +
                            std::to_string(mc.n_vars));
  }
  const seed::Segment& seg =
      segment == "train" ? p.splits.train : segment == "val" ? p.splits.val : p.splits.test;
  auto report = seed::evaluate(model, p.data, seg);
  report.epochs = manifest.at("result").at("epochs_run").get<std::size_t>();
  const auto metrics = seed::metrics_json(report);
  write_file(out / ("eval_" + segment + ".json"), metrics.dump(2) + "\n");
  std::cout << metrics.dump(2) << '\n';
  return 0;
}

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_file(out, text);
  }
}

struct AnalyzeOptions {
  bool synthetic = false;
  std::string alphas = "0:1:0.1";
  std::size_t period = 24;
  std::size_t length = 512;
  std::uint64_t seed = 0;
  std::string data;
  bool date_col = false;
  std::size_t max_lag = 0;
  std::string out;
};

int cmd_analyze(const AnalyzeOptions& o) {
  std::ostringstream csv;
  if (o.synthetic) {
    std::vector<double> grid;
    {
      double lo = 0, hi = 0, step = 0;
      char c1 = 0, c2 = 0;
      std::istringstream is(o.alphas);
      if (!(is >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !is.eof()) {
        throw seed::ConfigError("--alphas must look like lo:hi:step, got '" + o.alphas + "'");
      }
      grid = seed::alpha_grid(lo, hi, step);
    }
    seed::SyntheticSpec spec{.alpha = 0.0, .period = o.period, .length = o.length, .seed = o.seed};
    csv << "alpha,acf_peak,spectral_entropy\n";
    for (const auto& r : seed::acf_entropy_study(grid, spec, o.max_lag)) {
      csv << csv_number(r.alpha) << ',' << csv_number(r.acf_peak) << ',' << csv_number(r.spectral_entropy) << '\n';
    }
  } else {
    const auto ds = seed::load_csv(o.data, {.date_col = o.date_col, .name = ""});
    if (ds.rows < 2) throw seed::DataError("analyze needs at least 2 rows");
    const std::size_t max_lag = o.max_lag > 0 ? std::min(o.max_lag, ds.rows - 1) : std::min<std::size_t>(96, ds.rows - 1);
    csv << "variable,spectral_entropy,acf_peak\n";
    std::vector<double> column(ds.rows);
    for (std::size_t c = 0; c < ds.cols; ++c) {
      for (std::size_t t = 0; t < ds.rows; ++t) column[t] = ds.at(t, c);
      double entropy = 0.0, peak = 0.0;
      try {
        entropy = seed::spectral_entropy(column);
        peak = seed::acf_peak(column, max_lag);
      } catch (const seed::DegenerateInputError&) {
        std::cerr << "note: column '" << ds.columns[c] << "' is constant; spectral entropy and ACF peak set to 0\n";
        entropy = 0.0;
        peak = 0.0;
      }
      csv << ds.columns[c] << ',' << csv_number(entropy) << ',' << csv_number(peak) << '\n';
    }
  }
  emit(o.out, csv.str());
  return 0;
}

int cmd_ablate(RunOptions o) {
  thread_cap();
  const auto p = prepare(o.data, o.dataset, o.split, o.date_col, o.lookback, o.horizon);
  const auto tc = train_config(o);
  std::ostringstream csv;
  csv << "variant,mse,mae\n";
  for (seed::Variant v : seed::kAllVariants) {
    o.variant = seed::to_string(v);
    seed::SeedModel model(model_config(o, p.raw.cols));
    const auto r = seed::train(model, p.data, p.splits, tc);
    std::cerr << o.variant << "  test_mse " << r.test.mse << "  test_mae " << r.test.mae << '\n';
    csv << o.variant << ',' << csv_number(r.test.mse) << ',' << csv_number(r.test.mae) << '\n';
  }
  fs::create_directories(o.out);
  write_file(fs::path(o.out) / "ablation.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

struct SynthOptions {
  std::string kind = "mixed";
  std::size_t length = 4000;
  std::size_t channels = 8;
  double noise = 0.0;
  std::uint64_t seed = 0;
  bool date_col = false;
  std::string out;
};

int cmd_synth(const SynthOptions& o) {
  seed::SynthSpec spec;
  spec.kind = o.kind == "sine" ? seed::SynthKind::sine : o.kind == "noise" ? seed::SynthKind::noise : seed::SynthKind::mixed;
  spec.length = o.length;
  spec.channels = o.channels;
  spec.noise = o.noise;
  spec.seed = o.seed;
  const auto ds = seed::make_synthetic_dataset(spec);
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  seed::save_csv(o.out, ds, o.date_col);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral-entropy-guided multivariate forecaster"};
  app.require_subcommand(1);

  RunOptions train_opts;
  auto* train = app.add_subcommand("train", "Train a model; writes model.ckpt, metrics.json and manifest.json");
  add_run_flags(train, train_opts);

  std::string eval_dir, eval_segment = "test";
  std::optional<std::string> eval_data;
  auto* eval = app.add_subcommand("eval", "Evaluate a trained run directory on one split");
  eval->add_option("--out", eval_dir, "Run directory written by train")->required();
  eval->add_option("--segment", eval_segment, "Split to evaluate: train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  eval->add_option("--data", eval_data, "CSV file (default: the path recorded at training time)");

  AnalyzeOptions analyze_opts;
  auto* analyze = app.add_subcommand("analyze", "ACF peak and spectral entropy, synthetic study or per variable");
  auto* synthetic_flag = analyze->add_flag("--synthetic", analyze_opts.synthetic, "Run the noise-mixture study");
  auto* data_opt = analyze->add_option("--data", analyze_opts.data, "CSV file; one row per variable");
  synthetic_flag->excludes(data_opt);
  analyze->add_option("--alphas", analyze_opts.alphas, "Noise-share grid lo:hi:step")->capture_default_str();
  analyze->add_option("--period", analyze_opts.period, "Sinusoid period")->capture_default_str();
  analyze->add_option("--length", analyze_opts.length, "Series length")->capture_default_str();
  analyze->add_option("--seed", analyze_opts.seed, "Random seed")->capture_default_str();
  analyze->add_flag("--date-col", analyze_opts.date_col, "First CSV column is a timestamp and is skipped");
  analyze->add_option("--max-lag", analyze_opts.max_lag, "Largest ACF lag (0 = 2*period, or 96 for data)")
      ->capture_default_str();
  analyze->add_option("--out", analyze_opts.out, "Output CSV (default stdout)");

  RunOptions ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "Train every variant with one seed; writes ablation.csv");
  add_run_flags(ablate, ablate_opts);

  SynthOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "Write a synthetic multivariate dataset as CSV");
  synth->add_option("--kind", synth_opts.kind, "sine, mixed (half sine, half noise) or noise")
      ->check(CLI::IsMember({"sine", "mixed", "noise"}))
      ->capture_default_str();
  synth->add_option("--length", synth_opts.length, "Rows")->capture_default_str();
  synth->add_option("--channels", synth_opts.channels, "Variables")->capture_default_str();
  synth->add_option("--noise", synth_opts.noise, "Noise sd added to periodic channels")->capture_default_str();
  synth->add_option("--seed", synth_opts.seed, "Random seed")->capture_default_str();
  synth->add_flag("--date-col", synth_opts.date_col, "Prepend an integer date column");
  synth->add_option("--out", synth_opts.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (analyze->parsed() && !analyze_opts.synthetic && analyze_opts.data.empty()) {
    std::cerr << "error: analyze needs --synthetic or --data\n";
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(train_opts);
    if (eval->parsed()) return cmd_eval(eval_dir, eval_segment, eval_data);
    if (analyze->parsed()) return cmd_analyze(analyze_opts);
    if (ablate->parsed()) return cmd_ablate(ablate_opts);
    if (synth->parsed()) return cmd_synth(synth_opts);
  } catch (const seed::DivergenceError& e) {
    std::cerr << "error: training diverged: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
