#include "csu/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "csu/analysis.hpp"
#include "csu/random.hpp"

namespace fs = std::filesystem;

namespace csu {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw ConfigError("'" + key + "': expected a number, got '" + text + "'");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError("'" + key + "': expected a nonnegative integer, got '" + text + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + text + "'");
}

std::string loss_label(const LossSelector& loss) {
  if (const auto* b = std::get_if<BaselineConfig>(&loss)) {
    if (b->kind == BaselineKind::RHO_DC) return "RHO_DC_" + ratio_label(b->rho);
    if (b->kind == BaselineKind::BOOTSTRAP)
      return "BOOTSTRAP_" + ratio_label(b->bootstrap_beta);
  }
  return loss_name(loss);
}

LossSelector parse_loss(const std::string& token, const BaselineConfig& defaults) {
  const auto colon = token.find(':');
  const std::string name = trim(token.substr(0, colon));
  if (name == "CSU") {
    if (colon != std::string::npos) throw ConfigError("CSU takes no parameter");
    return CsuObjective{};
  }
  BaselineConfig cfg = defaults;
  try {
    cfg.kind = parse_baseline_kind(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train.losses: ") + e.what());
  }
  if (colon != std::string::npos) {
    const double v = to_double("train.losses", token.substr(colon + 1));
    if (cfg.kind == BaselineKind::RHO_DC)
      cfg.rho = v;
    else if (cfg.kind == BaselineKind::BOOTSTRAP)
      cfg.bootstrap_beta = v;
    else
      throw ConfigError("train.losses: " + name + " takes no inline parameter");
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train.losses: ") + e.what());
  }
  return cfg;
}

std::vector<std::vector<int>> parse_confusion_map(const std::string& text, std::size_t C) {
  std::vector<std::vector<int>> map(C);
  for (const auto& entry : split_list(text, ';')) {
    const auto colon = entry.find(':');
    if (colon == std::string::npos)
      throw ConfigError("corruption.confusion_map: expected 'class: targets', got '" + entry + "'");
    const auto from = to_u64("corruption.confusion_map", entry.substr(0, colon));
    if (from >= C) throw ConfigError("corruption.confusion_map: class out of range");
    std::stringstream ss(entry.substr(colon + 1));
    std::string tok;
    while (ss >> tok) map[from].push_back(static_cast<int>(to_u64("corruption.confusion_map", tok)));
  }
  return map;
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

void require_file(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw std::runtime_error("missing upstream artifact " + path.string() + "; run `csu_lab " +
                             producer + "` with the same config first");
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void log(const CommandOptions& options, const std::string& line) {
  static std::mutex m;
  if (!options.verbose) return;
  std::lock_guard lock(m);
  std::cerr << line << '\n';
}

struct KindRatio {
  CorruptionKind kind;
  double ratio;
  std::uint64_t seed;
};

std::vector<KindRatio> corruption_cells(const ExperimentConfig& config) {
  std::vector<KindRatio> out;
  for (auto kind : config.corruption.kinds)
    for (double ratio : config.corruption.ratios)
      for (auto seed : config.seeds) out.push_back({kind, ratio, seed});
  return out;
}

fs::path checkpoint_path(const ExperimentConfig& config, const CellKey& cell) {
  return cell_dir(config, cell) / run_file_name(cell_hash(config, cell), cell.seed);
}

SplitBundles load_clean(const ExperimentConfig& config, std::uint64_t run_seed) {
  SplitBundles d;
  if (config.data.synthetic) {
    const fs::path dir = data_dir(config, run_seed);
    require_file(dir / "train.csv", "gen");
    require_file(dir / "valid.csv", "gen");
    require_file(dir / "test.csv", "gen");
    d.train = load_feature_csv(dir / "train.csv", Split::Train);
    d.valid = load_feature_csv(dir / "valid.csv", Split::Valid);
    d.test = load_feature_csv(dir / "test.csv", Split::Test);
  } else {
    d.train = load_feature_csv(config.data.train_csv, Split::Train);
    d.valid = load_feature_csv(config.data.valid_csv, Split::Valid);
    d.test = load_feature_csv(config.data.test_csv, Split::Test);
  }
  return d;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

void ExperimentConfig::validate() const {
  try {
    if (data.synthetic) {
      data.synth.validate();
    } else if (data.train_csv.empty() || data.valid_csv.empty() || data.test_csv.empty()) {
      throw ConfigError("data: csv source needs train_csv, valid_csv and test_csv");
    }
    if (corruption.kinds.empty()) throw ConfigError("corruption.kinds must not be empty");
    if (corruption.ratios.empty()) throw ConfigError("corruption.ratios must not be empty");
    CorruptionSpec probe;
    probe.soft_value = corruption.soft_value;
    probe.confusion_map = corruption.confusion_map;
    for (double r : corruption.ratios) {
      probe.ratio = r;
      probe.validate(corruption.confusion_map ? corruption.confusion_map->size()
                                              : data.synth.num_classes);
    }
    if (train.losses.empty()) throw ConfigError("train.losses must not be empty");
    train.base.validate();
    for (const auto& l : train.losses)
      if (const auto* b = std::get_if<BaselineConfig>(&l)) b->validate();
    if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
    std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size()) throw ConfigError("experiment.seeds must be distinct");
    std::set<double> unique_ratios(corruption.ratios.begin(), corruption.ratios.end());
    if (unique_ratios.size() != corruption.ratios.size())
      throw ConfigError("corruption.ratios must be distinct");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  o << "data.source=" << (data.synthetic ? "synthetic" : "csv") << '\n';
  if (data.synthetic) {
    const auto& s = data.synth;
    o << "data.num_classes=" << s.num_classes << '\n'
      << "data.feature_dim=" << s.feature_dim << '\n'
      << "data.train_per_class=" << s.train_per_class << '\n'
      << "data.valid_per_class=" << s.valid_per_class << '\n'
      << "data.test_per_class=" << s.test_per_class << '\n'
      << "data.noise_scale=" << fmt_double(s.noise_scale) << '\n'
      << "data.cooccurrence_prob=" << fmt_double(s.cooccurrence_prob) << '\n'
      << "data.seed=" << s.seed << '\n'
      << "data.reseed_per_run=" << (data.reseed_per_run ? "true" : "false") << '\n';
  } else {
    o << "data.train_csv=" << data.train_csv.string() << '\n'
      << "data.valid_csv=" << data.valid_csv.string() << '\n'
      << "data.test_csv=" << data.test_csv.string() << '\n';
  }
  o << "corruption.soft_value=" << fmt_double(corruption.soft_value) << '\n';
  if (corruption.confusion_map) {
    o << "corruption.confusion_map=";
    for (std::size_t c = 0; c < corruption.confusion_map->size(); ++c) {
      o << c << ':';
      for (int t : (*corruption.confusion_map)[c]) o << ' ' << t;
      o << ';';
    }
    o << '\n';
  }
  const auto& t = train.base;
  o << "train.learning_rate=" << fmt_double(t.learning_rate) << '\n'
    << "train.batch_size=" << t.batch_size << '\n'
    << "train.max_epochs=" << t.max_epochs << '\n'
    << "train.patience=" << t.patience << '\n'
    << "train.warmup_epochs=" << t.warmup_epochs << '\n'
    << "train.hidden_dim=" << t.hidden_dim << '\n';
  BaselineConfig defaults;
  for (const auto& l : train.losses)
    if (const auto* b = std::get_if<BaselineConfig>(&l); b && b->kind == BaselineKind::SCE)
      defaults = *b;
  o << "train.sce_alpha=" << fmt_double(defaults.sce_alpha) << '\n'
    << "train.sce_beta=" << fmt_double(defaults.sce_beta) << '\n';
  return o.str();
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig parse_config_text(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  static const std::map<std::string, std::set<std::string>> schema = {
      {"data",
       {"source", "num_classes", "feature_dim", "train_per_class", "valid_per_class",
        "test_per_class", "noise_scale", "cooccurrence_prob", "seed", "reseed_per_run",
        "train_csv", "valid_csv", "test_csv"}},
      {"corruption", {"kinds", "ratios", "soft_value", "confusion_map"}},
      {"train",
       {"learning_rate", "batch_size", "max_epochs", "patience", "warmup_epochs", "hidden_dim",
        "losses", "rho", "bootstrap_beta", "sce_alpha", "sce_beta"}},
      {"experiment", {"seeds", "output"}},
  };
  for (const auto& [section, body] : tree) {
    const auto it = schema.find(section);
    if (it == schema.end()) {
      if (body.empty())
        throw ConfigError("key '" + section + "' outside any section");
      throw ConfigError("unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key))
        throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
    }
  }

  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) return trim(*v);
    return std::nullopt;
  };

  ExperimentConfig c;
  if (auto v = get("data.source")) {
    if (*v == "synthetic")
      c.data.synthetic = true;
    else if (*v == "csv")
      c.data.synthetic = false;
    else
      throw ConfigError("data.source must be 'synthetic' or 'csv'");
  }
  auto& s = c.data.synth;
  if (auto v = get("data.num_classes")) s.num_classes = to_u64("data.num_classes", *v);
  if (auto v = get("data.feature_dim")) s.feature_dim = to_u64("data.feature_dim", *v);
  if (auto v = get("data.train_per_class")) s.train_per_class = to_u64("data.train_per_class", *v);
  if (auto v = get("data.valid_per_class")) s.valid_per_class = to_u64("data.valid_per_class", *v);
  if (auto v = get("data.test_per_class")) s.test_per_class = to_u64("data.test_per_class", *v);
  if (auto v = get("data.noise_scale")) s.noise_scale = to_double("data.noise_scale", *v);
  if (auto v = get("data.cooccurrence_prob"))
    s.cooccurrence_prob = to_double("data.cooccurrence_prob", *v);
  if (auto v = get("data.seed")) s.seed = to_u64("data.seed", *v);
  if (auto v = get("data.reseed_per_run")) c.data.reseed_per_run = to_bool("data.reseed_per_run", *v);
  if (auto v = get("data.train_csv")) c.data.train_csv = *v;
  if (auto v = get("data.valid_csv")) c.data.valid_csv = *v;
  if (auto v = get("data.test_csv")) c.data.test_csv = *v;

  if (auto v = get("corruption.kinds")) {
    c.corruption.kinds.clear();
    for (const auto& k : split_list(*v)) {
      try {
        c.corruption.kinds.push_back(parse_corruption_kind(k));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("corruption.kinds: ") + e.what());
      }
    }
  }
  if (auto v = get("corruption.ratios")) {
    c.corruption.ratios.clear();
    for (const auto& r : split_list(*v)) c.corruption.ratios.push_back(to_double("corruption.ratios", r));
  }
  if (auto v = get("corruption.soft_value"))
    c.corruption.soft_value = to_double("corruption.soft_value", *v);
  if (auto v = get("corruption.confusion_map"))
    c.corruption.confusion_map = parse_confusion_map(*v, s.num_classes);

  auto& t = c.train.base;
  if (auto v = get("train.learning_rate")) t.learning_rate = to_double("train.learning_rate", *v);
  if (auto v = get("train.batch_size")) t.batch_size = to_u64("train.batch_size", *v);
  if (auto v = get("train.max_epochs")) t.max_epochs = to_u64("train.max_epochs", *v);
  if (auto v = get("train.patience")) t.patience = to_u64("train.patience", *v);
  if (auto v = get("train.warmup_epochs")) t.warmup_epochs = to_u64("train.warmup_epochs", *v);
  if (auto v = get("train.hidden_dim")) t.hidden_dim = to_u64("train.hidden_dim", *v);
  BaselineConfig defaults;
  if (auto v = get("train.rho")) defaults.rho = to_double("train.rho", *v);
  if (auto v = get("train.bootstrap_beta"))
    defaults.bootstrap_beta = to_double("train.bootstrap_beta", *v);
  if (auto v = get("train.sce_alpha")) defaults.sce_alpha = to_double("train.sce_alpha", *v);
  if (auto v = get("train.sce_beta")) defaults.sce_beta = to_double("train.sce_beta", *v);
  if (auto v = get("train.losses")) {
    c.train.losses.clear();
    for (const auto& l : split_list(*v)) c.train.losses.push_back(parse_loss(l, defaults));
  } else {
    c.train.losses = {defaults, CsuObjective{}};
  }

  if (auto v = get("experiment.seeds")) {
    c.seeds.clear();
    for (const auto& k : split_list(*v)) c.seeds.push_back(to_u64("experiment.seeds", k));
  }
  if (auto v = get("experiment.output")) c.output_dir = *v;

  std::set<std::string> labels;
  for (const auto& l : c.train.losses)
    if (!labels.insert(loss_label(l)).second)
      throw ConfigError("train.losses lists '" + loss_label(l) + "' twice");

  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ExperimentConfig with_seed_offset(ExperimentConfig config, std::uint64_t offset) {
  for (auto& s : config.seeds) s += offset;
  return config;
}

// ---------------------------------------------------------------------------
// cells

std::vector<CellKey> grid_cells(const ExperimentConfig& config) {
  std::vector<CellKey> cells;
  for (auto kind : config.corruption.kinds)
    for (double ratio : config.corruption.ratios)
      for (const auto& loss : config.train.losses)
        for (auto seed : config.seeds) cells.push_back({kind, ratio, loss, seed});
  return cells;
}

std::uint64_t data_seed(const ExperimentConfig& config, std::uint64_t run_seed) {
  return config.data.reseed_per_run ? mix_seed(config.data.synth.seed, run_seed)
                                    : config.data.synth.seed;
}

CorruptionSpec corruption_spec(const ExperimentConfig& config, CorruptionKind kind, double ratio,
                               std::uint64_t run_seed) {
  CorruptionSpec spec;
  spec.kind = kind;
  spec.ratio = ratio;
  spec.soft_value = config.corruption.soft_value;
  spec.confusion_map = config.corruption.confusion_map;
  spec.seed = mix_seed(run_seed, 100);
  return spec;
}

TrainConfig train_config(const ExperimentConfig& config, const LossSelector& loss,
                         std::uint64_t run_seed) {
  TrainConfig t = config.train.base;
  t.loss = loss;
  t.seed = run_seed;
  return t;
}

SplitBundles experiment_data(const ExperimentConfig& config, std::uint64_t run_seed) {
  if (!config.data.synthetic) {
    SplitBundles d;
    d.train = load_feature_csv(config.data.train_csv, Split::Train);
    d.valid = load_feature_csv(config.data.valid_csv, Split::Valid);
    d.test = load_feature_csv(config.data.test_csv, Split::Test);
    return d;
  }
  SynthSpec spec = config.data.synth;
  spec.seed = data_seed(config, run_seed);
  return generate_synthetic(spec);
}

CellResult run_cell(const ExperimentConfig& config, const SplitBundles& clean,
                    const CellKey& cell) {
  CellResult out;
  SplitBundles data = clean;
  auto corrupted = inject(clean.train.targets,
                          corruption_spec(config, cell.kind, cell.ratio, cell.seed));
  data.train.targets = std::move(corrupted.targets);
  out.corruption = std::move(corrupted.report);
  out.trained = train(data, train_config(config, cell.loss, cell.seed));
  out.test = evaluate(predict_proba(out.trained.params, data.test.features), data.test.targets);
  return out;
}

std::string ratio_label(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", ratio);
  return buf;
}

fs::path experiment_root(const ExperimentConfig& config) {
  return config.output_dir / config.hash();
}

fs::path data_dir(const ExperimentConfig& config, std::uint64_t run_seed) {
  if (config.data.reseed_per_run)
    return experiment_root(config) / "data" / ("seed_" + std::to_string(run_seed));
  return experiment_root(config) / "data";
}

fs::path corruption_dir(const ExperimentConfig& config, CorruptionKind kind, double ratio,
                        std::uint64_t run_seed) {
  return experiment_root(config) /
         (std::string(to_string(kind)) + "_" + ratio_label(ratio)) / "corrupted" /
         ("seed_" + std::to_string(run_seed));
}

fs::path cell_dir(const ExperimentConfig& config, const CellKey& cell) {
  return experiment_root(config) /
         (std::string(to_string(cell.kind)) + "_" + ratio_label(cell.ratio)) /
         loss_label(cell.loss) / ("seed_" + std::to_string(cell.seed));
}

std::string cell_hash(const ExperimentConfig& config, const CellKey& cell) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::string key = config.hash() + "|" + std::string(to_string(cell.kind)) + "|" +
                          fmt_double(cell.ratio) + "|" + loss_label(cell.loss);
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// commands

std::size_t cmd_gen(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  write_text(experiment_root(config) / "config.canonical", config.canonical());
  if (!config.data.synthetic) {
    experiment_data(config, 0);  // validates the CSV inputs
    return 0;
  }
  std::size_t written = 0;
  for (auto run_seed : config.seeds) {
    const fs::path dir = data_dir(config, run_seed);
    if (fs::exists(dir / "train.csv") && fs::exists(dir / "valid.csv") &&
        fs::exists(dir / "test.csv"))
      continue;
    fs::create_directories(dir);
    const auto data = experiment_data(config, run_seed);
    write_feature_csv(dir / "train.csv", data.train);
    write_feature_csv(dir / "valid.csv", data.valid);
    write_feature_csv(dir / "test.csv", data.test);
    log(options, "gen: wrote " + dir.string());
    ++written;
    if (!config.data.reseed_per_run) break;
  }
  return written;
}

std::size_t cmd_corrupt(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const auto cells = corruption_cells(config);
  std::atomic<std::size_t> written{0};
  parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
    const auto& c = cells[i];
    const fs::path dir = corruption_dir(config, c.kind, c.ratio, c.seed);
    if (fs::exists(dir / "train.csv") && fs::exists(dir / "report.jsonl")) return;
    const SplitBundles clean = load_clean(config, c.seed);
    auto result = inject(clean.train.targets, corruption_spec(config, c.kind, c.ratio, c.seed));
    DatasetBundle bundle = clean.train;
    bundle.targets = std::move(result.targets);
    fs::create_directories(dir);
    std::ostringstream report;
    write_report_jsonl(report, result.report);
    write_text(dir / "report.jsonl", report.str());
    write_feature_csv(dir / "train.csv.tmp", bundle);
    fs::rename(dir / "train.csv.tmp", dir / "train.csv");
    if (result.report.off_grid_ratio)
      log(options, "corrupt: warning: ratio " + ratio_label(c.ratio) + " is off the 0.1 grid");
    ++written;
  });
  log(options, "corrupt: " + std::to_string(written.load()) + " corrupted training sets written");
  return written;
}

std::size_t cmd_train(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const auto cells = grid_cells(config);
  std::atomic<std::size_t> written{0};
  parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
    const auto& cell = cells[i];
    const fs::path dir = cell_dir(config, cell);
    const fs::path ckpt = checkpoint_path(config, cell);
    if (fs::exists(dir / "record.json") && fs::exists(ckpt)) return;
    SplitBundles data = load_clean(config, cell.seed);
    const fs::path corrupted = corruption_dir(config, cell.kind, cell.ratio, cell.seed) / "train.csv";
    require_file(corrupted, "corrupt");
    data.train = load_feature_csv(corrupted, Split::Train);
    const auto result = train(data, train_config(config, cell.loss, cell.seed));

    nlohmann::ordered_json rec;
    rec["config_hash"] = config.hash();
    rec["cell_hash"] = cell_hash(config, cell);
    rec["kind"] = std::string(to_string(cell.kind));
    rec["ratio"] = cell.ratio;
    rec["loss"] = loss_label(cell.loss);
    rec["seed"] = cell.seed;
    rec["run"] = to_json(result.record);
    write_text(ckpt, to_json(result.params, result.sigmas).dump() + "\n");
    write_text(dir / "record.json", rec.dump(1) + "\n");
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.2fs", result.record.wall_seconds);
    log(options, "train: " + dir.string() + " best epoch " +
                     std::to_string(result.record.best_epoch) + " (" + wall + ")");
    ++written;
  });
  return written;
}

std::size_t cmd_eval(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const auto cells = grid_cells(config);
  std::atomic<std::size_t> written{0};
  parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
    const auto& cell = cells[i];
    const fs::path dir = cell_dir(config, cell);
    if (fs::exists(dir / "metrics.csv")) return;
    const fs::path ckpt = checkpoint_path(config, cell);
    require_file(ckpt, "train");
    const auto [params, sigmas] = checkpoint_from_json(nlohmann::json::parse(read_text(ckpt)));
    const SplitBundles data = load_clean(config, cell.seed);
    const auto report = evaluate(predict_proba(params, data.test.features), data.test.targets);
    std::string sigma_field;
    if (uses_sigma(cell.loss)) sigma_field = fmt_double(mean_of(sigmas.sigmas()));
    std::ostringstream o;
    o << "config_hash,kind,ratio,loss,seed,mean_sigma," << MetricReport::csv_header() << '\n'
      << config.hash() << ',' << to_string(cell.kind) << ',' << ratio_label(cell.ratio) << ','
      << loss_label(cell.loss) << ',' << cell.seed << ',' << sigma_field << ','
      << report.csv_row() << '\n';
    write_text(dir / "metrics.csv", o.str());
    ++written;
  });
  log(options, "eval: " + std::to_string(written.load()) + " metric files written");
  return written;
}

void write_summary(const ExperimentConfig& config, const CommandOptions& options) {
  std::ostringstream o;
  o << "kind,ratio,loss,n_seeds,map_mean,map_sd,auprc_mean,auprc_sd,roc_auc_mean,roc_auc_sd,"
       "f1_mean,f1_sd,acc_mean,acc_sd,argmax_acc_mean,argmax_acc_sd,sigma_mean,sigma_sd\n";
  std::size_t rows = 0;
  for (auto kind : config.corruption.kinds) {
    for (double ratio : config.corruption.ratios) {
      for (const auto& loss : config.train.losses) {
        std::vector<std::vector<double>> cols(7);
        for (auto seed : config.seeds) {
          const fs::path file = cell_dir(config, {kind, ratio, loss, seed}) / "metrics.csv";
          require_file(file, "eval");
          std::istringstream in(read_text(file));
          std::string header, row;
          std::getline(in, header);
          std::getline(in, row);
          std::vector<std::string> f;
          std::stringstream rs(row);
          std::string field;
          while (std::getline(rs, field, ',')) f.push_back(field);
          if (f.size() < 13) throw std::runtime_error("malformed " + file.string());
          // map, auprc, roc_auc, f1, acc, argmax_acc
          for (std::size_t k = 0; k < 6; ++k) cols[k].push_back(to_double(file.string(), f[6 + k]));
          if (!f[5].empty()) cols[6].push_back(to_double(file.string(), f[5]));
        }
        o << to_string(kind) << ',' << ratio_label(ratio) << ',' << loss_label(loss) << ','
          << config.seeds.size();
        for (std::size_t k = 0; k < 7; ++k) {
          if (k == 6 && cols[6].empty()) {
            o << ",,";
            continue;
          }
          o << ',' << fmt_double(mean_of(cols[k])) << ',' << fmt_double(sd_of(cols[k]));
        }
        o << '\n';
        ++rows;
      }
    }
  }
  write_text(experiment_root(config) / "summary.csv", o.str());
  log(options, "summary: " + std::to_string(rows) + " rows -> " +
                   (experiment_root(config) / "summary.csv").string());
}

std::size_t cmd_sweep(const ExperimentConfig& config, const CommandOptions& options) {
  std::size_t n = cmd_gen(config, options);
  n += cmd_corrupt(config, options);
  n += cmd_train(config, options);
  n += cmd_eval(config, options);
  write_summary(config, options);
  return n;
}

std::size_t cmd_analyze(const ExperimentConfig& config, const CommandOptions& options) {
  config.validate();
  const fs::path out_dir = experiment_root(config) / "analysis";
  std::size_t written = 0;
  const bool has_csu = std::any_of(config.train.losses.begin(), config.train.losses.end(),
                                   [](const LossSelector& l) { return uses_sigma(l); });
  const auto bce_it = std::find_if(config.train.losses.begin(), config.train.losses.end(),
                                   [](const LossSelector& l) {
                                     const auto* b = std::get_if<BaselineConfig>(&l);
                                     return b && b->kind == BaselineKind::BCE;
                                   });

  auto load_record = [&](const CellKey& cell) {
    const fs::path file = cell_dir(config, cell) / "record.json";
    require_file(file, "train");
    return run_record_from_json(nlohmann::json::parse(read_text(file)).at("run"));
  };
  auto load_ckpt = [&](const CellKey& cell) {
    const fs::path file = checkpoint_path(config, cell);
    require_file(file, "train");
    return checkpoint_from_json(nlohmann::json::parse(read_text(file)));
  };

  for (auto kind : config.corruption.kinds) {
    for (double ratio : config.corruption.ratios) {
      const std::string tag = std::string(to_string(kind)) + "_" + ratio_label(ratio);

      if (has_csu) {
        std::vector<RunRecord> records;
        std::vector<double> pooled_sigma;
        for (auto seed : config.seeds) {
          const CellKey cell{kind, ratio, CsuObjective{}, seed};
          records.push_back(load_record(cell));
          const auto sig = load_ckpt(cell).second.sigmas();
          pooled_sigma.insert(pooled_sigma.end(), sig.begin(), sig.end());
        }
        std::ostringstream traj, kde;
        write_trajectory_csv(traj, multiplier_trajectory(records));
        write_kde_csv(kde, sigma_kde(pooled_sigma));
        write_text(out_dir / ("trajectory_" + tag + ".csv"), traj.str());
        write_text(out_dir / ("kde_" + tag + ".csv"), kde.str());
        written += 2;
      }

      for (const auto& loss : config.train.losses) {
        if (!uses_sigma(loss) && &loss != &*bce_it) continue;
        Matrix probs, targets;
        std::vector<double> p_all, y_all;
        std::size_t rows = 0, C = 0;
        for (auto seed : config.seeds) {
          const auto data = load_clean(config, seed);
          const auto [params, sig] = load_ckpt({kind, ratio, loss, seed});
          const Matrix p = predict_proba(params, data.test.features);
          p_all.insert(p_all.end(), p.values().begin(), p.values().end());
          y_all.insert(y_all.end(), data.test.targets.values().begin(),
                       data.test.targets.values().end());
          rows += p.rows();
          C = p.cols();
        }
        std::ostringstream surf;
        write_surface_csv(surf, score_plane_surface(Matrix(rows, C, std::move(p_all)),
                                                    Matrix(rows, C, std::move(y_all))));
        write_text(out_dir / ("surface_" + tag + "_" + loss_label(loss) + ".csv"), surf.str());
        ++written;
      }

      if (has_csu && bce_it != config.train.losses.end()) {
        std::vector<double> curv_csu, curv_bce, basin_csu, basin_bce, d_curv, d_basin;
        for (auto seed : config.seeds) {
          SplitBundles data = load_clean(config, seed);
          const fs::path corrupted = corruption_dir(config, kind, ratio, seed) / "train.csv";
          require_file(corrupted, "corrupt");
          data.train = load_feature_csv(corrupted, Split::Train);
          GeometryOptions go;
          go.seed = seed;
          auto probe = [&](const LossSelector& loss) {
            const auto params = load_ckpt({kind, ratio, loss, seed}).first;
            return local_geometry(model_loss_functional(params, data.train.features,
                                                        data.train.targets),
                                  params.flatten(), go);
          };
          const auto with = probe(CsuObjective{});
          const auto without = probe(*bce_it);
          curv_csu.push_back(with.curvature);
          curv_bce.push_back(without.curvature);
          basin_csu.push_back(with.basin_fraction);
          basin_bce.push_back(without.basin_fraction);
          d_curv.push_back(with.curvature - without.curvature);
          d_basin.push_back(with.basin_fraction - without.basin_fraction);
        }
        const std::vector<GeometryRow> rows = {
            {"curvature_delta", mean_ci(d_curv)},     {"basin_fraction_delta", mean_ci(d_basin)},
            {"curvature_csu", mean_ci(curv_csu)},     {"curvature_bce", mean_ci(curv_bce)},
            {"basin_fraction_csu", mean_ci(basin_csu)}, {"basin_fraction_bce", mean_ci(basin_bce)},
        };
        std::ostringstream geo;
        write_geometry_csv(geo, rows);
        write_text(out_dir / ("geometry_" + tag + ".csv"), geo.str());
        ++written;
      }
    }
  }
  log(options, "analyze: " + std::to_string(written) + " files in " + out_dir.string());
  return written;
}

}  // namespace csu
