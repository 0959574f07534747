#include "mtal/experiments.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "mtal/errors.hpp"
#include "mtal/ops.hpp"
#include "mtal/rng.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace mtal {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

[[noreturn]] void bad_value(const std::string& field, const std::string& value,
                            const std::string& expected) {
  throw ConfigError(field + ": '" + value + "' is not " + expected);
}

std::uint64_t to_uint(const std::string& field, const std::string& raw) {
  const std::string v = trim(raw);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    bad_value(field, raw, "a non-negative integer");
  }
  return out;
}

double to_real(const std::string& field, const std::string& raw) {
  const std::string v = trim(raw);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(out)) bad_value(field, raw, "a finite number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(field, raw, "a finite number");
  }
}

bool to_bool(const std::string& field, const std::string& raw) {
  std::string v = trim(raw);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  bad_value(field, raw, "a boolean (true/false/on/off/yes/no/1/0)");
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename Fn>
auto to_list(const std::string& field, const std::string& raw, Fn parse) {
  std::vector<decltype(parse(field, raw))> out;
  for (const auto& item : split_list(raw)) out.push_back(parse(field, item));
  return out;
}

std::size_t to_size(const std::string& field, const std::string& raw) {
  return static_cast<std::size_t>(to_uint(field, raw));
}

using Handler = std::function<void(const std::string& field, const std::string& value)>;

void apply_section(const std::string& section, const pt::ptree& keys,
                   const std::map<std::string, Handler>& handlers) {
  for (const auto& [key, node] : keys) {
    const std::string field = section + "." + key;
    auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError(field + ": unknown key");
    it->second(field, node.data());
  }
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

std::vector<TaskSpec> task_specs(const std::vector<GeneratedTask>& tasks) {
  std::vector<TaskSpec> specs;
  for (const auto& t : tasks) specs.push_back(t.spec);
  return specs;
}

MtalLearner<float> load_mtal(const ExperimentConfig& cfg, const std::vector<TaskSpec>& specs,
                             const fs::path& checkpoint) {
  MtalLearner<float> learner(specs, cfg.mtal);
  const auto tensors = read_checkpoint(checkpoint);
  learner.load(tensors);
  return learner;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " at line " + std::to_string(e.line()));
  }
  ExperimentConfig cfg;
  auto& m = cfg.mtal;
  bool delta_set = false;
  std::string preset;
  std::map<std::size_t, std::map<std::string, std::string>> task_sections;

  for (const auto& [section, keys] : tree) {
    if (!keys.data().empty() && keys.empty()) {
      throw ConfigError(origin + ": key '" + section + "' outside any section");
    }
    if (section == "experiment") {
      apply_section(section, keys,
                    {{"method", [&](auto&, auto& v) { cfg.method = parse_method(trim(v)); }},
                     {"seeds", [&](auto& f, auto& v) { cfg.seeds = to_list(f, v, to_uint); }},
                     {"output", [&](auto&, auto& v) { cfg.output = trim(v); }},
                     {"split", [&](auto& f, auto& v) {
                        const auto s = trim(v);
                        if (s == "stratified") cfg.split = SplitMode::Stratified;
                        else if (s == "random") cfg.split = SplitMode::Random;
                        else bad_value(f, v, "stratified or random");
                      }}});
    } else if (section == "mtal") {
      apply_section(
          section, keys,
          {{"preset", [&](auto& f, auto& v) {
              preset = trim(v);
              if (preset != "related" && preset != "unrelated") {
                bad_value(f, v, "related or unrelated");
              }
            }},
           {"delta", [&](auto& f, auto& v) { m.delta = to_real(f, v); delta_set = true; }},
           {"learning_rate", [&](auto& f, auto& v) { m.learning_rate = to_real(f, v); }},
           {"lambda", [&](auto& f, auto& v) { m.lambda = to_real(f, v); }},
           {"phi_mode", [&](auto& f, auto& v) {
              const auto s = trim(v);
              if (s == "learnable") m.phi_mode = PhiMode::Learnable;
              else if (s == "fixed") m.phi_mode = PhiMode::Fixed;
              else bad_value(f, v, "learnable or fixed");
            }},
           {"fixed_phi", [&](auto& f, auto& v) { m.fixed_phi = to_real(f, v); }},
           {"share_every", [&](auto& f, auto& v) { m.share_every = to_size(f, v); }},
           {"sharing", [&](auto& f, auto& v) { m.sharing_enabled = to_bool(f, v); }},
           {"batch_size", [&](auto& f, auto& v) { m.batch_size = to_size(f, v); }},
           {"epochs", [&](auto& f, auto& v) { m.epochs = to_size(f, v); }},
           {"early_stop", [&](auto& f, auto& v) { m.early_stop = to_bool(f, v); }},
           {"early_stop_tolerance",
            [&](auto& f, auto& v) { m.early_stop_tolerance = to_real(f, v); }},
           {"checkpoint_every", [&](auto& f, auto& v) { m.checkpoint_every = to_size(f, v); }}});
    } else if (section == "architecture") {
      auto& a = m.arch;
      apply_section(section, keys,
                    {{"conv_layers", [&](auto& f, auto& v) { a.conv_layers = to_size(f, v); }},
                     {"kernels", [&](auto& f, auto& v) { a.kernels = to_size(f, v); }},
                     {"kernel_size", [&](auto& f, auto& v) { a.kernel_size = to_size(f, v); }},
                     {"pool_after", [&](auto& f, auto& v) { a.pool_after = to_list(f, v, to_size); }},
                     {"pool_window", [&](auto& f, auto& v) { a.pool_window = to_size(f, v); }}});
    } else if (section == "tasks") {
      auto& fam = cfg.family;
      apply_section(section, keys,
                    {{"source", [&](auto& f, auto& v) {
                        const auto s = trim(v);
                        if (s == "synthetic") cfg.source = TaskSource::Synthetic;
                        else if (s == "disk") cfg.source = TaskSource::Disk;
                        else bad_value(f, v, "synthetic or disk");
                      }},
                     {"seed", [&](auto& f, auto& v) { fam.seed = to_uint(f, v); }},
                     {"relatedness", [&](auto& f, auto& v) { fam.relatedness = to_real(f, v); }},
                     {"noise", [&](auto& f, auto& v) { fam.noise = to_real(f, v); }},
                     {"jitter", [&](auto& f, auto& v) { fam.jitter = to_real(f, v); }}});
    } else if (section.rfind("task.", 0) == 0) {
      const std::size_t id = to_size(section + " (task id)", section.substr(5));
      if (task_sections.count(id) != 0) throw ConfigError(section + ": duplicate task id");
      auto& kv = task_sections[id];
      for (const auto& [key, node] : keys) kv[key] = node.data();
    } else if (section == "sweep") {
      apply_section(section, keys,
                    {{"deltas", [&](auto& f, auto& v) { cfg.sweep_deltas = to_list(f, v, to_real); }},
                     {"epochs", [&](auto& f, auto& v) { cfg.sweep_epochs = to_size(f, v); }}});
    } else {
      throw ConfigError(origin + ": unknown section [" + section + "]");
    }
  }

  if (!preset.empty() && !delta_set) m.delta = preset == "related" ? kRelatedDelta : kUnrelatedDelta;

  for (const auto& [id, kv] : task_sections) {
    const std::string section = "task." + std::to_string(id);
    cfg.task_ids.push_back(id);
    pt::ptree keys;
    for (const auto& [k, v] : kv) keys.put(pt::ptree::path_type(k, '\0'), v);
    if (cfg.source == TaskSource::Disk) {
      fs::path path;
      apply_section(section, keys, {{"path", [&](auto&, auto& v) { path = trim(v); }}});
      if (path.empty()) throw ConfigError(section + ".path: required for disk tasks");
      cfg.task_paths.push_back(path);
    } else {
      SyntheticTask t;
      apply_section(
          section, keys,
          {{"channels", [&](auto& f, auto& v) { t.dims.channels = to_size(f, v); }},
           {"height", [&](auto& f, auto& v) { t.dims.height = to_size(f, v); }},
           {"width", [&](auto& f, auto& v) { t.dims.width = to_size(f, v); }},
           {"classes", [&](auto& f, auto& v) { t.classes = to_size(f, v); }},
           {"examples", [&](auto& f, auto& v) { t.examples = to_size(f, v); }},
           {"quarter_turns",
            [&](auto& f, auto& v) { t.quarter_turns = static_cast<int>(to_uint(f, v) % 4); }},
           {"channel_permutation",
            [&](auto& f, auto& v) { t.channel_permutation = to_list(f, v, to_size); }},
           {"class_map", [&](auto& f, auto& v) { t.class_map = to_list(f, v, to_size); }}});
      cfg.family.tasks.push_back(std::move(t));
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("experiment.seeds: at least one seed required");
  if (output.empty()) throw ConfigError("experiment.output: empty path");
  try {
    mtal.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("mtal: ") + e.what());
  }
  if (task_ids.empty()) throw ConfigError("tasks: no [task.ID] sections");
  if (source == TaskSource::Synthetic) {
    if (family.tasks.size() != task_ids.size()) {
      throw ConfigError("tasks: synthetic task count does not match task ids");
    }
    try {
      family.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("tasks: ") + e.what());
    }
  } else {
    if (task_paths.size() != task_ids.size()) throw ConfigError("tasks: missing task paths");
    for (std::size_t t = 0; t < task_paths.size(); ++t) {
      if (!fs::is_directory(task_paths[t])) {
        throw ConfigError("task." + std::to_string(task_ids[t]) + ".path: " +
                          task_paths[t].string() + " is not a directory");
      }
    }
  }
  for (double d : sweep_deltas) {
    try {
      ThresholdConfig{d};
    } catch (const std::exception& e) {
      throw ConfigError(std::string("sweep.deltas: ") + e.what());
    }
  }
  if (sweep_deltas.empty()) throw ConfigError("sweep.deltas: empty list");
  if (sweep_epochs == 0) throw ConfigError("sweep.epochs: must be positive");
}

std::uint64_t data_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  auto rng = make_rng(cfg.family.seed, {kDataStream, seed});
  return rng();
}

std::vector<GeneratedTask> load_tasks(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<GeneratedTask> out;
  if (cfg.source == TaskSource::Synthetic) {
    SyntheticTaskFamily family = cfg.family;
    family.seed = data_seed(cfg, seed);
    out = generate_tasks(family);
    for (std::size_t t = 0; t < out.size(); ++t) out[t].spec.id = cfg.task_ids[t];
    return out;
  }
  for (std::size_t t = 0; t < cfg.task_paths.size(); ++t) {
    GeneratedTask g;
    try {
      g.data = load_dataset(cfg.task_paths[t]);
    } catch (const FormatError& e) {
      throw FormatError("task." + std::to_string(cfg.task_ids[t]) + ": " + e.what());
    }
    g.spec = {cfg.task_ids[t], g.data.dims, g.data.classes};
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<TaskData> prepare_tasks(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<TaskData> out;
  for (const auto& g : load_tasks(cfg, seed)) {
    out.push_back(prepare_task(g.spec, g.data, seed, cfg.split));
  }
  return out;
}

void write_results_csv(std::ostream& out, std::span<const AccuracyRow> rows) {
  out << "method,task,seed,accuracy\n";
  std::vector<std::pair<std::string, std::size_t>> order;
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> groups;
  for (const auto& r : rows) {
    out << r.method << ',' << r.task << ',' << r.seed << ',' << fixed(r.accuracy, 12) << '\n';
    const auto key = std::make_pair(r.method, r.task);
    if (groups.count(key) == 0) order.push_back(key);
    groups[key].push_back(r.accuracy);
  }
  for (const auto& key : order) {
    const auto& v = groups[key];
    out << key.first << ',' << key.second << ",mean," << fixed(mean_of(v), 12) << '\n';
    out << key.first << ',' << key.second << ",std," << fixed(population_std(v), 12) << '\n';
  }
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output);
  ExperimentSummary summary;
  const std::string method = method_name(cfg.method);
  for (const auto seed : cfg.seeds) {
    const auto tasks = prepare_tasks(cfg, seed);
    MtalConfig run_cfg = cfg.mtal;
    run_cfg.seed = seed;
    FitOptions options;
    options.out_dir = cfg.output / seed_dir(seed);
    FitResult result = run_method(cfg.method, tasks, run_cfg, options);
    std::vector<AccuracyRow> rows;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      rows.push_back({method, tasks[t].spec.id, seed, result.accuracy[t]});
    }
    std::ostringstream per_seed;
    write_results_csv(per_seed, rows);
    write_text(options.out_dir / "results.csv", per_seed.str());
    summary.rows.insert(summary.rows.end(), rows.begin(), rows.end());
    summary.runs.push_back(std::move(result));
  }
  std::ostringstream all;
  write_results_csv(all, summary.rows);
  write_text(cfg.output / "results.csv", all.str());
  const fs::path first = cfg.output / seed_dir(cfg.seeds.front());
  for (const char* name : {"losses.csv", "total.csv", "sharing_report.csv"}) {
    fs::copy_file(first / name, cfg.output / name, fs::copy_options::overwrite_existing);
  }
  return summary;
}

std::vector<SweepRow> sweep_delta(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.method != Method::Mtal) {
    throw ConfigError("experiment.method: the delta sweep trains mtal, got " +
                      method_name(cfg.method));
  }
  std::vector<double> deltas = cfg.sweep_deltas;
  std::sort(deltas.begin(), deltas.end());
  deltas.erase(std::unique(deltas.begin(), deltas.end()), deltas.end());
  fs::create_directories(cfg.output);

  std::vector<SweepRow> rows;
  for (const auto seed : cfg.seeds) {
    const auto tasks = prepare_tasks(cfg, seed);
    std::vector<TaskSpec> specs;
    for (const auto& t : tasks) specs.push_back(t.spec);
    std::optional<MtalLearner<float>> reference;
    std::vector<SweepRow> cell_rows;
    for (double delta : deltas) {
      MtalConfig run_cfg = cfg.mtal;
      run_cfg.seed = seed;
      run_cfg.delta = delta;
      run_cfg.epochs = cfg.sweep_epochs;
      MtalLearner<float> learner(specs, run_cfg);
      const FitResult result = fit<float>(learner, tasks, run_cfg);
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        cell_rows.push_back({delta, seed, tasks[t].spec.id, result.accuracy[t], 0.0,
                             result.sharing.total_ratio()});
      }
      if (!reference) {
        reference.emplace(std::move(learner));
        write_checkpoint(cfg.output / ("reference_" + seed_dir(seed) + ".bin"),
                         reference->named_tensors());
      }
    }
    const auto kernels = kernels_per_layer(cfg.mtal.arch);
    for (auto& row : cell_rows) {
      const auto records =
          nominate_all<float>(reference->networks(), ThresholdConfig(row.delta));
      row.sharing_ratio = sharing_report(records, tasks.size(), kernels).total_ratio();
    }
    rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
  }

  std::ostringstream runs;
  runs << "delta,seed,task,accuracy,sharing_ratio_percent,trained_sharing_ratio_percent\n";
  for (const auto& r : rows) {
    runs << fixed(r.delta, 2) << ',' << r.seed << ',' << r.task << ',' << fixed(r.accuracy, 12)
         << ',' << fixed(100.0 * r.sharing_ratio, 1) << ','
         << fixed(100.0 * r.trained_sharing_ratio, 1) << '\n';
  }
  write_text(cfg.output / "sweep_runs.csv", runs.str());

  std::ostringstream agg;
  agg << "delta,task,accuracy_mean,accuracy_std,sharing_ratio_percent,"
         "trained_sharing_ratio_percent\n";
  for (double delta : deltas) {
    for (const auto id : cfg.task_ids) {
      std::vector<double> acc, ratio, trained;
      for (const auto& r : rows) {
        if (r.delta == delta && r.task == id) {
          acc.push_back(r.accuracy);
          ratio.push_back(r.sharing_ratio);
          trained.push_back(r.trained_sharing_ratio);
        }
      }
      agg << fixed(delta, 2) << ',' << id << ',' << fixed(mean_of(acc), 12) << ','
          << fixed(population_std(acc), 12) << ',' << fixed(100.0 * mean_of(ratio), 1) << ','
          << fixed(100.0 * mean_of(trained), 1) << '\n';
    }
  }
  write_text(cfg.output / "sweep.csv", agg.str());
  return rows;
}

SharingReport report_sharing(const ExperimentConfig& cfg, const fs::path& checkpoint,
                             const fs::path& out_dir) {
  cfg.validate();
  const auto tasks = load_tasks(cfg, cfg.seeds.front());
  const auto learner = load_mtal(cfg, task_specs(tasks), checkpoint);
  const auto records = nominate_all<float>(learner.networks(), ThresholdConfig(cfg.mtal.delta));
  const auto report = sharing_report(records, tasks.size(), kernels_per_layer(cfg.mtal.arch));
  fs::create_directories(out_dir);
  std::ostringstream ratio, sims;
  write_sharing_report_csv(ratio, report);
  std::vector<SimilarityRecord> flat;
  for (const auto& layer : records) flat.insert(flat.end(), layer.begin(), layer.end());
  write_similarity_csv(sims, flat);
  write_text(out_dir / "sharing_report.csv", ratio.str());
  write_text(out_dir / "similarity.csv", sims.str());
  return report;
}

template <typename T>
BasicTensor<T> activation_maps(const TaskNetwork<T>& network, std::span<const Var<T>> kernels,
                               const BasicTensor<T>& inputs, std::size_t layer) {
  const auto& convs = network.convs();
  if (layer >= convs.size()) {
    throw std::out_of_range("activation_maps: layer " + std::to_string(layer + 1) + " of " +
                            std::to_string(convs.size()));
  }
  if (kernels.size() != convs.size()) {
    throw ShapeError("activation_maps: " + std::to_string(kernels.size()) + " kernels for " +
                     std::to_string(convs.size()) + " layers");
  }
  Var<T> h = constant(inputs);
  for (std::size_t l = 0; l < layer; ++l) h = convs.block(l, h, kernels[l]);
  return relu<T>(conv2d<T>(h, kernels[layer], convs.layer(layer).bias, Padding::Same))->value();
}

std::size_t dump_activations(const ExperimentConfig& cfg, const fs::path& checkpoint,
                             const DumpOptions& options, const fs::path& out_dir) {
  cfg.validate();
  if (options.layer == 0 || options.layer > cfg.mtal.arch.conv_layers) {
    throw ConfigError("dump-activations: layer " + std::to_string(options.layer) +
                      " outside 1.." + std::to_string(cfg.mtal.arch.conv_layers));
  }
  if (options.samples == 0) throw ConfigError("dump-activations: samples must be positive");
  const auto tasks = prepare_tasks(cfg, options.seed);
  std::vector<TaskSpec> specs;
  for (const auto& t : tasks) specs.push_back(t.spec);
  auto learner = load_mtal(cfg, specs, checkpoint);
  std::vector<SharingPlan<float>> plans;
  if (options.shared) plans = learner.nominate();
  const auto eff = effective_kernels<float>(learner.networks(), plans);

  std::optional<Dataset> shared_input;
  if (!options.input.empty()) shared_input = load_dataset(options.input);

  std::size_t files = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const Dataset& source = shared_input ? *shared_input : tasks[t].test;
    if (source.dims != specs[t].dims) {
      throw ShapeError("dump-activations: input is " + to_string(source.dims) + ", task " +
                       std::to_string(specs[t].id) + " expects " + to_string(specs[t].dims));
    }
    const std::size_t n = std::min(options.samples, source.size());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    const auto maps = activation_maps<float>(learner.networks()[t], eff[t],
                                             batch_inputs<float>(source, idx), options.layer - 1);
    const std::size_t m = maps.dim(1), h = maps.dim(2), w = maps.dim(3);
    for (std::size_t s = 0; s < n; ++s) {
      const fs::path dir = out_dir / ("sample" + std::to_string(s));
      fs::create_directories(dir);
      for (std::size_t p = 0; p < m; ++p) {
        std::string text;
        const float* grid = maps.raw() + ((s * m + p) * h) * w;
        char buf[32];
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(grid[y * w + x]));
            if (x != 0) text += ',';
            text += buf;
          }
          text += '\n';
        }
        write_text(dir / (task_prefix(specs[t].id) + "_kernel" + std::to_string(p) + ".csv"),
                   text);
        ++files;
      }
    }
  }
  return files;
}

void gen_data(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& out_dir) {
  cfg.validate();
  if (cfg.source != TaskSource::Synthetic) {
    throw ConfigError("tasks.source: gen-data needs synthetic tasks");
  }
  for (const auto& g : load_tasks(cfg, seed)) {
    write_dataset(out_dir / task_prefix(g.spec.id), g.data);
  }
}

template BasicTensor<float> activation_maps(const TaskNetwork<float>&, std::span<const Var<float>>,
                                            const BasicTensor<float>&, std::size_t);
template BasicTensor<double> activation_maps(const TaskNetwork<double>&,
                                             std::span<const Var<double>>,
                                             const BasicTensor<double>&, std::size_t);

}  // namespace mtal
