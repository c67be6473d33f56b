// equigrid command-line driver: generate, train, ablate, report.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "equigrid/data.hpp"
#include "equigrid/report.hpp"
#include "equigrid/run_io.hpp"
#include "equigrid/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace equigrid;

namespace {

constexpr const char* kPrecedence =
    "Settings precedence: command-line flag > config file > EQUIGRID_SEED "
    "(seed only) > built-in default.";

std::uint64_t parse_seed(const std::string& text, const std::string& source) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size() || text.front() == '-') throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(source + ": not a nonnegative integer seed: '" + text + "'");
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("EQUIGRID_SEED");
  if (!v || !*v) return std::nullopt;
  return parse_seed(v, "EQUIGRID_SEED");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

// Builds run settings: defaults, then EQUIGRID_SEED, then the config file,
// then explicit flags.
run_io::RunSettings resolve_settings(const std::string& config_file,
                                     const std::optional<std::string>& variant,
                                     const std::optional<std::uint64_t>& seed) {
  json cfg = json::object();
  if (!config_file.empty()) {
    try {
      cfg = json::parse(read_text(config_file));
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("config file " + config_file + " is not valid JSON: " +
                                  e.what());
    }
    if (!cfg.is_object()) {
      throw std::invalid_argument("config file " + config_file + " must hold a JSON object");
    }
  }
  if (!cfg.contains("seed")) {
    if (auto s = env_seed()) cfg["seed"] = *s;
  }
  if (variant) {
    loss::variant_from_string(*variant);  // fails early with the list of names
    cfg["variant"] = *variant;
  }
  if (seed) cfg["seed"] = *seed;
  auto settings = run_io::default_settings();
  run_io::apply_config(cfg.dump(), settings);
  return settings;
}

json settings_json(const run_io::RunSettings& s) {
  return {
      {"variant", std::string(loss::to_string(s.train.variant))},
      {"seed", s.train.seed},
      {"epochs", s.train.epochs},
      {"batch_size", s.train.batch_size},
      {"learning_rate", s.train.learning_rate},
      {"early_stop_patience", s.train.early_stop_patience},
      {"optimizer", std::string(trainer::to_string(s.train.optimizer))},
      {"attention_width", s.train.attention_width},
      {"hidden_channels", s.train.hidden_channels},
      {"temporal_kernel", s.train.temporal_kernel},
      {"lookback", s.window.lookback},
      {"horizon", s.window.horizon},
      {"lambda_s", s.loss.lambda_s},
      {"lambda_d", s.loss.lambda_d},
      {"dd_kind", std::string(loss::to_string(s.loss.dd_kind))},
      {"use_ds", s.loss.use_ds},
  };
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    seeds.push_back(parse_seed(item.substr(b, e - b + 1), "--seeds"));
  }
  if (seeds.empty()) throw std::invalid_argument("--seeds: no seeds given");
  return seeds;
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
  data::SyntheticCityConfig city;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool force = false;
};

int run_generate(const GenerateArgs& args) {
  auto cfg = args.city;
  if (args.seed) {
    cfg.seed = *args.seed;
  } else if (auto s = env_seed()) {
    cfg.seed = *s;
  }
  const auto city = data::generate_synthetic_city(cfg);
  run_io::prepare_out_dir(args.out_dir, args.force);
  const fs::path dir = args.out_dir;
  {
    std::ostringstream s;
    data::write_trips(s, city.graph, city.demand);
    write_text(dir / "trips.csv", s.str());
  }
  {
    std::ostringstream s;
    data::write_demographics(s, city.demographics);
    write_text(dir / "demographics.csv", s.str());
  }
  {
    std::ostringstream s;
    data::write_adjacency_edges(s, city.graph);
    write_text(dir / "adjacency.csv", s.str());
  }
  const json manifest = {
      {"generator",
       {{"n_regions", cfg.n_regions},
        {"n_steps", cfg.n_steps},
        {"segregation", cfg.segregation_strength},
        {"noise", cfg.noise_scale},
        {"base_demand", cfg.base_demand},
        {"seed", cfg.seed},
        {"period_steps", cfg.period_steps},
        {"kernel_sigma", cfg.kernel_sigma},
        {"kernel_threshold", cfg.kernel_threshold}}},
      {"bin_minutes", cfg.bin_minutes},
      {"region_ids", city.graph.region_ids()},
      {"files", {"trips.csv", "demographics.csv", "adjacency.csv"}},
  };
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << cfg.n_regions << " regions x " << cfg.n_steps << " steps to "
            << dir.string() << "\n";
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data_dir;
  std::string config_file;
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool force = false;
};

int run_train(const TrainArgs& args) {
  const auto settings = resolve_settings(args.config_file, args.variant, args.seed);
  const auto ds = run_io::load_dataset(args.data_dir);
  run_io::prepare_out_dir(args.out_dir, args.force);
  const auto record = trainer::train(ds.graph, ds.demand, &ds.demographics, settings.window,
                                     settings.train, settings.loss);
  run_io::write_run_record(args.out_dir, record, ds.graph.region_ids());
  write_text(fs::path(args.out_dir) / "run_config.json", settings_json(settings).dump(2) + "\n");
  const auto& m = record.test_metrics;
  std::cout << loss::to_string(record.variant) << " seed " << record.seed << ": MAE " << m.mae
            << ", epochs " << record.epochs.size() << ", best " << record.best_epoch << "\n";
  return 0;
}

// --- ablate -----------------------------------------------------------------

struct AblateArgs {
  std::string data_dir;
  std::string seeds;
  std::string config_file;
  std::string out_dir;
  int jobs = 1;
  bool force = false;
};

int run_ablate(const AblateArgs& args) {
  const auto seeds = parse_seed_list(args.seeds);
  if (args.jobs < 1) throw std::invalid_argument("--jobs must be >= 1");
  const auto settings = resolve_settings(args.config_file, std::nullopt, std::nullopt);
  const auto ds = run_io::load_dataset(args.data_dir);
  run_io::prepare_out_dir(args.out_dir, args.force);

  // Each cell keeps the file's explicit loss weights; the variant decides
  // which terms are on.
  const loss::LossConfig base = settings.loss;
  auto run = [&](const trainer::TrainConfig& cell) {
    auto cell_loss = loss::variant_config(cell.variant).loss;
    cell_loss.lambda_s = base.lambda_s;
    cell_loss.lambda_d = base.lambda_d;
    return trainer::train(ds.graph, ds.demand, &ds.demographics, settings.window, cell,
                          cell_loss);
  };
  const auto result = trainer::run_ablation(ds.graph, ds.demand, &ds.demographics,
                                            settings.window, settings.train, seeds,
                                            args.jobs, run);
  const fs::path dir = args.out_dir;
  write_text(dir / "ablation.csv", report::ablation_table_csv(result));
  write_text(dir / "cells.csv", report::ablation_cells_csv(result));
  for (const auto& cell : result.cells) {
    if (!cell.record) continue;
    run_io::write_run_record(
        dir / "runs" / (std::string(loss::to_string(cell.variant)) + "_seed" +
                        std::to_string(cell.seed)),
        *cell.record, ds.graph.region_ids());
  }
  int failed = 0;
  for (const auto& row : result.rows) failed += row.runs_failed;
  std::cout << result.cells.size() << " runs, " << failed << " failed; table in "
            << (dir / "ablation.csv").string() << "\n";
  return 0;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> record_dirs;
  std::string geometry;
  std::optional<std::string> focus_region;
  std::string out_dir;
  bool force = false;
};

std::string record_label(const fs::path& dir) {
  auto p = dir;
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

std::optional<report::RegionMatrix> read_matrix_if_present(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  std::ifstream in(path, std::ios::binary);
  return report::parse_region_matrix(in);
}

int run_report(const ReportArgs& args) {
  if (args.record_dirs.empty()) throw std::invalid_argument("--record-dirs: no records given");
  std::vector<report::LabeledMetrics> rows;
  std::vector<std::string> labels;
  std::map<std::string, int> seen;
  for (const auto& d : args.record_dirs) {
    const auto stored = run_io::read_metrics(d);
    std::string label = record_label(d);
    if (int n = seen[label]++; n > 0) label += "_" + std::to_string(n + 1);
    labels.push_back(label);
    rows.push_back({label, stored.variant, stored.metrics});
  }
  run_io::prepare_out_dir(args.out_dir, args.force);
  const fs::path out = args.out_dir;
  const auto table = report::export_metrics_table(rows);
  write_text(out / "comparison.csv", table.csv);
  write_text(out / "comparison.json", table.json);

  for (std::size_t i = 0; i < args.record_dirs.size(); ++i) {
    const fs::path rec = args.record_dirs[i];
    const fs::path dest = out / labels[i];
    fs::create_directories(dest);
    std::ifstream rin(rec / "residuals.csv", std::ios::binary);
    if (!rin) throw std::runtime_error("record " + rec.string() + " has no residuals.csv");
    const auto map = report::parse_residual_map(rin);
    const ResidualVector residual(map.values);
    {
      std::ostringstream s;
      report::export_residual_map(s, residual, map.region_ids);
      write_text(dest / "residuals.csv", s.str());
    }
    if (!args.geometry.empty()) {
      std::ifstream gin(args.geometry, std::ios::binary);
      if (!gin) throw std::runtime_error("cannot open geometry " + args.geometry);
      write_text(dest / "residuals.geojson",
                 report::enrich_geometry(gin, residual, map.region_ids));
    }
    const auto weights = read_matrix_if_present(rec / "attention.csv");
    if (!weights) continue;
    const auto scores = read_matrix_if_present(rec / "attention_scores.csv");
    const auto exported = report::export_attention(
        weights->values,
        scores ? std::optional<Matrix>(scores->values) : std::nullopt,
        weights->region_ids, args.focus_region);
    write_text(dest / "attention.csv", exported.weights_csv);
    if (exported.focus_csv) write_text(dest / "attention_focus.csv", *exported.focus_csv);
  }
  std::cout << "compared " << rows.size() << " records; see "
            << (out / "comparison.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Fairness-aware spatiotemporal demand forecasting."};
  app.require_subcommand(1);
  app.footer(kPrecedence);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic city dataset");
  generate->add_option("--n-regions", gen.city.n_regions, "Number of regions (>= 4)")
      ->capture_default_str();
  generate->add_option("--n-steps", gen.city.n_steps, "Number of time bins")
      ->capture_default_str();
  generate->add_option("--segregation", gen.city.segregation_strength,
                       "Segregation strength in [0, 1]")
      ->capture_default_str();
  generate->add_option("--noise", gen.city.noise_scale, "Base noise standard deviation")
      ->capture_default_str();
  generate->add_option("--seed", gen.seed, "Random seed (default: EQUIGRID_SEED or 0)");
  generate->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  generate->add_flag("--force", gen.force, "Replace the contents of a non-empty out-dir");
  generate->footer(kPrecedence);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train and evaluate one variant");
  train->add_option("--data-dir", tr.data_dir, "Dataset directory")->required();
  train->add_option("--config-file", tr.config_file, "JSON run config");
  train->add_option("--variant", tr.variant, "Variant: " + loss::valid_variant_names());
  train->add_option("--seed", tr.seed, "Random seed (default: config, EQUIGRID_SEED, 0)");
  train->add_option("--out-dir", tr.out_dir, "Run record directory")->required();
  train->add_flag("--force", tr.force, "Replace the contents of a non-empty out-dir");
  train->footer(kPrecedence);

  AblateArgs ab;
  auto* ablate = app.add_subcommand("ablate", "Run every variant for every seed");
  ablate->add_option("--data-dir", ab.data_dir, "Dataset directory")->required();
  ablate->add_option("--seeds", ab.seeds, "Comma-separated seeds, e.g. 1,2,3")->required();
  ablate->add_option("--config-file", ab.config_file, "JSON run config shared by all cells");
  ablate->add_option("--out-dir", ab.out_dir, "Output directory")->required();
  ablate->add_option("--jobs", ab.jobs, "Cells trained concurrently")->capture_default_str();
  ablate->add_flag("--force", ab.force, "Replace the contents of a non-empty out-dir");
  ablate->footer(kPrecedence);

  ReportArgs rep;
  auto* rpt = app.add_subcommand("report", "Compare run records and export maps");
  rpt->add_option("--record-dirs", rep.record_dirs, "Run record directories")
      ->required()
      ->delimiter(',');
  rpt->add_option("--geometry", rep.geometry,
                  "GeoJSON FeatureCollection with a region_id property per feature");
  rpt->add_option("--focus-region", rep.focus_region,
                  "Also export one region's attention row with raw scores");
  rpt->add_option("--out-dir", rep.out_dir, "Output directory")->required();
  rpt->add_flag("--force", rep.force, "Replace the contents of a non-empty out-dir");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return run_generate(gen);
    if (*train) return run_train(tr);
    if (*ablate) return run_ablate(ab);
    if (*rpt) return run_report(rep);
  } catch (const trainer::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
