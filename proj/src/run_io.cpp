#include "equigrid/run_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "equigrid/data.hpp"
#include "equigrid/report.hpp"
#include "text.hpp"

namespace equigrid::run_io {

using nlohmann::json;

RunSettings default_settings() {
  RunSettings s;
  s.loss = loss::variant_config(s.train.variant).loss;
  return s;
}

void apply_config(const std::string& json_text, RunSettings& s) {
  json cfg;
  try {
    cfg = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("run config is not valid JSON: ") + e.what());
  }
  if (!cfg.is_object()) throw std::invalid_argument("run config must be a JSON object");

  static const std::vector<std::string> known = {
      "epochs",          "batch_size",      "learning_rate", "seed",
      "variant",         "early_stop_patience", "optimizer", "attention_width",
      "hidden_channels", "temporal_kernel", "lookback",      "horizon",
      "lambda_s",        "lambda_d",        "dd_kind",       "use_ds"};
  for (const auto& [key, value] : cfg.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown run config key '" + key + "'");
    }
  }
  try {
    if (cfg.contains("variant")) {
      s.train.variant = loss::variant_from_string(cfg["variant"].get<std::string>());
      s.loss = loss::variant_config(s.train.variant).loss;
    }
    if (cfg.contains("epochs")) s.train.epochs = cfg["epochs"].get<int>();
    if (cfg.contains("batch_size")) s.train.batch_size = cfg["batch_size"].get<int>();
    if (cfg.contains("learning_rate")) s.train.learning_rate = cfg["learning_rate"].get<double>();
    if (cfg.contains("seed")) s.train.seed = cfg["seed"].get<std::uint64_t>();
    if (cfg.contains("early_stop_patience")) {
      s.train.early_stop_patience = cfg["early_stop_patience"].get<int>();
    }
    if (cfg.contains("optimizer")) {
      s.train.optimizer = trainer::optimizer_from_string(cfg["optimizer"].get<std::string>());
    }
    if (cfg.contains("attention_width")) s.train.attention_width = cfg["attention_width"].get<int>();
    if (cfg.contains("hidden_channels")) s.train.hidden_channels = cfg["hidden_channels"].get<int>();
    if (cfg.contains("temporal_kernel")) s.train.temporal_kernel = cfg["temporal_kernel"].get<int>();
    if (cfg.contains("lookback")) s.window.lookback = cfg["lookback"].get<int>();
    if (cfg.contains("horizon")) s.window.horizon = cfg["horizon"].get<int>();
    if (cfg.contains("lambda_s")) s.loss.lambda_s = cfg["lambda_s"].get<double>();
    if (cfg.contains("lambda_d")) s.loss.lambda_d = cfg["lambda_d"].get<double>();
    if (cfg.contains("dd_kind")) {
      s.loss.dd_kind = loss::regularizer_from_string(cfg["dd_kind"].get<std::string>());
    }
    if (cfg.contains("use_ds")) s.loss.use_ds = cfg["use_ds"].get<bool>();
  } catch (const json::type_error& e) {
    throw std::invalid_argument(std::string("run config has a value of the wrong type: ") +
                                e.what());
  }
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

std::string metrics_json(const trainer::RunRecord& record) {
  const auto& m = record.test_metrics;
  json j = {
      {"variant", std::string(loss::to_string(record.variant))},
      {"seed", record.seed},
      {"epochs_run", record.epochs.size()},
      {"best_epoch", record.best_epoch},
      {"test_metrics",
       {{"mae", m.mae},
        {"smape", m.smape},
        {"gei", m.gei},
        {"sdi", optional_json(m.sdi)},
        {"morans_i", optional_json(m.morans_i)},
        {"spatial_disparity", m.spatial_disparity},
        {"demographic_disparity", optional_json(m.demographic_disparity)}}},
  };
  return j.dump(2) + "\n";
}

void write_run_record(const fs::path& dir, const trainer::RunRecord& record,
                      const std::vector<std::string>& region_ids) {
  fs::create_directories(dir);
  write_file(dir / "metrics.json", metrics_json(record));

  std::ostringstream curve;
  curve << "epoch,prediction,spatial,regularizer,total,val_mse\n";
  for (const auto& e : record.epochs) {
    curve << e.epoch << ',' << text::exact(e.train.prediction) << ','
          << text::exact(e.train.spatial) << ',' << text::exact(e.train.regularizer) << ','
          << text::exact(e.train.total) << ','
          << (std::isfinite(e.val_mse) ? text::exact(e.val_mse) : std::string("NA")) << '\n';
  }
  write_file(dir / "loss_curve.csv", curve.str());

  std::ostringstream residuals;
  report::export_residual_map(residuals, record.test_residual, region_ids);
  write_file(dir / "residuals.csv", residuals.str());

  if (record.attention_weights) {
    std::ostringstream att;
    report::write_region_matrix(att, *record.attention_weights, region_ids);
    write_file(dir / "attention.csv", att.str());
    if (record.attention_scores) {
      std::ostringstream scores;
      report::write_region_matrix(scores, *record.attention_scores, region_ids);
      write_file(dir / "attention_scores.csv", scores.str());
    }
  }
  if (record.adjacency_adapted) {
    std::ostringstream adj;
    report::write_region_matrix(adj, *record.adjacency_adapted, region_ids);
    write_file(dir / "adjacency_adapted.csv", adj.str());
  }
  if (!record.checkpoint.empty()) write_file(dir / "model.ckpt", record.checkpoint);
  write_file(dir / "timing.json",
             json({{"wall_seconds", record.wall_seconds}}).dump(2) + "\n");
}

StoredMetrics read_metrics(const fs::path& dir) {
  const fs::path path = dir / "metrics.json";
  if (!fs::exists(path)) {
    throw std::runtime_error("record " + dir.string() + " has no metrics.json");
  }
  auto in = open_in(path);
  StoredMetrics out;
  try {
    const json j = json::parse(in);
    out.variant = j.at("variant").get<std::string>();
    out.seed = j.at("seed").get<std::uint64_t>();
    const json& m = j.at("test_metrics");
    out.metrics.mae = m.at("mae").get<double>();
    out.metrics.smape = m.at("smape").get<double>();
    out.metrics.gei = m.at("gei").get<double>();
    out.metrics.spatial_disparity = m.at("spatial_disparity").get<double>();
    out.metrics.sdi = optional_from(m, "sdi");
    out.metrics.morans_i = optional_from(m, "morans_i");
    out.metrics.demographic_disparity = optional_from(m, "demographic_disparity");
  } catch (const json::exception& e) {
    throw std::runtime_error("record " + dir.string() + ": malformed metrics.json (" +
                             e.what() + ")");
  }
  return out;
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("data directory not found: " + dir.string());
  }
  std::vector<std::string> ids;
  int bin_minutes = 15;
  const fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    auto in = open_in(manifest);
    const json j = json::parse(in);
    ids = j.at("region_ids").get<std::vector<std::string>>();
    bin_minutes = j.value("bin_minutes", 15);
  } else {
    auto in = open_in(dir / "demographics.csv");
    bool header = false;
    text::for_each_record(in, [&](std::string_view line, std::size_t) {
      if (!header) {
        header = true;
        return;
      }
      ids.emplace_back(text::split_fields(line)[0]);
    });
  }

  Matrix adjacency;
  {
    auto in = open_in(dir / "adjacency.csv");
    adjacency = data::load_adjacency_edges(in, ids);
  }
  RegionGraph graph(ids, std::move(adjacency));
  auto trips_in = open_in(dir / "trips.csv");
  DemandTensor demand = data::load_trips(trips_in, graph, bin_minutes);
  auto demo_in = open_in(dir / "demographics.csv");
  DemographicTable demo = data::load_demographics(demo_in, graph);
  return Dataset{std::move(graph), std::move(demand), std::move(demo)};
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) {
      throw std::runtime_error("output path exists and is not a directory: " + dir.string());
    }
    if (!fs::is_empty(dir)) {
      if (!force) {
        throw std::runtime_error("output directory " + dir.string() +
                                 " is not empty (use --force to overwrite)");
      }
      for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
}

}  // namespace equigrid::run_io
