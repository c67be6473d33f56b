#include "equigrid/report.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "text.hpp"

namespace equigrid::report {

namespace {

using nlohmann::json;

void require_size(std::size_t ids, Eigen::Index n) {
  if (ids != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("region id count does not match values");
  }
}

std::string cell(const std::optional<double>& v) {
  return v ? text::sig9(*v) : std::string("NA");
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

void export_residual_map(std::ostream& out, const ResidualVector& r,
                         const std::vector<std::string>& region_ids) {
  require_size(region_ids.size(), r.size());
  out << "# mean_residual = observed - predicted; positive means under-prediction\n";
  out << "region_id,mean_residual\n";
  for (std::size_t i = 0; i < region_ids.size(); ++i) {
    out << region_ids[i] << ',' << text::exact(r[static_cast<Eigen::Index>(i)]) << '\n';
  }
}

RegionValues parse_residual_map(std::istream& in) {
  RegionValues out;
  std::vector<double> values;
  bool header = false;
  text::for_each_record(in, [&](std::string_view line, std::size_t number) {
    if (!header) {
      if (line != "region_id,mean_residual") {
        throw std::runtime_error("residual map: unexpected header");
      }
      header = true;
      return;
    }
    const auto f = text::split_fields(line);
    const auto v = f.size() == 2 ? text::parse_double(f[1]) : std::nullopt;
    if (!v) throw std::runtime_error("residual map: malformed line " + std::to_string(number));
    out.region_ids.emplace_back(f[0]);
    values.push_back(*v);
  });
  out.values = Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  return out;
}

std::string enrich_geometry(std::istream& geojson, const ResidualVector& r,
                            const std::vector<std::string>& region_ids) {
  require_size(region_ids.size(), r.size());
  json doc = json::parse(geojson);
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw std::runtime_error("geometry is not a FeatureCollection");
  }
  std::set<std::string> in_geometry;
  std::vector<std::string> unknown;
  for (auto& feature : doc["features"]) {
    const auto& props = feature["properties"];
    if (!props.is_object() || !props.contains("region_id") || !props["region_id"].is_string()) {
      throw std::runtime_error("geometry feature without a string region_id property");
    }
    const std::string id = props["region_id"].get<std::string>();
    in_geometry.insert(id);
    auto it = std::find(region_ids.begin(), region_ids.end(), id);
    if (it == region_ids.end()) {
      unknown.push_back(id);
      continue;
    }
    feature["properties"]["mean_residual"] =
        r[static_cast<Eigen::Index>(it - region_ids.begin())];
  }
  std::vector<std::string> missing;
  for (const auto& id : region_ids) {
    if (!in_geometry.count(id)) missing.push_back(id);
  }
  if (!missing.empty() || !unknown.empty()) {
    std::string msg = "geometry does not match regions;";
    if (!missing.empty()) {
      msg += " missing from geometry:";
      for (const auto& id : missing) msg += " " + id;
      msg += ";";
    }
    if (!unknown.empty()) {
      msg += " unknown in geometry:";
      for (const auto& id : unknown) msg += " " + id;
    }
    throw std::runtime_error(msg);
  }
  return doc.dump(2) + "\n";
}

void write_region_matrix(std::ostream& out, const Matrix& m,
                         const std::vector<std::string>& region_ids) {
  require_size(region_ids.size(), m.rows());
  require_size(region_ids.size(), m.cols());
  out << "region_id";
  for (const auto& id : region_ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << region_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << text::exact(m(i, j));
    out << '\n';
  }
}

RegionMatrix parse_region_matrix(std::istream& in) {
  RegionMatrix out;
  std::vector<std::vector<double>> rows;
  bool header = false;
  text::for_each_record(in, [&](std::string_view line, std::size_t number) {
    const auto f = text::split_fields(line);
    if (!header) {
      if (f.empty() || f[0] != "region_id") throw std::runtime_error("matrix: bad header");
      for (std::size_t j = 1; j < f.size(); ++j) out.region_ids.emplace_back(f[j]);
      header = true;
      return;
    }
    if (f.size() != out.region_ids.size() + 1) {
      throw std::runtime_error("matrix: wrong field count on line " + std::to_string(number));
    }
    std::vector<double> row;
    for (std::size_t j = 1; j < f.size(); ++j) {
      const auto v = text::parse_double(f[j]);
      if (!v) throw std::runtime_error("matrix: bad value on line " + std::to_string(number));
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  });
  const auto n = static_cast<Eigen::Index>(out.region_ids.size());
  if (static_cast<Eigen::Index>(rows.size()) != n) {
    throw std::runtime_error("matrix: expected a square table");
  }
  out.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      out.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return out;
}

AttentionExport export_attention(const std::optional<Matrix>& weights,
                                 const std::optional<Matrix>& scores,
                                 const std::vector<std::string>& region_ids,
                                 const std::optional<std::string>& focus_region) {
  if (!weights) {
    throw std::invalid_argument(
        "no attention weights: the attention block has not been updated (control variant?)");
  }
  AttentionExport out;
  std::ostringstream full;
  write_region_matrix(full, *weights, region_ids);
  out.weights_csv = full.str();
  if (focus_region) {
    auto it = std::find(region_ids.begin(), region_ids.end(), *focus_region);
    if (it == region_ids.end()) {
      throw std::invalid_argument("unknown focus region '" + *focus_region + "'");
    }
    const auto i = static_cast<Eigen::Index>(it - region_ids.begin());
    std::ostringstream focus;
    focus << "region_id,attention_score,attention_weight\n";
    for (std::size_t j = 0; j < region_ids.size(); ++j) {
      const auto k = static_cast<Eigen::Index>(j);
      focus << region_ids[j] << ',' << (scores ? text::exact((*scores)(i, k)) : "NA") << ','
            << text::exact((*weights)(i, k)) << '\n';
    }
    out.focus_csv = focus.str();
  }
  return out;
}

AttentionExport export_attention(const raa::AttentionState& state,
                                 const std::vector<std::string>& region_ids,
                                 const std::optional<std::string>& focus_region) {
  return export_attention(state.last_weights(), state.last_scores(), region_ids,
                          focus_region);
}

std::optional<double> percent_delta(std::optional<double> variant,
                                    std::optional<double> original) {
  if (!variant || !original || *original == 0.0) return std::nullopt;
  return (*variant - *original) / std::abs(*original) * 100.0;
}

MetricsTable export_metrics_table(const std::vector<LabeledMetrics>& records) {
  const LabeledMetrics* original = nullptr;
  for (const auto& r : records) {
    if (r.variant == "original") {
      original = &r;
      break;
    }
  }
  if (!original) {
    throw std::invalid_argument(
        "metrics table needs an 'original' record to compute deltas");
  }
  using Getter = std::optional<double> (*)(const metrics::MetricsReport&);
  const std::vector<std::pair<const char*, Getter>> columns = {
      {"MAE", [](const metrics::MetricsReport& m) -> std::optional<double> { return m.mae; }},
      {"SMAPE", [](const metrics::MetricsReport& m) -> std::optional<double> { return m.smape; }},
      {"GEI", [](const metrics::MetricsReport& m) -> std::optional<double> { return m.gei; }},
      {"SDI", [](const metrics::MetricsReport& m) { return m.sdi; }},
      {"Moran's I", [](const metrics::MetricsReport& m) { return m.morans_i; }},
  };

  std::ostringstream csv;
  csv << "record,variant";
  for (const auto& [name, get] : columns) csv << ',' << name;
  for (const auto& [name, get] : columns) csv << ',' << name << " delta %";
  csv << '\n';
  json rows = json::array();
  for (const auto& r : records) {
    csv << r.label << ',' << r.variant;
    json row = {{"record", r.label}, {"variant", r.variant}};
    json deltas = json::object();
    for (const auto& [name, get] : columns) {
      csv << ',' << cell(get(r.metrics));
      row[name] = optional_json(get(r.metrics));
    }
    for (const auto& [name, get] : columns) {
      const auto d = percent_delta(get(r.metrics), get(original->metrics));
      csv << ',' << cell(d);
      deltas[name] = optional_json(d);
    }
    csv << '\n';
    row["delta_percent"] = deltas;
    rows.push_back(row);
  }
  MetricsTable out;
  out.csv = csv.str();
  out.json = json({{"baseline", original->label}, {"rows", rows}}).dump(2) + "\n";
  return out;
}

std::string ablation_table_csv(const trainer::AblationResult& result) {
  std::ostringstream out;
  out << "variant,runs_ok,runs_failed,MAE,SMAPE,GEI,SDI,Moran's I\n";
  for (const auto& row : result.rows) {
    out << loss::to_string(row.variant) << ',' << row.runs_ok << ',' << row.runs_failed
        << ',' << cell(row.mae) << ',' << cell(row.smape) << ',' << cell(row.gei) << ','
        << cell(row.sdi) << ',' << cell(row.morans_i) << '\n';
  }
  return out.str();
}

std::string ablation_cells_csv(const trainer::AblationResult& result) {
  std::ostringstream out;
  out << "variant,seed,status,MAE,SMAPE,GEI,SDI,Moran's I,error\n";
  for (const auto& c : result.cells) {
    out << loss::to_string(c.variant) << ',' << c.seed << ',';
    if (!c.record) {
      std::string err = c.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      out << "failed,NA,NA,NA,NA,NA," << err << '\n';
      continue;
    }
    const auto& m = c.record->test_metrics;
    out << "ok," << cell(m.mae) << ',' << cell(m.smape) << ',' << cell(m.gei) << ','
        << cell(m.sdi) << ',' << cell(m.morans_i) << ",\n";
  }
  return out.str();
}

}  // namespace equigrid::report
