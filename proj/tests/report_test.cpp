#include <gtest/gtest.h>

#include <json.hpp>
#include <random>
#include <sstream>

#include "equigrid/report.hpp"
#include "support.hpp"

using namespace equigrid;
using namespace equigrid::report;
using nlohmann::json;

namespace {

std::string geometry_for(const std::vector<std::string>& ids) {
  json features = json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    features.push_back({{"type", "Feature"},
                        {"properties", {{"region_id", ids[i]}, {"name", "zone"}}},
                        {"geometry", {{"type", "Point"}, {"coordinates", {double(i), 0.0}}}}});
  }
  return json({{"type", "FeatureCollection"}, {"features", features}}).dump();
}

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(ResidualMap, TwoRegions) {
  Vector r(2);
  r << 0.5, -0.5;
  std::ostringstream out;
  export_residual_map(out, ResidualVector(r), {"A", "B"});
  const auto lines = csv_lines(out.str());
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0][0], '#');
  EXPECT_NE(lines[0].find("under-prediction"), std::string::npos);
  EXPECT_EQ(lines[1], "region_id,mean_residual");
  EXPECT_EQ(lines[2], "A,0.5");
  EXPECT_EQ(lines[3], "B,-0.5");
}

TEST(ResidualMap, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector r = support::random_vector(13, rng, std::pow(10.0, trial % 9 - 4));
    std::stringstream buf;
    export_residual_map(buf, ResidualVector(r), support::region_ids(13));
    const auto back = parse_residual_map(buf);
    EXPECT_EQ(back.region_ids, support::region_ids(13));
    EXPECT_LE((back.values - r).cwiseAbs().maxCoeff(), 1e-12 * r.cwiseAbs().maxCoeff());
    EXPECT_EQ(back.values, r);
  }
}

TEST(ResidualMap, ExportIsByteDeterministic) {
  std::mt19937_64 rng(2);
  const ResidualVector r(support::random_vector(8, rng));
  std::ostringstream a, b;
  export_residual_map(a, r, support::region_ids(8));
  export_residual_map(b, r, support::region_ids(8));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Geometry, EnrichedWithResiduals) {
  Vector r(3);
  r << 1.5, -2.0, 0.25;
  const std::vector<std::string> ids{"A", "B", "C"};
  std::istringstream geo(geometry_for({"C", "A", "B"}));
  const json out = json::parse(enrich_geometry(geo, ResidualVector(r), ids));
  ASSERT_EQ(out["features"].size(), 3u);
  EXPECT_EQ(out["features"][0]["properties"]["mean_residual"].get<double>(), 0.25);
  EXPECT_EQ(out["features"][1]["properties"]["mean_residual"].get<double>(), 1.5);
  EXPECT_EQ(out["features"][2]["properties"]["name"], "zone");
}

TEST(Geometry, MismatchNamesRegion) {
  const std::vector<std::string> ids{"A", "B", "C"};
  std::istringstream geo(geometry_for({"A", "C"}));
  try {
    enrich_geometry(geo, ResidualVector(Vector::Zero(3)), ids);
    FAIL() << "expected rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("B"), std::string::npos) << e.what();
  }
  std::istringstream extra(geometry_for({"A", "B", "C", "Zed"}));
  try {
    enrich_geometry(extra, ResidualVector(Vector::Zero(3)), ids);
    FAIL() << "expected rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("Zed"), std::string::npos) << e.what();
  }
}

TEST(Matrix, RoundTrip) {
  std::mt19937_64 rng(3);
  const Matrix m = support::random_adjacency(7, rng) * 1e-3;
  std::stringstream buf;
  write_region_matrix(buf, m, support::region_ids(7));
  const auto back = parse_region_matrix(buf);
  EXPECT_EQ(back.region_ids, support::region_ids(7));
  EXPECT_EQ(back.values, m);
}

TEST(Attention, RowsSumToOneAndFocusMatchesRow) {
  std::mt19937_64 rng(4);
  const Matrix a = support::random_adjacency(6, rng);
  auto state = raa::epoch_update(ResidualVector(support::random_vector(6, rng, 3.0)),
                                 raa::AttentionState(raa::init_attention_weights(16, 1), a), a);
  const auto ids = support::region_ids(6);
  const auto ex = export_attention(state, ids, std::string("Z2"));
  std::istringstream full(ex.weights_csv);
  const auto h = parse_region_matrix(full);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(h.values.row(i).sum(), 1.0, 1e-6);
  ASSERT_TRUE(ex.focus_csv);
  const auto lines = csv_lines(*ex.focus_csv);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "region_id,attention_score,attention_weight");
  for (std::size_t j = 0; j < 6; ++j) {
    const auto comma1 = lines[j + 1].find(',');
    const auto comma2 = lines[j + 1].rfind(',');
    EXPECT_EQ(lines[j + 1].substr(0, comma1), ids[j]);
    EXPECT_EQ(std::stod(lines[j + 1].substr(comma1 + 1, comma2 - comma1 - 1)),
              (*state.last_scores())(2, static_cast<Eigen::Index>(j)));
    EXPECT_EQ(std::stod(lines[j + 1].substr(comma2 + 1)), h.values(2, static_cast<Eigen::Index>(j)));
  }
}

TEST(Attention, ZeroResidualExportsUniform) {
  const Matrix a = Matrix::Ones(5, 5);
  auto state = raa::epoch_update(ResidualVector(Vector::Zero(5)),
                                 raa::AttentionState(raa::init_attention_weights(8, 2), a), a);
  std::istringstream full(export_attention(state, support::region_ids(5), std::nullopt).weights_csv);
  const auto h = parse_region_matrix(full);
  EXPECT_LT((h.values.array() - 0.2).abs().maxCoeff(), 1e-12);
}

TEST(Attention, Errors) {
  const Matrix a = Matrix::Ones(3, 3);
  const raa::AttentionState fresh(raa::init_attention_weights(4, 1), a);
  EXPECT_THROW(export_attention(fresh, support::region_ids(3), std::nullopt), std::invalid_argument);
  const auto done = raa::epoch_update(ResidualVector(Vector::Ones(3)), fresh, a);
  EXPECT_THROW(export_attention(done, support::region_ids(3), std::string("nope")),
               std::invalid_argument);
}

TEST(MetricsTable, DeltaAgainstOriginal) {
  metrics::MetricsReport base, variant;
  base.mae = 8.0;
  variant.mae = 7.2;
  base.morans_i = 0.4;
  variant.morans_i = -0.2;
  base.sdi = 0.5;
  const auto t = export_metrics_table({{"run_a", "original", base}, {"run_b", "raa_ds", variant}});
  EXPECT_NEAR(*percent_delta(7.2, 8.0), -10.0, 1e-12);
  const json j = json::parse(t.json);
  EXPECT_EQ(j["baseline"], "run_a");
  EXPECT_NEAR(j["rows"][1]["delta_percent"]["MAE"].get<double>(), -10.0, 1e-12);
  EXPECT_NEAR(j["rows"][1]["delta_percent"]["Moran's I"].get<double>(),
              (-0.2 - 0.4) / 0.4 * 100, 1e-12);
  EXPECT_TRUE(j["rows"][1]["delta_percent"]["SDI"].is_null());
  const auto lines = csv_lines(t.csv);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0].substr(0, 40), "record,variant,MAE,SMAPE,GEI,SDI,Moran's");
  EXPECT_NE(lines[2].find(",-10,"), std::string::npos) << lines[2];
  EXPECT_NE(lines[2].find("NA"), std::string::npos);
}

TEST(MetricsTable, DeltasMatchRecomputation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<LabeledMetrics> recs;
  for (int k = 0; k < 5; ++k) {
    metrics::MetricsReport m;
    m.mae = u(rng) + 4;
    m.smape = u(rng) + 4;
    m.gei = u(rng) + 4;
    m.sdi = u(rng);
    m.morans_i = u(rng) / 3;
    recs.push_back({"r" + std::to_string(k), k == 2 ? "original" : "raa", m});
  }
  const json j = json::parse(export_metrics_table(recs).json);
  for (int k = 0; k < 5; ++k) {
    const auto& d = j["rows"][k]["delta_percent"];
    const auto& o = recs[2].metrics;
    const auto& m = recs[k].metrics;
    EXPECT_NEAR(d["GEI"].get<double>(), (m.gei - o.gei) / std::abs(o.gei) * 100, 1e-9);
    EXPECT_NEAR(d["Moran's I"].get<double>(),
                (*m.morans_i - *o.morans_i) / std::abs(*o.morans_i) * 100, 1e-9);
  }
}

TEST(MetricsTable, MissingOriginalRejected) {
  EXPECT_THROW(export_metrics_table({{"only", "raa_ds", {}}}), std::invalid_argument);
}

TEST(AblationTables, RowOrderAndFailures) {
  trainer::AblationResult res;
  for (auto v : loss::kAllVariants) {
    trainer::AblationCell cell;
    cell.variant = v;
    cell.seed = 1;
    if (v == loss::Variant::kRaaMorans) {
      cell.error = "diverged, badly";
    } else {
      cell.record.emplace();
      cell.record->test_metrics.mae = 1.0 + static_cast<double>(v);
    }
    res.cells.push_back(cell);
  }
  res.rows = trainer::summarize(res.cells);
  const auto table = csv_lines(ablation_table_csv(res));
  ASSERT_EQ(table.size(), 8u);
  EXPECT_EQ(table[0], "variant,runs_ok,runs_failed,MAE,SMAPE,GEI,SDI,Moran's I");
  for (std::size_t k = 0; k < 7; ++k) {
    EXPECT_EQ(table[k + 1].substr(0, table[k + 1].find(',')), loss::to_string(loss::kAllVariants[k]));
  }
  EXPECT_EQ(table[4], "raa_morans,0,1,NA,NA,NA,NA,NA");
  const auto cells = csv_lines(ablation_cells_csv(res));
  ASSERT_EQ(cells.size(), 8u);
  EXPECT_EQ(cells[4].substr(0, 20), "raa_morans,1,failed,");
}
