#include "equigrid/data.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <set>

#include "text.hpp"

namespace equigrid::data {

namespace {

std::runtime_error line_error(std::size_t line, const std::string& what) {
  return std::runtime_error("line " + std::to_string(line) + ": " + what);
}

}  // namespace

DemandTensor load_trips(std::istream& csv, const RegionGraph& graph,
                        int bin_minutes) {
  struct Cell {
    std::size_t region;
    long long t;
    long long count;
  };
  std::vector<Cell> cells;
  bool header_seen = false;
  text::for_each_record(csv, [&](std::string_view line, std::size_t number) {
    if (!header_seen) {
      if (line != "region_id,t_index,count") {
        throw line_error(number, "expected header region_id,t_index,count");
      }
      header_seen = true;
      return;
    }
    const auto fields = text::split_fields(line);
    if (fields.size() != 3) throw line_error(number, "expected 3 fields");
    const std::string id(fields[0]);
    const auto region = graph.index_of(id);
    if (!region) throw line_error(number, "unknown region_id '" + id + "'");
    const auto t = text::parse_int(fields[1]);
    const auto count = text::parse_int(fields[2]);
    if (!t || *t < 0) throw line_error(number, "malformed t_index");
    if (!count) throw line_error(number, "malformed count");
    if (*count < 0) throw line_error(number, "negative count");
    cells.push_back({*region, *t, *count});
  });
  if (cells.empty()) throw std::runtime_error("trips file: no rows");

  long long max_t = 0;
  for (const auto& c : cells) max_t = std::max(max_t, c.t);
  Matrix values = Matrix::Zero(static_cast<Eigen::Index>(graph.size()),
                               static_cast<Eigen::Index>(max_t + 1));
  for (const auto& c : cells) {
    values(static_cast<Eigen::Index>(c.region), static_cast<Eigen::Index>(c.t)) +=
        static_cast<double>(c.count);
  }
  return DemandTensor(std::move(values), bin_minutes);
}

DemographicTable load_demographics(std::istream& csv, const RegionGraph& graph) {
  enum class Layout { kFractions, kCounts };
  std::optional<Layout> layout;
  const auto n = static_cast<Eigen::Index>(graph.size());
  Vector minority = Vector::Constant(n, -1.0);
  Vector majority = Vector::Constant(n, -1.0);
  std::vector<bool> present(graph.size(), false);

  text::for_each_record(csv, [&](std::string_view line, std::size_t number) {
    if (!layout) {
      if (line == "region_id,minority_frac,majority_frac") {
        layout = Layout::kFractions;
      } else if (line == "region_id,total,minority,majority") {
        layout = Layout::kCounts;
      } else {
        throw line_error(number, "unrecognized demographics header");
      }
      return;
    }
    const auto fields = text::split_fields(line);
    const std::size_t expected = *layout == Layout::kFractions ? 3 : 4;
    if (fields.size() != expected) {
      throw line_error(number, "expected " + std::to_string(expected) + " fields");
    }
    const std::string id(fields[0]);
    const auto region = graph.index_of(id);
    if (!region) throw line_error(number, "unknown region_id '" + id + "'");
    if (present[*region]) throw line_error(number, "duplicate region '" + id + "'");
    present[*region] = true;

    double minor = 0.0;
    double major = 0.0;
    if (*layout == Layout::kFractions) {
      const auto a = text::parse_double(fields[1]);
      const auto b = text::parse_double(fields[2]);
      if (!a || !b) throw line_error(number, "malformed fraction");
      minor = *a;
      major = *b;
    } else {
      const auto total = text::parse_double(fields[1]);
      const auto a = text::parse_double(fields[2]);
      const auto b = text::parse_double(fields[3]);
      if (!total || !a || !b) throw line_error(number, "malformed count");
      if (!(*total > 0.0)) throw line_error(number, "total must be positive");
      minor = *a / *total;
      major = *b / *total;
    }
    for (double f : {minor, major}) {
      if (!(f >= 0.0 && f <= 1.0)) {
        throw line_error(number, "fraction outside [0,1] for '" + id + "'");
      }
    }
    const auto i = static_cast<Eigen::Index>(*region);
    minority[i] = minor;
    majority[i] = major;
  });
  if (!layout) throw std::runtime_error("demographics file: no rows");
  for (std::size_t i = 0; i < present.size(); ++i) {
    if (!present[i]) {
      throw std::runtime_error("demographics missing region '" +
                               graph.region_ids()[i] + "'");
    }
  }
  return DemographicTable(graph.region_ids(), std::move(minority),
                          std::move(majority));
}

Matrix load_adjacency_edges(std::istream& csv,
                            const std::vector<std::string>& region_ids) {
  std::map<std::string, Eigen::Index, std::less<>> index;
  for (std::size_t i = 0; i < region_ids.size(); ++i) {
    index.emplace(region_ids[i], static_cast<Eigen::Index>(i));
  }
  const auto n = static_cast<Eigen::Index>(region_ids.size());
  Matrix a = Matrix::Zero(n, n);
  std::set<std::pair<Eigen::Index, Eigen::Index>> seen;
  bool header_seen = false;
  text::for_each_record(csv, [&](std::string_view line, std::size_t number) {
    if (!header_seen) {
      if (line != "src,dst,weight") {
        throw line_error(number, "expected header src,dst,weight");
      }
      header_seen = true;
      return;
    }
    const auto fields = text::split_fields(line);
    if (fields.size() != 3) throw line_error(number, "expected 3 fields");
    const auto src = index.find(fields[0]);
    const auto dst = index.find(fields[1]);
    if (src == index.end() || dst == index.end()) {
      throw line_error(number, "unknown region in edge");
    }
    const auto w = text::parse_double(fields[2]);
    if (!w || !std::isfinite(*w) || *w < 0.0) {
      throw line_error(number, "weight must be a finite nonnegative number");
    }
    if (!seen.emplace(src->second, dst->second).second) {
      throw line_error(number, "duplicate edge");
    }
    a(src->second, dst->second) = *w;
  });
  if (!header_seen) throw std::runtime_error("adjacency file: no rows");
  return a;
}

void write_trips(std::ostream& out, const RegionGraph& graph,
                 const DemandTensor& demand) {
  out << "region_id,t_index,count\n";
  const auto& v = demand.values();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const auto& id = graph.region_ids()[static_cast<std::size_t>(i)];
    for (Eigen::Index t = 0; t < v.cols(); ++t) {
      const auto count = static_cast<long long>(std::llround(std::max(0.0, v(i, t))));
      out << id << ',' << t << ',' << count << '\n';
    }
  }
}

void write_demographics(std::ostream& out, const DemographicTable& table) {
  out << "region_id,minority_frac,majority_frac\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << table.region_ids()[i] << ',' << text::exact(table.minority_frac()[k])
        << ',' << text::exact(table.majority_frac()[k]) << '\n';
  }
}

void write_adjacency_edges(std::ostream& out, const RegionGraph& graph) {
  out << "src,dst,weight\n";
  const auto& a = graph.adjacency();
  const auto& ids = graph.region_ids();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) > 0.0) {
        out << ids[static_cast<std::size_t>(i)] << ','
            << ids[static_cast<std::size_t>(j)] << ',' << text::exact(a(i, j))
            << '\n';
      }
    }
  }
}

void SyntheticCityConfig::validate() const {
  if (n_regions < 4) throw std::invalid_argument("n_regions must be >= 4");
  if (n_steps < 1) throw std::invalid_argument("n_steps must be positive");
  if (!(segregation_strength >= 0.0 && segregation_strength <= 1.0)) {
    throw std::invalid_argument("segregation_strength must lie in [0,1]");
  }
  if (!(base_demand > 0.0)) throw std::invalid_argument("base_demand must be positive");
  if (!(noise_scale >= 0.0)) throw std::invalid_argument("noise_scale must be >= 0");
  if (bin_minutes < 1) throw std::invalid_argument("bin_minutes must be positive");
  if (period_steps < 1) throw std::invalid_argument("period_steps must be positive");
}

double region_factor_spread(double segregation_strength, bool south) {
  return south ? 0.1 + 0.4 * segregation_strength : 0.1;
}

double noise_sd(double noise_scale, double segregation_strength, bool south) {
  return noise_scale * (1.0 + segregation_strength * (south ? 1.0 : 0.0));
}

double deterministic_demand(double base_demand, double factor, int t,
                            int period_steps) {
  const double phase = 2.0 * std::numbers::pi * t / period_steps;
  return base_demand * factor * (1.0 + 0.5 * std::sin(phase));
}

SyntheticCity generate_synthetic_city(const SyntheticCityConfig& config) {
  config.validate();
  const int n = config.n_regions;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const int rows = (n + cols - 1) / cols;

  std::mt19937_64 rng(stream_seed(config.seed, streams::kSyntheticData));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::string> ids;
  std::vector<Point> coords;
  Vector south(n), factors(n), minority(n), majority(n);
  for (int k = 0; k < n; ++k) {
    const int row = k / cols;
    const int col = k % cols;
    ids.push_back("R" + std::to_string(k));
    coords.push_back({static_cast<double>(col), static_cast<double>(row)});
    const bool is_south = 2 * row >= rows;
    south[k] = is_south ? 1.0 : 0.0;
    const double s = config.segregation_strength;
    minority[k] = is_south ? 0.5 + 0.5 * s : 0.5 - 0.5 * s;
    majority[k] = 1.0 - minority[k];
    factors[k] = 1.0 + region_factor_spread(s, is_south) * unit(rng);
  }

  Matrix demand(n, config.n_steps);
  for (int k = 0; k < n; ++k) {
    const double sd = noise_sd(config.noise_scale, config.segregation_strength,
                               south[k] > 0.5);
    for (int t = 0; t < config.n_steps; ++t) {
      const double clean = deterministic_demand(config.base_demand, factors[k], t,
                                                config.period_steps);
      const double noisy = clean + sd * gauss(rng);
      demand(k, t) = std::max(0.0, noisy);
    }
  }

  Matrix adjacency =
      build_distance_adjacency(coords, config.kernel_sigma, config.kernel_threshold);
  RegionGraph graph(ids, std::move(adjacency), coords);
  DemographicTable demo(ids, std::move(minority), std::move(majority));
  return SyntheticCity{std::move(graph), DemandTensor(std::move(demand), config.bin_minutes),
                       std::move(demo), std::move(factors), std::move(south)};
}

std::vector<Window> make_windows(const DemandTensor& demand,
                                 const ForecastWindow& window) {
  window.validate();
  const Eigen::Index t_total = demand.steps();
  const Eigen::Index need = window.lookback + window.horizon;
  if (t_total < need) {
    throw std::invalid_argument("series of length " + std::to_string(t_total) +
                                " is shorter than lookback + horizon = " +
                                std::to_string(need));
  }
  std::vector<Window> out;
  out.reserve(static_cast<std::size_t>(t_total - need + 1));
  for (Eigen::Index s = 0; s + need <= t_total; ++s) {
    out.push_back({s, demand.values().middleCols(s, window.lookback),
                   demand.values().middleCols(s + window.lookback, window.horizon)});
  }
  return out;
}

Split chronological_split(std::size_t n_windows, double train_frac,
                          double val_frac) {
  if (!(train_frac > 0.0) || !(val_frac >= 0.0) || train_frac + val_frac >= 1.0) {
    throw std::invalid_argument("invalid split fractions");
  }
  Split s;
  s.total = n_windows;
  s.train_end = static_cast<std::size_t>(std::floor(train_frac * n_windows));
  s.val_end = s.train_end + static_cast<std::size_t>(std::floor(val_frac * n_windows));
  if (s.train_end == 0 || s.val_end >= s.total) {
    throw std::invalid_argument("too few windows (" + std::to_string(n_windows) +
                                ") for a train/validation/test split");
  }
  return s;
}

}  // namespace equigrid::data
