#include "stockode/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stockode/errors.hpp"

namespace stockode {

StockUniverse StockUniverse::from_tickers(std::vector<std::string> tickers) {
  StockUniverse u;
  u.tickers = std::move(tickers);
  for (std::size_t i = 0; i < u.tickers.size(); ++i) {
    if (!u.index.emplace(u.tickers[i], i).second) {
      throw DataError("duplicate ticker '" + u.tickers[i] + "' in universe");
    }
  }
  return u;
}

StockUniverse StockUniverse::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open universe file " + path.string());
  std::vector<std::string> tickers;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    tickers.push_back(line);
  }
  if (tickers.empty())
    throw DataError("universe file " + path.string() + " lists no tickers");
  return from_tickers(std::move(tickers));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool looks_like_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

double parse_double(const std::string& s, std::size_t line_no,
                    const char* field) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + field +
                     " value '" + s + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

BarPanel load_bars(const std::filesystem::path& path,
                   const StockUniverse& universe) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open bars file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError("bars file is empty");

  // keyed by (ticker index, date)
  std::vector<std::map<std::string, DailyBar>> rows(universe.size());
  std::set<std::string> calendar_set;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 7) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 7 " +
                       "columns, got " + std::to_string(cols.size()));
    }
    if (!looks_like_date(cols[0])) {
      throw ParseError("line " + std::to_string(line_no) + ": bad date '" +
                       cols[0] + "'");
    }
    auto it = universe.index.find(cols[1]);
    if (it == universe.index.end()) {
      throw DataError("line " + std::to_string(line_no) +
                      ": unknown ticker '" + cols[1] + "'");
    }
    DailyBar bar;
    bar.date = cols[0];
    bar.open = parse_double(cols[2], line_no, "open");
    bar.high = parse_double(cols[3], line_no, "high");
    bar.low = parse_double(cols[4], line_no, "low");
    bar.close = parse_double(cols[5], line_no, "close");
    bar.volume = parse_double(cols[6], line_no, "volume");
    if (bar.close <= 0.0) {
      throw DataError("line " + std::to_string(line_no) +
                      ": non-positive close for " + cols[1]);
    }
    if (bar.low > std::min(bar.open, bar.close) ||
        bar.high < std::max(bar.open, bar.close)) {
      throw DataError("line " + std::to_string(line_no) +
                      ": low/high violate open/close bounds for " + cols[1]);
    }
    if (bar.volume < 0.0) {
      throw DataError("line " + std::to_string(line_no) +
                      ": negative volume for " + cols[1]);
    }
    if (!rows[it->second].emplace(bar.date, bar).second) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate bar " +
                      "for " + cols[1] + " on " + bar.date);
    }
    calendar_set.insert(bar.date);
  }
  if (calendar_set.empty()) throw DataError("bars file has no data rows");

  BarPanel panel;
  panel.universe = universe;
  panel.calendar.assign(calendar_set.begin(), calendar_set.end());
  panel.series.resize(universe.size());

  for (std::size_t s = 0; s < universe.size(); ++s) {
    auto& out = panel.series[s];
    out.reserve(panel.calendar.size());
    for (const std::string& date : panel.calendar) {
      auto it = rows[s].find(date);
      if (it != rows[s].end()) {
        out.push_back(it->second);
      } else if (!out.empty()) {
        DailyBar fill;  // forward-fill: flat at previous close, no volume
        fill.date = date;
        fill.open = fill.high = fill.low = fill.close = out.back().close;
        fill.volume = 0.0;
        out.push_back(fill);
      } else {
        throw DataError("ticker '" + universe.tickers[s] +
                        "' has no bar at calendar start " + date);
      }
    }
  }
  return panel;
}

void write_bars(const std::filesystem::path& path, const BarPanel& panel) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write bars file " + path.string());
  out << "date,ticker,open,high,low,close,volume\n";
  for (std::size_t d = 0; d < panel.calendar.size(); ++d) {
    for (std::size_t s = 0; s < panel.universe.size(); ++s) {
      const DailyBar& b = panel.series[s][d];
      out << b.date << ',' << panel.universe.tickers[s] << ','
          << format_double(b.open) << ',' << format_double(b.high) << ','
          << format_double(b.low) << ',' << format_double(b.close) << ','
          << format_double(b.volume) << '\n';
    }
  }
}

ReturnSeries compute_returns(const BarPanel& panel) {
  const std::size_t days = panel.calendar.size();
  const std::size_t n = panel.universe.size();
  if (days < 2) {
    throw ContractError("compute_returns: need at least 2 days, have " +
                        std::to_string(days));
  }
  ReturnSeries rs;
  rs.dates.assign(panel.calendar.begin() + 1, panel.calendar.end());
  rs.r = Tensor({days - 1, n});
  for (std::size_t d = 1; d < days; ++d) {
    for (std::size_t s = 0; s < n; ++s) {
      const double prev = panel.series[s][d - 1].close;
      const double cur = panel.series[s][d].close;
      rs.r.at(d - 1, s) = (cur - prev) / prev;
    }
  }
  return rs;
}

FeaturePanel build_features(const BarPanel& panel, const ReturnSeries& rs) {
  const std::size_t n = panel.universe.size();
  const std::size_t n_returns = rs.r.dim(0);
  if (n_returns < kMaWarmup) {
    throw DataError("need at least " + std::to_string(kMaWarmup + 1) +
                    " days of bars for moving-average warm-up, have " +
                    std::to_string(panel.calendar.size()));
  }
  const std::size_t days = n_returns - kMaWarmup + 1;

  FeaturePanel fp;
  fp.feature_names = {"open", "high",  "low",   "close", "volume",
                      "ret1", "ret5",  "ret10", "ret20", "ret30"};
  fp.dates.resize(days);
  fp.values = Tensor({days, n, kFeatureCount});
  fp.returns = Tensor({days, n});
  fp.next_returns = Tensor({days, n});
  fp.days_with_target = days - 1;

  const std::size_t spans[4] = {5, 10, 20, 30};
  for (std::size_t f = 0; f < days; ++f) {
    const std::size_t j = f + kMaWarmup - 1;  // return index of this day
    const std::size_t c = j + 1;              // calendar index
    fp.dates[f] = panel.calendar[c];
    for (std::size_t s = 0; s < n; ++s) {
      const DailyBar& b = panel.series[s][c];
      fp.values.at(f, s, 0) = b.open;
      fp.values.at(f, s, 1) = b.high;
      fp.values.at(f, s, 2) = b.low;
      fp.values.at(f, s, 3) = b.close;
      fp.values.at(f, s, 4) = b.volume;
      fp.values.at(f, s, 5) = rs.r.at(j, s);
      for (std::size_t k = 0; k < 4; ++k) {
        double acc = 0.0;
        for (std::size_t t = j + 1 - spans[k]; t <= j; ++t)
          acc += rs.r.at(t, s);
        fp.values.at(f, s, 6 + k) = acc / double(spans[k]);
      }
      fp.returns.at(f, s) = rs.r.at(j, s);
      fp.next_returns.at(f, s) = (j + 1 < n_returns) ? rs.r.at(j + 1, s) : 0.0;
    }
  }
  return fp;
}

std::vector<WindowSample> build_windows(const FeaturePanel& features,
                                        std::size_t w) {
  const std::size_t days = features.dates.size();
  const std::size_t n = features.values.dim(1);
  if (w < 1) throw ContractError("build_windows: window length must be >= 1");
  if (days < w + 1) {
    throw DataError("build_windows: need at least " + std::to_string(w + 1) +
                    " usable days for window length " + std::to_string(w) +
                    ", have " + std::to_string(days));
  }
  std::vector<WindowSample> out;
  out.reserve(days - w);
  for (std::size_t i = 0; i + w < days; ++i) {
    WindowSample ws;
    ws.features = Tensor({w, n, kFeatureCount});
    ws.window_returns = Tensor({w, n});
    ws.target = Tensor({n});
    for (std::size_t d = 0; d < w; ++d) {
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t k = 0; k < kFeatureCount; ++k)
          ws.features.at(d, s, k) = features.values.at(i + d, s, k);
        ws.window_returns.at(d, s) = features.returns.at(i + d, s);
      }
    }
    for (std::size_t s = 0; s < n; ++s)
      ws.target[s] = features.returns.at(i + w, s);
    ws.start_day = features.dates[i];
    ws.end_day = features.dates[i + w - 1];
    ws.target_day = features.dates[i + w];
    out.push_back(std::move(ws));
  }
  return out;
}

DatasetSplits split(std::vector<WindowSample> windows,
                    const std::array<std::size_t, 3>& counts) {
  const std::size_t total = counts[0] + counts[1] + counts[2];
  if (total != windows.size()) {
    throw ContractError("split: counts sum to " + std::to_string(total) +
                        " but there are " + std::to_string(windows.size()) +
                        " windows");
  }
  for (std::size_t i = 1; i < windows.size(); ++i) {
    if (!(windows[i - 1].target_day < windows[i].target_day)) {
      throw ContractError("split: windows are not in chronological order at "
                          "index " + std::to_string(i));
    }
  }
  DatasetSplits s;
  auto take = [&](std::size_t begin, std::size_t count) {
    return std::vector<WindowSample>(
        std::make_move_iterator(windows.begin() + begin),
        std::make_move_iterator(windows.begin() + begin + count));
  };
  s.train = take(0, counts[0]);
  s.val = take(counts[0], counts[1]);
  s.test = take(counts[0] + counts[1], counts[2]);
  return s;
}

DatasetSplits build_dataset(const BarPanel& panel, std::size_t w,
                            std::array<std::size_t, 3> counts) {
  const ReturnSeries rs = compute_returns(panel);
  FeaturePanel fp = build_features(panel, rs);
  const std::size_t days = fp.dates.size();
  if (days < w + 1) {
    throw DataError("build_dataset: need at least " + std::to_string(w + 1) +
                    " usable days, have " + std::to_string(days));
  }
  const std::size_t total = days - w;
  if (counts[0] + counts[1] + counts[2] == 0) {
    counts[0] = total * 6 / 10;
    counts[1] = total * 2 / 10;
    counts[2] = total - counts[0] - counts[1];
  }
  if (counts[0] + counts[1] + counts[2] != total) {
    throw ConfigError("split counts " + std::to_string(counts[0]) + ":" +
                      std::to_string(counts[1]) + ":" +
                      std::to_string(counts[2]) + " do not sum to the " +
                      std::to_string(total) + " available windows");
  }
  if (counts[0] == 0) throw ConfigError("training split is empty");

  // z-normalize the raw indicator channels with statistics from the days the
  // training windows can see, then materialize windows
  const std::size_t n = panel.universe.size();
  const std::size_t train_days = counts[0] + w - 1;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < 5; ++k) {
      double mean = 0.0;
      for (std::size_t d = 0; d < train_days; ++d)
        mean += fp.values.at(d, s, k);
      mean /= double(train_days);
      double var = 0.0;
      for (std::size_t d = 0; d < train_days; ++d) {
        const double c = fp.values.at(d, s, k) - mean;
        var += c * c;
      }
      var /= double(train_days);
      const double sd = var > 1e-24 ? std::sqrt(var) : 1.0;
      for (std::size_t d = 0; d < days; ++d)
        fp.values.at(d, s, k) = (fp.values.at(d, s, k) - mean) / sd;
    }
  }
  return split(build_windows(fp, w), counts);
}

RelationSet load_relations(const std::filesystem::path& path,
                           const StockUniverse& universe) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open relations file " + path.string());
  RelationSet rel;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    std::istringstream ss(line);
    std::string label;
    ss >> label;
    if (label.find(':') == std::string::npos) {
      throw ParseError("relations line " + std::to_string(line_no) +
                       ": expected '<domain>:<name>' label, got '" + label +
                       "'");
    }
    std::set<std::size_t> members;
    std::string ticker;
    bool any_token = false;
    while (ss >> ticker) {
      any_token = true;
      auto it = universe.index.find(ticker);
      if (it == universe.index.end()) {
        ++rel.unknown_members;
      } else {
        members.insert(it->second);
      }
    }
    if (!any_token) {
      throw ParseError("relations line " + std::to_string(line_no) +
                       ": hyperedge '" + label + "' lists no tickers");
    }
    if (members.size() < 2) {
      ++rel.dropped_edges;
      continue;
    }
    rel.edges.push_back(
        {label, std::vector<std::size_t>(members.begin(), members.end())});
  }
  return rel;
}

void write_relations(const std::filesystem::path& path,
                     const RelationSet& relations,
                     const StockUniverse& universe) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write relations file " + path.string());
  for (const auto& e : relations.edges) {
    out << e.label;
    for (std::size_t m : e.members) out << ' ' << universe.tickers[m];
    out << '\n';
  }
}

namespace {

// Howard Hinnant's civil-date algorithms; enough to emit a weekday calendar.
long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

void civil_from_days(long z, int& y, int& m, int& d) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long yy = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

std::string format_date(long day_number) {
  int y, m, d;
  civil_from_days(day_number, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

bool is_weekday(long day_number) {
  const int wd = static_cast<int>(((day_number % 7) + 11) % 7);  // 0 = Mon
  return wd < 5;
}

}  // namespace

SynthMarket synth_market(std::size_t n_stocks, std::size_t n_days,
                         std::size_t n_hyperedges, double signal_strength,
                         std::uint64_t seed) {
  if (n_stocks < 2) {
    throw ContractError("synth_market: need at least 2 stocks, got " +
                        std::to_string(n_stocks));
  }
  if (n_days < 2) {
    throw ContractError("synth_market: need at least 2 days");
  }
  if (n_hyperedges < 1 || n_hyperedges > n_stocks / 2) {
    throw ContractError("synth_market: hyperedge count must be in [1, " +
                        std::to_string(n_stocks / 2) + "]");
  }

  // Daily log-return scales chosen so that at signal_strength = 1 the
  // planted ordering dominates the noise over a few hundred days.
  constexpr double kDriftScale = 0.01;
  constexpr double kIdioVol = 0.0015;
  constexpr double kGroupVol = 0.001;

  Rng rng(seed);
  Rng score_rng = rng.fork("scores");
  Rng price_rng = rng.fork("prices");

  SynthMarket market;
  std::vector<std::string> tickers(n_stocks);
  for (std::size_t i = 0; i < n_stocks; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "SYN%03u", static_cast<unsigned>(i));
    tickers[i] = buf;
  }
  market.bars.universe = StockUniverse::from_tickers(std::move(tickers));

  // evenly spaced scores shuffled over the tickers
  market.scores.resize(n_stocks);
  for (std::size_t i = 0; i < n_stocks; ++i) {
    market.scores[i] =
        n_stocks == 1 ? 0.0 : -1.0 + 2.0 * double(i) / double(n_stocks - 1);
  }
  for (std::size_t i = n_stocks - 1; i > 0; --i) {
    std::swap(market.scores[i],
              market.scores[score_rng.uniform_index(i + 1)]);
  }

  // hyperedges: overlapping runs over the score-sorted order, so that edges
  // group similar stocks and adjacent edges share a member
  std::vector<std::size_t> order(n_stocks);
  for (std::size_t i = 0; i < n_stocks; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return market.scores[a] > market.scores[b];
  });
  std::vector<std::size_t> factor_group(n_stocks, 0);
  {
    const std::size_t span =
        std::max<std::size_t>(2, (n_stocks + n_hyperedges - 1) / n_hyperedges + 1);
    const double stride = n_hyperedges > 1
        ? double(n_stocks - span) / double(n_hyperedges - 1)
        : 0.0;
    for (std::size_t g = 0; g < n_hyperedges; ++g) {
      const std::size_t lo = static_cast<std::size_t>(std::lround(stride * g));
      RelationSet::Hyperedge edge;
      edge.label = "synth:group" + std::to_string(g);
      for (std::size_t k = lo; k < std::min(lo + span, n_stocks); ++k) {
        edge.members.push_back(order[k]);
        factor_group[order[k]] = g;
      }
      std::sort(edge.members.begin(), edge.members.end());
      market.relations.edges.push_back(std::move(edge));
    }
  }

  // geometric random walk with planted drift and group factor noise
  std::vector<double> close(n_stocks);
  for (std::size_t s = 0; s < n_stocks; ++s)
    close[s] = 20.0 + 180.0 * price_rng.uniform();

  market.bars.series.resize(n_stocks);
  long day_number = days_from_civil(2015, 1, 5);
  for (std::size_t d = 0; d < n_days; ++d) {
    while (!is_weekday(day_number)) ++day_number;
    const std::string date = format_date(day_number);
    market.bars.calendar.push_back(date);
    ++day_number;

    std::vector<double> factor(n_hyperedges);
    for (double& f : factor) f = price_rng.normal();

    for (std::size_t s = 0; s < n_stocks; ++s) {
      double prev = close[s];
      if (d > 0) {
        const double drift =
            signal_strength * kDriftScale * market.scores[s];
        const double log_ret = drift + kGroupVol * factor[factor_group[s]] +
                               kIdioVol * price_rng.normal();
        close[s] = prev * std::exp(log_ret);
      } else {
        prev = close[s];
      }
      DailyBar bar;
      bar.date = date;
      bar.close = close[s];
      bar.open = d == 0 ? close[s]
                        : prev * std::exp(0.3 * kIdioVol * price_rng.normal());
      const double hi_pad = std::abs(price_rng.normal()) * 0.3 * kIdioVol;
      const double lo_pad = std::abs(price_rng.normal()) * 0.3 * kIdioVol;
      bar.high = std::max(bar.open, bar.close) * std::exp(hi_pad);
      bar.low = std::min(bar.open, bar.close) * std::exp(-lo_pad);
      bar.volume = std::floor(1e5 * std::exp(0.5 * price_rng.normal())) + 1.0;
      market.bars.series[s].push_back(bar);
    }
  }
  return market;
}

}  // namespace stockode
