#include "smrt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace smrt {

void Dataset::validate() const {
  const int nn = n(), pp = p(), mm = M();
  if (pp < 1) throw ValidationError("dataset needs at least one predictor");
  if (mm < 1) throw ValidationError("dataset needs at least one outcome");
  if (!X.allFinite()) throw ValidationError("predictor matrix contains non-finite values");
  if (static_cast<int>(outcomeNames.size()) != mm ||
      static_cast<int>(predictorNames.size()) != pp)
    throw ValidationError("name lists do not match dataset dimensions");
  int maxLevels = 0;
  for (int m = 0; m < mm; ++m) {
    const OutcomeColumn& col = outcomes[m];
    if (col.values.size() != nn)
      throw ValidationError("outcome '" + outcomeNames[m] + "' has wrong length");
    if (col.levels < 2)
      throw ValidationError("outcome '" + outcomeNames[m] + "' needs at least 2 levels");
    if (col.kind == OutcomeKind::Binary && col.levels != 2)
      throw ValidationError("binary outcome '" + outcomeNames[m] + "' must have 2 levels");
    std::vector<int> counts(col.levels, 0);
    for (int i = 0; i < nn; ++i) {
      int v = col.values[i];
      if (v < 0 || v >= col.levels)
        throw ValidationError("outcome '" + outcomeNames[m] + "' has level outside range");
      ++counts[v];
    }
    for (int l = 0; l < col.levels; ++l)
      if (counts[l] == 0)
        throw ValidationError("degenerate outcome '" + outcomeNames[m] +
                              "': level " + std::to_string(l) + " unobserved");
    maxLevels = std::max(maxLevels, col.levels);
  }
  if (nn <= pp + maxLevels)
    throw ValidationError("n = " + std::to_string(nn) +
                          " too small: need n > p + max levels = " +
                          std::to_string(pp + maxLevels));
}

VectorXi rank_discretize(const VectorXd& y, int levels) {
  const int n = static_cast<int>(y.size());
  if (levels < 2) throw ValidationError("discretization needs at least 2 levels");
  if (n < levels) throw ValidationError("fewer observations than levels");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return y[a] < y[b]; });
  VectorXi out(n);
  for (int r = 0; r < n; ++r)
    out[order[r]] = static_cast<int>((static_cast<long long>(r) * levels) / n);
  return out;
}

namespace {

// Boundary categories absorb clamped values; the interior is rank-binned
// into whatever levels remain.
VectorXi discretize_with_clamps(const VectorXd& y, const OutcomeSpec& spec,
                                int levels) {
  const int n = static_cast<int>(y.size());
  const bool hasLow = spec.clampLow.has_value();
  const bool hasHigh = spec.clampHigh.has_value();
  if (!hasLow && !hasHigh) return rank_discretize(y, levels);

  VectorXi out = VectorXi::Constant(n, -1);
  std::vector<int> interior;
  interior.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (hasLow && y[i] <= *spec.clampLow)
      out[i] = 0;
    else if (hasHigh && y[i] >= *spec.clampHigh)
      out[i] = levels - 1;
    else
      interior.push_back(i);
  }
  const int lo = hasLow ? 1 : 0;
  const int innerLevels = levels - lo - (hasHigh ? 1 : 0);
  if (innerLevels < 1)
    throw ValidationError("outcome '" + spec.name + "': clamp bounds leave no interior levels");
  if (static_cast<int>(interior.size()) < innerLevels)
    throw ValidationError("outcome '" + spec.name + "': too few interior values for requested levels");
  VectorXd inner(interior.size());
  for (std::size_t i = 0; i < interior.size(); ++i) inner[i] = y[interior[i]];
  VectorXi innerIdx = rank_discretize(inner, innerLevels);
  for (std::size_t i = 0; i < interior.size(); ++i)
    out[interior[i]] = lo + innerIdx[i];
  return out;
}

char detect_delimiter(const std::string& header) {
  return header.find('\t') != std::string::npos ? '\t' : ',';
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("could not parse value '" + s + "' in " + context);
  }
}

}  // namespace

Dataset load_dataset(const std::string& dataPath, const std::string& metaPath) {
  std::ifstream meta(metaPath);
  if (!meta) throw ValidationError("cannot open metadata file: " + metaPath);
  nlohmann::json mj;
  try {
    meta >> mj;
  } catch (const std::exception& e) {
    throw ValidationError("invalid metadata JSON: " + std::string(e.what()));
  }
  if (!mj.contains("outcomes") || !mj["outcomes"].is_array() || mj["outcomes"].empty())
    throw ValidationError("metadata must declare a non-empty 'outcomes' array");

  std::vector<OutcomeSpec> specs;
  for (const auto& o : mj["outcomes"]) {
    OutcomeSpec s;
    if (!o.contains("name")) throw ValidationError("outcome entry missing 'name'");
    s.name = o["name"].get<std::string>();
    if (o.contains("kind")) s.kind = o["kind"].get<std::string>();
    if (s.kind != "binary" && s.kind != "ordinal" && s.kind != "continuous")
      throw ValidationError("outcome '" + s.name + "': unknown kind '" + s.kind + "'");
    if (o.contains("levels")) s.levels = o["levels"].get<int>();
    if (o.contains("clampLow")) s.clampLow = o["clampLow"].get<double>();
    if (o.contains("clampHigh")) s.clampHigh = o["clampHigh"].get<double>();
    specs.push_back(std::move(s));
  }

  std::ifstream data(dataPath);
  if (!data) throw ValidationError("cannot open data file: " + dataPath);
  std::string header;
  if (!std::getline(data, header)) throw ValidationError("data file is empty: " + dataPath);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const char delim = detect_delimiter(header);
  std::vector<std::string> names = split_line(header, delim);
  const int ncol = static_cast<int>(names.size());

  std::vector<std::vector<double>> cols(ncol);
  std::string line;
  int lineNo = 1;
  while (std::getline(data, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = split_line(line, delim);
    if (static_cast<int>(fields.size()) != ncol)
      throw ValidationError("line " + std::to_string(lineNo) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(ncol));
    for (int c = 0; c < ncol; ++c)
      cols[c].push_back(parse_double(fields[c], "column '" + names[c] + "'"));
  }
  const int n = static_cast<int>(cols.empty() ? 0 : cols[0].size());
  if (n == 0) throw ValidationError("data file has no rows: " + dataPath);

  std::vector<int> outcomeIdx;
  for (const auto& s : specs) {
    auto it = std::find(names.begin(), names.end(), s.name);
    if (it == names.end())
      throw ValidationError("outcome column '" + s.name + "' missing from data file");
    outcomeIdx.push_back(static_cast<int>(it - names.begin()));
  }

  Dataset ds;
  std::vector<int> predIdx;
  for (int c = 0; c < ncol; ++c)
    if (std::find(outcomeIdx.begin(), outcomeIdx.end(), c) == outcomeIdx.end())
      predIdx.push_back(c);
  if (predIdx.empty()) throw ValidationError("no predictor columns remain");

  ds.X.resize(n, static_cast<int>(predIdx.size()));
  for (std::size_t k = 0; k < predIdx.size(); ++k) {
    ds.predictorNames.push_back(names[predIdx[k]]);
    for (int i = 0; i < n; ++i) ds.X(i, static_cast<int>(k)) = cols[predIdx[k]][i];
  }

  for (std::size_t s = 0; s < specs.size(); ++s) {
    const OutcomeSpec& spec = specs[s];
    const std::vector<double>& raw = cols[outcomeIdx[s]];
    VectorXd y = Eigen::Map<const VectorXd>(raw.data(), n);
    if (!y.allFinite())
      throw ValidationError("outcome '" + spec.name + "' contains non-finite values");
    OutcomeColumn col;
    if (spec.kind == "continuous") {
      col.kind = OutcomeKind::Ordinal;
      col.levels = spec.levels > 0 ? spec.levels : 10;
      col.values = discretize_with_clamps(y, spec, col.levels);
    } else if (spec.kind == "binary") {
      col.kind = OutcomeKind::Binary;
      col.levels = 2;
      double lo = y.minCoeff(), hi = y.maxCoeff();
      if (lo == hi) throw ValidationError("degenerate outcome '" + spec.name + "': constant column");
      col.values.resize(n);
      for (int i = 0; i < n; ++i) {
        if (y[i] != lo && y[i] != hi)
          throw ValidationError("binary outcome '" + spec.name + "' has more than two values");
        col.values[i] = (y[i] == hi) ? 1 : 0;
      }
    } else {  // ordinal: values must already be level indices
      col.kind = OutcomeKind::Ordinal;
      VectorXi v(n);
      int maxSeen = 0;
      for (int i = 0; i < n; ++i) {
        double r = std::round(y[i]);
        if (std::abs(y[i] - r) > 1e-9 || r < 0)
          throw ValidationError("ordinal outcome '" + spec.name +
                                "' must hold nonnegative integer level indices");
        v[i] = static_cast<int>(r);
        maxSeen = std::max(maxSeen, v[i]);
      }
      col.levels = spec.levels > 0 ? spec.levels : maxSeen + 1;
      col.values = std::move(v);
    }
    ds.outcomes.push_back(std::move(col));
    ds.outcomeNames.push_back(spec.name);
  }

  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dataPath,
                  const std::string& metaPath) {
  ds.validate();
  std::ofstream data(dataPath);
  if (!data) throw ValidationError("cannot write data file: " + dataPath);
  for (int c = 0; c < ds.p(); ++c) {
    if (c) data << '\t';
    data << ds.predictorNames[c];
  }
  for (int m = 0; m < ds.M(); ++m) data << '\t' << ds.outcomeNames[m];
  data << '\n';
  data.precision(17);
  for (int i = 0; i < ds.n(); ++i) {
    for (int c = 0; c < ds.p(); ++c) {
      if (c) data << '\t';
      data << ds.X(i, c);
    }
    for (int m = 0; m < ds.M(); ++m) data << '\t' << ds.outcomes[m].values[i];
    data << '\n';
  }

  nlohmann::json mj;
  mj["outcomes"] = nlohmann::json::array();
  for (int m = 0; m < ds.M(); ++m) {
    nlohmann::json o;
    o["name"] = ds.outcomeNames[m];
    o["kind"] = ds.outcomes[m].kind == OutcomeKind::Binary ? "binary" : "ordinal";
    o["levels"] = ds.outcomes[m].levels;
    mj["outcomes"].push_back(o);
  }
  std::ofstream meta(metaPath);
  if (!meta) throw ValidationError("cannot write metadata file: " + metaPath);
  meta << mj.dump(2) << '\n';
}

}  // namespace smrt
