// syncasr/metrics.cc

// Copyright 2026   syncasr authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "syncasr/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "syncasr/tensor.h"

namespace syncasr {

double ErrorBreakdown::rate() const {
  if (ref_length > 0)
    return static_cast<double>(errors()) / static_cast<double>(ref_length);
  return errors() == 0 ? 0.0 : std::numeric_limits<double>::infinity();
}

ErrorBreakdown &ErrorBreakdown::operator+=(const ErrorBreakdown &o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  ref_length += o.ref_length;
  return *this;
}

Alignment Align(const std::vector<int> &ref, const std::vector<int> &hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]),
                          d[i][j - 1] + 1, d[i - 1][j] + 1});

  Alignment a;
  a.counts.ref_length = static_cast<std::int64_t>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])) {
      const bool same = ref[i - 1] == hyp[j - 1];
      a.script.push_back({same ? EditOp::kMatch : EditOp::kSubstitute,
                          hyp[j - 1]});
      a.counts.substitutions += !same;
      --i, --j;
    } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
      a.script.push_back({EditOp::kInsert, hyp[j - 1]});
      ++a.counts.insertions;
      --j;
    } else {
      a.script.push_back({EditOp::kDelete, ref[i - 1]});
      ++a.counts.deletions;
      --i;
    }
  }
  std::reverse(a.script.begin(), a.script.end());
  return a;
}

ErrorBreakdown EditDistanceBreakdown(const std::vector<int> &ref,
                                     const std::vector<int> &hyp) {
  return Align(ref, hyp).counts;
}

std::vector<int> ReplayEditScript(const std::vector<int> &ref,
                                  const std::vector<EditStep> &script) {
  std::vector<int> out;
  std::size_t i = 0;
  for (const EditStep &s : script) {
    if (s.op != EditOp::kInsert && i >= ref.size())
      throw ContractError("edit script runs past the reference");
    switch (s.op) {
      case EditOp::kMatch:
        if (ref[i] != s.symbol)
          throw ContractError("edit script match disagrees with reference at " +
                              std::to_string(i));
        out.push_back(ref[i++]);
        break;
      case EditOp::kSubstitute:
        out.push_back(s.symbol);
        ++i;
        break;
      case EditOp::kInsert:
        out.push_back(s.symbol);
        break;
      case EditOp::kDelete:
        ++i;
        break;
    }
  }
  if (i != ref.size())
    throw ContractError("edit script leaves " + std::to_string(ref.size() - i) +
                        " reference symbols unconsumed");
  return out;
}

CorpusScore ScoreCorpus(const std::vector<ReferenceEntry> &refs,
                        const std::map<std::string, std::vector<int>> &hyps) {
  CorpusScore score;
  std::set<std::string> seen;
  for (const ReferenceEntry &r : refs) {
    if (!seen.insert(r.id).second)
      throw ContractError("utterance " + r.id + " listed twice");
    const auto it = hyps.find(r.id);
    if (it == hyps.end())
      throw ContractError("no hypothesis for utterance " + r.id);
    const ErrorBreakdown e = EditDistanceBreakdown(r.labels, it->second);
    score.total += e;
    auto g = std::find_if(score.groups.begin(), score.groups.end(),
                          [&](const auto &p) { return p.first == r.group; });
    if (g == score.groups.end())
      score.groups.emplace_back(r.group, e);
    else
      g->second += e;
  }
  for (const auto &[id, labels] : hyps)
    if (!seen.count(id))
      throw ContractError("hypothesis for unknown utterance " + id);
  return score;
}

void ReportTable::Validate() const {
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].keys.size() != key_columns.size() ||
        rows[r].values.size() != value_columns.size())
      throw ContractError("report " + name + ": row " + std::to_string(r) +
                          " does not match the column layout");
}

namespace {

std::string Fixed(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

double Rounded(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

}  // namespace

std::string ReportCsv(const ReportTable &table) {
  table.Validate();
  std::ostringstream os;
  for (const std::string &k : table.key_columns) os << k << ',';
  os << "sub,ins,del,ref_len,errors,rate";
  for (const std::string &v : table.value_columns) os << ',' << v;
  os << '\n';
  for (const ReportTable::Row &row : table.rows) {
    for (const std::string &k : row.keys) os << k << ',';
    const ErrorBreakdown &c = row.counts;
    os << c.substitutions << ',' << c.insertions << ',' << c.deletions << ','
       << c.ref_length << ',' << c.errors() << ','
       << Fixed(100.0 * c.rate(), 2);
    for (double v : row.values) os << ',' << Fixed(v, 4);
    os << '\n';
  }
  return os.str();
}

std::string ReportJson(const ReportTable &table) {
  table.Validate();
  nlohmann::ordered_json j;
  j["table"] = table.name;
  j["key_columns"] = table.key_columns;
  j["value_columns"] = table.value_columns;
  j["rows"] = nlohmann::ordered_json::array();
  for (const ReportTable::Row &row : table.rows) {
    nlohmann::ordered_json r;
    for (std::size_t k = 0; k < row.keys.size(); ++k)
      r[table.key_columns[k]] = row.keys[k];
    r["sub"] = row.counts.substitutions;
    r["ins"] = row.counts.insertions;
    r["del"] = row.counts.deletions;
    r["ref_len"] = row.counts.ref_length;
    r["errors"] = row.counts.errors();
    const double rate = 100.0 * row.counts.rate();
    if (std::isfinite(rate))
      r["rate"] = Rounded(rate, 2);
    else
      r["rate"] = nullptr;
    for (std::size_t v = 0; v < row.values.size(); ++v)
      r[table.value_columns[v]] = row.values[v];
    j["rows"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

ReportTable ParseReportJson(const std::string &json) {
  const auto j = nlohmann::json::parse(json);
  ReportTable t;
  t.name = j.at("table").get<std::string>();
  t.key_columns = j.at("key_columns").get<std::vector<std::string>>();
  t.value_columns = j.at("value_columns").get<std::vector<std::string>>();
  for (const auto &r : j.at("rows")) {
    ReportTable::Row row;
    for (const std::string &k : t.key_columns)
      row.keys.push_back(r.at(k).get<std::string>());
    row.counts.substitutions = r.at("sub").get<std::int64_t>();
    row.counts.insertions = r.at("ins").get<std::int64_t>();
    row.counts.deletions = r.at("del").get<std::int64_t>();
    row.counts.ref_length = r.at("ref_len").get<std::int64_t>();
    for (const std::string &v : t.value_columns)
      row.values.push_back(r.at(v).get<double>());
    t.rows.push_back(std::move(row));
  }
  return t;
}

void EmitReport(const std::string &dir, const ReportTable &table) {
  std::filesystem::create_directories(dir);
  for (const auto &[ext, text] :
       {std::pair{".csv", ReportCsv(table)}, {".json", ReportJson(table)}}) {
    const std::string path =
        (std::filesystem::path(dir) / (table.name + ext)).string();
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << text;
    if (!os) throw std::runtime_error("write failed for " + path);
  }
}

}  // namespace syncasr
