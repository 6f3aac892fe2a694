// syncasr/metrics.h

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

// Label error rates with substitution/insertion/deletion breakdown, pooled
// corpus scoring and CSV/JSON report tables.

#ifndef SYNCASR_METRICS_H_
#define SYNCASR_METRICS_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace syncasr {

struct ErrorBreakdown {
  std::int64_t substitutions = 0;
  std::int64_t insertions = 0;
  std::int64_t deletions = 0;
  std::int64_t ref_length = 0;

  std::int64_t errors() const { return substitutions + insertions + deletions; }
  /// errors / ref_length; 0 for an empty reference without errors and +inf
  /// for an empty reference with insertions.  May exceed 1.
  double rate() const;
  ErrorBreakdown &operator+=(const ErrorBreakdown &o);
  bool operator==(const ErrorBreakdown &o) const = default;
};

enum class EditOp { kMatch, kSubstitute, kInsert, kDelete };

struct EditStep {
  EditOp op;
  int symbol;  ///< hypothesis symbol, or the deleted reference symbol
};

struct Alignment {
  ErrorBreakdown counts;
  std::vector<EditStep> script;  ///< in reference/hypothesis order
};

/// Unit-cost Levenshtein alignment.  The backtrace prefers a diagonal move
/// (match or substitution) over an insertion over a deletion, so the breakdown
/// is deterministic even though several optimal scripts may exist.
Alignment Align(const std::vector<int> &ref, const std::vector<int> &hyp);
ErrorBreakdown EditDistanceBreakdown(const std::vector<int> &ref,
                                     const std::vector<int> &hyp);
/// Applies an edit script to `ref`; returns the hypothesis it encodes.
/// Throws ContractError if the script does not fit `ref`.
std::vector<int> ReplayEditScript(const std::vector<int> &ref,
                                  const std::vector<EditStep> &script);

struct ReferenceEntry {
  std::string id;
  std::vector<int> labels;
  std::string group;  ///< bucket / repetition / condition key; may be empty
};

struct CorpusScore {
  ErrorBreakdown total;
  /// Pooled counts per group, in order of first appearance.
  std::vector<std::pair<std::string, ErrorBreakdown>> groups;
};

/// Scores every reference against hyps[id].  A missing hypothesis or a
/// hypothesis for an unknown id throws ContractError naming the id.
CorpusScore ScoreCorpus(const std::vector<ReferenceEntry> &refs,
                        const std::map<std::string, std::vector<int>> &hyps);

/// A table analogue: key columns, the error breakdown, then extra values.
struct ReportTable {
  std::string name;
  std::vector<std::string> key_columns;
  std::vector<std::string> value_columns;
  struct Row {
    std::vector<std::string> keys;
    ErrorBreakdown counts;
    std::vector<double> values;
  };
  std::vector<Row> rows;

  /// Throws ContractError when a row's widths disagree with the columns.
  void Validate() const;
};

/// Columns: keys, sub, ins, del, ref_len, errors, rate (percent, 2 decimals),
/// then value columns (4 decimals).  Empty tables give the header only.
std::string ReportCsv(const ReportTable &table);
std::string ReportJson(const ReportTable &table);
ReportTable ParseReportJson(const std::string &json);
/// Writes <dir>/<name>.csv and <dir>/<name>.json; throws std::runtime_error
/// on unwritable paths.
void EmitReport(const std::string &dir, const ReportTable &table);

}  // namespace syncasr

#endif  // SYNCASR_METRICS_H_
