#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "dualcal/error.hpp"
#include "dualcal/pipeline/manifest.hpp"

namespace dualcal {

struct StageReport {
  // reached: entries that got at least this far; rejected entries count as
  // having passed annotation. exact: current stage only.
  std::map<std::string, std::size_t> reached;
  std::map<std::string, std::size_t> exact;
  std::map<std::string, std::size_t> rejected_by_reason;
  std::size_t total = 0;
  std::size_t train = 0;
  std::size_t test = 0;
};

inline StageReport stage_report(const std::vector<ManifestEntry>& entries) {
  StageReport r;
  for (Stage s : all_stages()) {
    r.reached[to_string(s)] = 0;
    r.exact[to_string(s)] = 0;
  }
  for (auto reason : all_reasons()) r.rejected_by_reason[to_string(reason)] = 0;
  r.total = entries.size();
  for (const auto& e : entries) {
    ++r.exact[to_string(e.stage)];
    const int rank = stage_rank(e.stage);
    for (Stage s : {Stage::acquired, Stage::calibrated, Stage::annotated})
      if (rank >= stage_rank(s)) ++r.reached[to_string(s)];
    if (e.stage == Stage::accepted) ++r.reached["ACCEPTED"];
    if (e.stage == Stage::rejected) {
      ++r.reached["REJECTED"];
      if (e.verdict_reason) ++r.rejected_by_reason[to_string(*e.verdict_reason)];
    }
    if (e.stage == Stage::accepted && e.split) ++(*e.split == Split::train ? r.train : r.test);
  }
  return r;
}

inline nlohmann::json to_json(const StageReport& r) {
  nlohmann::json j;
  j["total"] = r.total;
  j["reached"] = r.reached;
  j["exact"] = r.exact;
  j["acquired"] = r.reached.at("ACQUIRED");
  j["calibrated"] = r.reached.at("CALIBRATED");
  j["annotated"] = r.reached.at("ANNOTATED");
  j["accepted"] = r.exact.at("ACCEPTED");
  j["rejected"] = r.exact.at("REJECTED");
  j["rejected_by_reason"] = r.rejected_by_reason;
  j["split"] = {{"train", r.train}, {"test", r.test}};
  return j;
}

inline std::string format_stage_report(const StageReport& r) {
  std::string s;
  s += "acquired   " + std::to_string(r.reached.at("ACQUIRED")) + "\n";
  s += "calibrated " + std::to_string(r.reached.at("CALIBRATED")) + "\n";
  s += "annotated  " + std::to_string(r.reached.at("ANNOTATED")) + "\n";
  s += "accepted   " + std::to_string(r.exact.at("ACCEPTED")) + "  (train " + std::to_string(r.train) + ", test " +
       std::to_string(r.test) + ")\n";
  s += "rejected   " + std::to_string(r.exact.at("REJECTED"));
  std::string reasons;
  for (const auto& [k, v] : r.rejected_by_reason)
    if (v) reasons += (reasons.empty() ? "" : ", ") + k + " " + std::to_string(v);
  if (!reasons.empty()) s += "  (" + reasons + ")";
  return s + "\n";
}

struct SplitAssignment {
  std::vector<std::string> train;  // sorted
  std::vector<std::string> test;   // sorted
};

// Accepted ids sorted, Fisher-Yates shuffled with mt19937_64(seed), first
// round(n * fraction) go to train.
inline SplitAssignment assign_split(std::vector<std::string> accepted_ids, std::uint64_t seed, double train_fraction) {
  detail::require(train_fraction >= 0.0 && train_fraction <= 1.0, "split: train fraction must be in [0, 1]");
  std::sort(accepted_ids.begin(), accepted_ids.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = accepted_ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(accepted_ids[i - 1], accepted_ids[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::lround(double(accepted_ids.size()) * train_fraction));
  SplitAssignment s;
  s.train.assign(accepted_ids.begin(), accepted_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(accepted_ids.begin() + static_cast<std::ptrdiff_t>(n_train), accepted_ids.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

struct StatsAndSplit {
  StageReport report;
  SplitAssignment split;
};

// Assigns the split to every ACCEPTED entry, records it in the manifest, and
// reports the counts afterwards.
inline StatsAndSplit stats_and_split(Manifest& manifest, std::uint64_t seed, double train_fraction) {
  std::vector<std::string> ids;
  for (const auto& e : manifest.entries())
    if (e.stage == Stage::accepted) ids.push_back(e.id);
  StatsAndSplit out;
  out.split = assign_split(ids, seed, train_fraction);
  auto record = [&](const std::vector<std::string>& v, Split s) {
    for (const auto& id : v) {
      if (manifest.find(id)->split == s) continue;
      manifest.update(id, [&](ManifestEntry& e) { e.split = s; });
    }
  };
  record(out.split.train, Split::train);
  record(out.split.test, Split::test);
  manifest.compact();
  out.report = stage_report(manifest.entries());
  return out;
}

}  // namespace dualcal
