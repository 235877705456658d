// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Nearest-neighbour memorization audit over embedding tables, plus the
// pixel-space correlation baseline.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memaudit/contrastive/embedder.hpp"
#include "memaudit/volumes/volume.hpp"

namespace memaudit::audit {

using contrastive::EmbeddingTable;

inline constexpr double kDefaultQuantile = 0.05;
inline constexpr std::size_t kDefaultBins = 20;

/// (1/d) * sum_i (a_i - b_i)^2.
double msd(std::span<const double> a, std::span<const double> b);

struct Neighbor {
  std::size_t index = 0;
  std::string id;
  double msd = 0.0;
};

/// Exact argmin of msd over the pool; equal distances resolve to the
/// lexicographically smallest id.
Neighbor nearest(std::span<const double> query, const EmbeddingTable& pool);
/// nearest() for every row of `queries`.
std::vector<Neighbor> nearest_all(const EmbeddingTable& queries, const EmbeddingTable& pool);

struct Match {
  std::string train_id;
  std::string other_id;
  double msd = 0.0;
};

/// Nearest synthetic embedding of every training row.
std::vector<Match> copy_candidates(const EmbeddingTable& train, const EmbeddingTable& synth);
/// Nearest validation embedding of every training row.
std::vector<Match> validation_baseline(const EmbeddingTable& train, const EmbeddingTable& val);

/// Linear-interpolation empirical quantile. Needs at least 5 values and
/// 0 < q < 1.
double calibrate_threshold(std::vector<double> baseline_msds, double q = kDefaultQuantile);

/// Fraction of values strictly below tau.
double copy_rate(std::span<const double> candidate_msds, double tau);

/// Pearson correlation with population standard deviations. Throws
/// NumericalError when either volume is constant.
double ncc(const volumes::Volume& a, const volumes::Volume& b);

struct CandidateRecord {
  std::string train_id;
  std::string synth_id;
  double msd = 0.0;
  std::string val_id;
  double val_msd = 0.0;
  bool is_copy = false;
  std::optional<bool> truth;
};

struct Histograms {
  std::vector<double> edges;
  std::vector<std::size_t> candidate_counts;
  std::vector<std::size_t> baseline_counts;
};

/// Equal-width bins over [0, max] of both samples; the top edge is inclusive.
Histograms make_histograms(std::span<const double> candidate, std::span<const double> baseline,
                           std::size_t bins);

struct AuditReport {
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  double tau = 0.0;
  double quantile = kDefaultQuantile;
  double copy_rate = 0.0;
  std::vector<CandidateRecord> records;
  Histograms histograms;
};

/// Joins candidates and baseline by train id (same order required) and flags
/// copies with msd < tau. `truth` maps train ids to planted ground truth.
AuditReport build_report(const std::vector<Match>& candidates, const std::vector<Match>& baseline,
                         double tau, double quantile, std::size_t bins = kDefaultBins,
                         const std::map<std::string, bool>& truth = {});

nlohmann::json to_json(const AuditReport& r);
AuditReport report_from_json(const nlohmann::json& j);
std::string report_to_json_text(const AuditReport& r);
std::string report_to_csv(const AuditReport& r);

/// Highest-correlation synthetic volume of every training volume.
struct NccMatch {
  std::string train_id;
  std::string synth_id;
  double ncc = 0.0;
};
std::vector<NccMatch> ncc_matches(const std::vector<volumes::Volume>& train,
                                  const std::vector<volumes::Volume>& synth);

}  // namespace memaudit::audit
