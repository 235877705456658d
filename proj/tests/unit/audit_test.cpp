// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/audit/audit.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "memaudit/errors.hpp"
#include "memaudit/rng.hpp"
#include "memaudit/volumes/orientation.hpp"
#include "memaudit/volumes/phantom.hpp"

namespace memaudit::audit {
namespace {

EmbeddingTable table(std::vector<std::string> ids, std::vector<std::vector<double>> rows) {
  EmbeddingTable t;
  t.dim = rows.front().size();
  t.ids = std::move(ids);
  t.rows = std::move(rows);
  return t;
}

EmbeddingTable random_table(Rng& rng, std::size_t n, std::size_t d, const std::string& prefix) {
  EmbeddingTable t;
  t.dim = d;
  for (std::size_t i = 0; i < n; ++i) {
    t.ids.push_back(prefix + std::to_string(i));
    std::vector<double> row(d);
    // Coarse values make exact ties common.
    for (double& x : row) x = static_cast<double>(rng.index(3));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Independent brute force: sort all (distance, id) pairs.
std::pair<std::string, double> brute_nearest(const std::vector<double>& q,
                                             const EmbeddingTable& pool) {
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t j = 0; j < pool.count(); ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) s += std::pow(q[k] - pool.rows[j][k], 2);
    all.emplace_back(s / static_cast<double>(q.size()), pool.ids[j]);
  }
  std::sort(all.begin(), all.end());
  return {all.front().second, all.front().first};
}

TEST(Msd, Examples) {
  std::vector<double> a(32, 0.5), b = a;
  EXPECT_EQ(msd(a, b), 0.0);
  b[3] += 1.0;
  b[17] -= 1.0;
  EXPECT_DOUBLE_EQ(msd(a, b), 0.0625);
  EXPECT_THROW(msd(a, std::vector<double>(31)), ShapeError);
}

TEST(Msd, SymmetricAndNonnegative) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(32), b(32);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    EXPECT_EQ(msd(a, b), msd(b, a));
    EXPECT_GE(msd(a, b), 0.0);
    EXPECT_EQ(msd(a, a), 0.0);
  }
}

TEST(Nearest, FindsQueryInPool) {
  const auto pool = table({"x", "y", "z"}, {{0, 0}, {1, 1}, {5, 5}});
  const auto n = nearest(std::vector<double>{1, 1}, pool);
  EXPECT_EQ(n.id, "y");
  EXPECT_EQ(n.msd, 0.0);
}

TEST(Nearest, KnownArgmin) {
  const auto pool = table({"a", "b", "c"}, {{3, 0}, {0, 2}, {-1, -1}});
  // Distances from origin: 4.5, 2, 1.
  const auto n = nearest(std::vector<double>{0, 0}, pool);
  EXPECT_EQ(n.id, "c");
  EXPECT_DOUBLE_EQ(n.msd, 1.0);
}

TEST(Nearest, TiesGoToSmallestId) {
  const auto pool = table({"s2", "s10", "s1"}, {{1, 0}, {0, 1}, {-1, 0}});
  EXPECT_EQ(nearest(std::vector<double>{0, 0}, pool).id, "s1");
  const auto pool2 = table({"s2", "s10"}, {{1, 0}, {0, 1}});
  EXPECT_EQ(nearest(std::vector<double>{0, 0}, pool2).id, "s10");
}

TEST(Nearest, EmptyPoolRejected) {
  EmbeddingTable empty;
  EXPECT_THROW(nearest(std::vector<double>{0.0}, empty), ConfigError);
}

TEST(Nearest, MatchesBruteForceOnRandomPools) {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.index(4);
    const auto pool = random_table(rng, 1 + rng.index(30), d, "p");
    std::vector<double> q(d);
    for (auto& x : q) x = static_cast<double>(rng.index(3));
    const auto got = nearest(q, pool);
    const auto want = brute_nearest(q, pool);
    ASSERT_EQ(got.id, want.first);
    ASSERT_EQ(got.msd, want.second);
    ASSERT_EQ(pool.ids[got.index], got.id);
  }
}

TEST(Nearest, InvariantUnderPoolPermutation) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto queries = random_table(rng, 10, 3, "q");
    auto pool = random_table(rng, 25, 3, "s");
    const auto before = nearest_all(queries, pool);
    std::vector<std::size_t> perm(pool.count());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    EmbeddingTable shuffled;
    shuffled.dim = pool.dim;
    for (std::size_t i : perm) {
      shuffled.ids.push_back(pool.ids[i]);
      shuffled.rows.push_back(pool.rows[i]);
    }
    const auto after = nearest_all(queries, shuffled);
    for (std::size_t i = 0; i < before.size(); ++i) {
      ASSERT_EQ(before[i].id, after[i].id);
      ASSERT_EQ(before[i].msd, after[i].msd);
    }
  }
}

TEST(CopyCandidates, SelfPoolGivesOwnIds) {
  Rng rng(5);
  EmbeddingTable t;
  t.dim = 32;
  for (int i = 0; i < 20; ++i) {
    t.ids.push_back("t" + std::to_string(i));
    std::vector<double> row(32);
    for (auto& x : row) x = rng.normal();
    t.rows.push_back(row);
  }
  for (const auto& m : copy_candidates(t, t)) {
    EXPECT_EQ(m.train_id, m.other_id);
    EXPECT_EQ(m.msd, 0.0);
  }
}

TEST(CopyCandidates, SingleSyntheticServesEveryone) {
  const auto train = table({"a", "b", "c"}, {{0, 0}, {1, 0}, {9, 9}});
  const auto synth = table({"s"}, {{4, 4}});
  const auto c = copy_candidates(train, synth);
  ASSERT_EQ(c.size(), 3u);
  for (const auto& m : c) EXPECT_EQ(m.other_id, "s");
}

TEST(CopyCandidates, DimensionMismatchRejected) {
  const auto train = table({"a"}, {{0, 0}});
  const auto synth = table({"s"}, {{0, 0, 0}});
  EXPECT_THROW(copy_candidates(train, synth), ShapeError);
}

TEST(ValidationBaseline, DisjointCorporaArePositive) {
  Rng rng(8);
  const auto train = random_table(rng, 10, 4, "t");
  EmbeddingTable val;
  val.dim = 4;
  for (int i = 0; i < 10; ++i) {
    val.ids.push_back("v" + std::to_string(i));
    val.rows.push_back({0.5 + i, 0.5, 0.5, 0.5});
  }
  for (const auto& m : validation_baseline(train, val)) EXPECT_GT(m.msd, 0.0);
}

TEST(Threshold, Examples) {
  EXPECT_DOUBLE_EQ(calibrate_threshold({5, 1, 4, 2, 3}, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(calibrate_threshold({7, 7, 7, 7, 7, 7}, 0.05), 7.0);
  // Position 0.05 * 4 = 0.2 between 10 and 20.
  EXPECT_DOUBLE_EQ(calibrate_threshold({50, 40, 30, 20, 10}, 0.05), 12.0);
  EXPECT_THROW(calibrate_threshold({1, 2, 3, 4}, 0.5), ConfigError);
  EXPECT_THROW(calibrate_threshold({1, 2, 3, 4, 5}, 0.0), ConfigError);
  EXPECT_THROW(calibrate_threshold({1, 2, 3, 4, 5}, 1.0), ConfigError);
}

TEST(CopyRate, Bounds) {
  const std::vector<double> m{0.1, 0.2, 0.3, 0.4};
  EXPECT_EQ(copy_rate(m, 0.0), 0.0);
  EXPECT_EQ(copy_rate(m, std::numeric_limits<double>::infinity()), 1.0);
  EXPECT_EQ(copy_rate(m, 0.3), 0.5);
  const std::vector<double> with_dup{0.0, 0.2};
  EXPECT_EQ(copy_rate(with_dup, 0.0), 0.0);
  EXPECT_THROW(copy_rate(std::vector<double>{}, 1.0), ConfigError);
}

TEST(CopyRate, MonotoneInTau) {
  Rng rng(9);
  std::vector<double> m(100);
  for (auto& x : m) x = rng.uniform();
  double prev = 0.0;
  for (double tau = 0.0; tau <= 1.05; tau += 0.01) {
    const double r = copy_rate(m, tau);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

volumes::Volume ramp(const std::string& id, double scale) {
  volumes::Volume v{id, {4, 4, 4}, std::vector<float>(64)};
  for (std::size_t i = 0; i < 64; ++i) {
    v.voxels[i] = static_cast<float>(scale * std::sin(0.3 * static_cast<double>(i * i)));
  }
  return v;
}

TEST(Ncc, SelfAndNegation) {
  const auto a = ramp("a", 1.0);
  EXPECT_NEAR(ncc(a, a), 1.0, 1e-12);
  const auto b = ramp("b", -1.0);
  EXPECT_NEAR(ncc(a, b), -1.0, 1e-12);
}

TEST(Ncc, ConstantVolumeIsAnError) {
  const auto a = ramp("a", 1.0);
  volumes::Volume c{"c", {4, 4, 4}, std::vector<float>(64, 0.25f)};
  EXPECT_THROW(ncc(a, c), NumericalError);
  EXPECT_THROW(ncc(c, a), NumericalError);
}

TEST(Ncc, MatchesPearsonOracleAndStaysInRange) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    volumes::Volume a{"a", {3, 3, 3}, std::vector<float>(27)};
    volumes::Volume b{"b", {3, 3, 3}, std::vector<float>(27)};
    for (auto& x : a.voxels) x = static_cast<float>(rng.normal());
    for (std::size_t i = 0; i < 27; ++i) {
      b.voxels[i] = static_cast<float>(rng.uniform() < 0.5 ? a.voxels[i] : rng.normal());
    }
    // Population-statistics formula written out directly.
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < 27; ++i) {
      ma += a.voxels[i] / 27.0;
      mb += b.voxels[i] / 27.0;
    }
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < 27; ++i) {
      cov += (a.voxels[i] - ma) * (b.voxels[i] - mb) / 27.0;
      va += (a.voxels[i] - ma) * (a.voxels[i] - ma) / 27.0;
      vb += (b.voxels[i] - mb) * (b.voxels[i] - mb) / 27.0;
    }
    const double r = ncc(a, b);
    EXPECT_NEAR(r, cov / (std::sqrt(va) * std::sqrt(vb)), 1e-12);
    EXPECT_LE(std::abs(r), 1.0 + 1e-9);
  }
}

TEST(Ncc, MatchesPicksExactCopy) {
  const auto train = volumes::generate_phantoms(1, 4, {8, 8, 8});
  auto synth = volumes::generate_phantoms(2, 5, {8, 8, 8});
  volumes::Volume copy = train[2];
  copy.id = "copy";
  synth.push_back(copy);
  const auto m = ncc_matches(train, synth);
  EXPECT_EQ(m[2].synth_id, "copy");
  EXPECT_NEAR(m[2].ncc, 1.0, 1e-12);
}

TEST(Histograms, SharedRangeAndCounts) {
  const std::vector<double> cand{0.0, 0.1, 0.5, 1.0};
  const std::vector<double> base{0.2, 0.3, 2.0};
  const auto h = make_histograms(cand, base, 4);
  ASSERT_EQ(h.edges.size(), 5u);
  EXPECT_EQ(h.edges.front(), 0.0);
  EXPECT_EQ(h.edges.back(), 2.0);
  EXPECT_EQ(std::accumulate(h.candidate_counts.begin(), h.candidate_counts.end(), 0u), 4u);
  EXPECT_EQ(std::accumulate(h.baseline_counts.begin(), h.baseline_counts.end(), 0u), 3u);
  EXPECT_EQ(h.baseline_counts.back(), 1u);
  EXPECT_EQ(h.candidate_counts[0], 2u);
  EXPECT_THROW(make_histograms(cand, base, 1), ConfigError);
}

AuditReport sample_report() {
  std::vector<Match> cand, base;
  Rng rng(21);
  for (int i = 0; i < 12; ++i) {
    const std::string id = "phantom_" + std::to_string(i);
    cand.push_back({id, "synth_" + std::to_string(rng.index(30)), rng.uniform() / 3.0});
    base.push_back({id, "val_" + std::to_string(rng.index(30)), 0.1 + rng.uniform()});
  }
  std::vector<double> bm;
  for (const auto& b : base) bm.push_back(b.msd);
  const double tau = calibrate_threshold(bm, 0.05);
  AuditReport r = build_report(cand, base, tau, 0.05, 10, {{"phantom_3", true}, {"phantom_4", false}});
  r.config = {{"note", "unit"}};
  r.seeds = {{"master", 7}};
  return r;
}

TEST(Report, ConsistentCopyRateAndCounts) {
  const auto r = sample_report();
  std::size_t copies = 0;
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.is_copy, rec.msd < r.tau);
    copies += rec.is_copy ? 1 : 0;
  }
  EXPECT_DOUBLE_EQ(r.copy_rate, static_cast<double>(copies) / static_cast<double>(r.records.size()));
  const auto& h = r.histograms;
  EXPECT_EQ(std::accumulate(h.candidate_counts.begin(), h.candidate_counts.end(), 0u), 12u);
  EXPECT_EQ(std::accumulate(h.baseline_counts.begin(), h.baseline_counts.end(), 0u), 12u);
  EXPECT_TRUE(r.records[3].truth.has_value());
  EXPECT_FALSE(r.records[5].truth.has_value());
}

TEST(Report, JsonRoundTripIsBitExact) {
  const auto r = sample_report();
  const std::string text = report_to_json_text(r);
  const auto back = report_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(report_to_json_text(back), text);
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    EXPECT_EQ(back.records[i].msd, r.records[i].msd);
    EXPECT_EQ(back.records[i].val_msd, r.records[i].val_msd);
  }
  EXPECT_EQ(back.tau, r.tau);
}

TEST(Report, CsvFieldOrder) {
  const auto csv = report_to_csv(sample_report());
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "train_id,synth_id,msd,val_id,val_msd,is_copy,truth");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
}

TEST(Report, MismatchedRecordsRejected) {
  const std::vector<Match> cand{{"a", "s", 0.1}};
  const std::vector<Match> base{{"b", "v", 0.2}};
  EXPECT_THROW(build_report(cand, base, 0.1, 0.05), ConfigError);
}

}  // namespace
}  // namespace memaudit::audit
