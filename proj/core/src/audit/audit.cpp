// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

#include "memaudit/audit/audit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "memaudit/errors.hpp"

namespace memaudit::audit {

namespace {

void check_tables(const EmbeddingTable& a, const EmbeddingTable& b, const char* op) {
  a.validate();
  b.validate();
  if (a.count() == 0 || b.count() == 0) {
    throw ConfigError(std::string(op) + ": tables must be non-empty");
  }
  if (a.dim != b.dim) {
    throw ShapeError(std::string(op) + ": embedding dimensions differ (" +
                     std::to_string(a.dim) + " vs " + std::to_string(b.dim) + ")");
  }
}

bool better(double d, const std::string& id, const Neighbor& best) {
  return d < best.msd || (d == best.msd && id < best.id);
}

std::vector<Match> match_all(const EmbeddingTable& train, const EmbeddingTable& other,
                             const char* op) {
  check_tables(train, other, op);
  const auto nn = nearest_all(train, other);
  std::vector<Match> out;
  out.reserve(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i) out.push_back({train.ids[i], nn[i].id, nn[i].msd});
  return out;
}

std::string format_double(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

}  // namespace

double msd(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("msd: dimensions differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

Neighbor nearest(std::span<const double> query, const EmbeddingTable& pool) {
  if (pool.count() == 0) throw ConfigError("nearest: empty pool");
  Neighbor best{0, pool.ids[0], msd(query, pool.rows[0])};
  for (std::size_t j = 1; j < pool.count(); ++j) {
    const double d = msd(query, pool.rows[j]);
    if (better(d, pool.ids[j], best)) best = {j, pool.ids[j], d};
  }
  return best;
}

std::vector<Neighbor> nearest_all(const EmbeddingTable& queries, const EmbeddingTable& pool) {
  check_tables(queries, pool, "nearest");
  const std::size_t n = queries.count();
  std::vector<Neighbor> out(n);
  // Rows are independent, so the parallel scan matches the serial one.
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) out[i] = nearest(queries.rows[i], pool);
  return out;
}

std::vector<Match> copy_candidates(const EmbeddingTable& train, const EmbeddingTable& synth) {
  return match_all(train, synth, "copy_candidates");
}

std::vector<Match> validation_baseline(const EmbeddingTable& train, const EmbeddingTable& val) {
  return match_all(train, val, "validation_baseline");
}

double calibrate_threshold(std::vector<double> values, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("calibrate_threshold: q must lie in (0, 1)");
  if (values.size() < 5) {
    throw ConfigError("calibrate_threshold: need at least 5 baseline values, got " +
                      std::to_string(values.size()));
  }
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double copy_rate(std::span<const double> msds, double tau) {
  if (msds.empty()) throw ConfigError("copy_rate: no records");
  const auto below = std::count_if(msds.begin(), msds.end(), [tau](double m) { return m < tau; });
  return static_cast<double>(below) / static_cast<double>(msds.size());
}

double ncc(const volumes::Volume& a, const volumes::Volume& b) {
  if (!(a.dims == b.dims)) {
    throw ShapeError("ncc: dims differ (" + a.dims.to_string() + " vs " + b.dims.to_string() + ")");
  }
  const std::size_t n = a.voxels.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.voxels[i];
    mb += b.voxels[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.voxels[i] - ma, db = b.voxels[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw NumericalError("ncc: correlation undefined for a constant volume (" +
                         (saa == 0.0 ? a.id : b.id) + ")");
  }
  // sab / (n * sigma_a * sigma_b) with population sigmas; the n cancels.
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

Histograms make_histograms(std::span<const double> candidate, std::span<const double> baseline,
                           std::size_t bins) {
  if (bins < 2) throw ConfigError("histogram: need at least 2 bins");
  double hi = 0.0;
  for (double x : candidate) hi = std::max(hi, x);
  for (double x : baseline) hi = std::max(hi, x);
  if (hi == 0.0) hi = 1.0;
  Histograms h;
  for (std::size_t i = 0; i <= bins; ++i) {
    h.edges.push_back(hi * static_cast<double>(i) / static_cast<double>(bins));
  }
  const auto fill = [&](std::span<const double> xs) {
    std::vector<std::size_t> counts(bins, 0);
    for (double x : xs) {
      auto b = static_cast<std::size_t>(x / hi * static_cast<double>(bins));
      ++counts[std::min(b, bins - 1)];
    }
    return counts;
  };
  h.candidate_counts = fill(candidate);
  h.baseline_counts = fill(baseline);
  return h;
}

AuditReport build_report(const std::vector<Match>& candidates, const std::vector<Match>& baseline,
                         double tau, double quantile, std::size_t bins,
                         const std::map<std::string, bool>& truth) {
  if (candidates.empty()) throw ConfigError("build_report: no candidates");
  if (candidates.size() != baseline.size()) {
    throw ConfigError("build_report: candidate and baseline lists differ in length");
  }
  AuditReport r;
  r.tau = tau;
  r.quantile = quantile;
  std::vector<double> cm, bm;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& b = baseline[i];
    if (c.train_id != b.train_id) {
      throw ConfigError("build_report: record " + std::to_string(i) + " pairs train id " +
                        c.train_id + " with " + b.train_id);
    }
    CandidateRecord rec{c.train_id, c.other_id, c.msd, b.other_id, b.msd, c.msd < tau, {}};
    if (const auto it = truth.find(c.train_id); it != truth.end()) rec.truth = it->second;
    r.records.push_back(std::move(rec));
    cm.push_back(c.msd);
    bm.push_back(b.msd);
  }
  r.copy_rate = copy_rate(cm, tau);
  r.histograms = make_histograms(cm, bm, bins);
  return r;
}

nlohmann::json to_json(const AuditReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : r.records) {
    nlohmann::json j = {{"train_id", rec.train_id}, {"synth_id", rec.synth_id},
                        {"msd", rec.msd},           {"val_id", rec.val_id},
                        {"val_msd", rec.val_msd},   {"is_copy", rec.is_copy}};
    if (rec.truth) j["truth"] = *rec.truth;
    records.push_back(std::move(j));
  }
  return {{"config", r.config},
          {"seeds", r.seeds},
          {"tau", r.tau},
          {"quantile", r.quantile},
          {"copy_rate", r.copy_rate},
          {"records", std::move(records)},
          {"histograms",
           {{"edges", r.histograms.edges},
            {"candidate_counts", r.histograms.candidate_counts},
            {"baseline_counts", r.histograms.baseline_counts}}}};
}

AuditReport report_from_json(const nlohmann::json& j) {
  AuditReport r;
  try {
    r.config = j.at("config");
    r.seeds = j.at("seeds");
    r.tau = j.at("tau").get<double>();
    r.quantile = j.at("quantile").get<double>();
    r.copy_rate = j.at("copy_rate").get<double>();
    for (const auto& rec : j.at("records")) {
      CandidateRecord c{rec.at("train_id").get<std::string>(),
                        rec.at("synth_id").get<std::string>(),
                        rec.at("msd").get<double>(),
                        rec.at("val_id").get<std::string>(),
                        rec.at("val_msd").get<double>(),
                        rec.at("is_copy").get<bool>(),
                        {}};
      if (rec.contains("truth")) c.truth = rec.at("truth").get<bool>();
      r.records.push_back(std::move(c));
    }
    const auto& h = j.at("histograms");
    r.histograms.edges = h.at("edges").get<std::vector<double>>();
    r.histograms.candidate_counts = h.at("candidate_counts").get<std::vector<std::size_t>>();
    r.histograms.baseline_counts = h.at("baseline_counts").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("audit report: ") + e.what());
  }
  return r;
}

std::string report_to_json_text(const AuditReport& r) { return to_json(r).dump(2) + "\n"; }

std::string report_to_csv(const AuditReport& r) {
  std::ostringstream out;
  out << "train_id,synth_id,msd,val_id,val_msd,is_copy,truth\n";
  for (const auto& rec : r.records) {
    out << rec.train_id << ',' << rec.synth_id << ',' << format_double(rec.msd) << ','
        << rec.val_id << ',' << format_double(rec.val_msd) << ',' << (rec.is_copy ? 1 : 0) << ','
        << (rec.truth ? (*rec.truth ? "1" : "0") : "") << '\n';
  }
  return out.str();
}

std::vector<NccMatch> ncc_matches(const std::vector<volumes::Volume>& train,
                                  const std::vector<volumes::Volume>& synth) {
  if (train.empty() || synth.empty()) throw ConfigError("ncc_matches: empty input");
  std::vector<NccMatch> out(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    NccMatch best{train[i].id, synth[0].id, ncc(train[i], synth[0])};
    for (std::size_t j = 1; j < synth.size(); ++j) {
      const double c = ncc(train[i], synth[j]);
      if (c > best.ncc || (c == best.ncc && synth[j].id < best.synth_id)) {
        best = {train[i].id, synth[j].id, c};
      }
    }
    out[i] = best;
  }
  return out;
}

}  // namespace memaudit::audit
