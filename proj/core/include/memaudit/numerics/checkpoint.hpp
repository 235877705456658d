// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint container shared by every trained model.
//
// Layout: "MACK", u32 version, u64 header length, the JSON header, then each
// parameter as little-endian float32 in declared order. The header lists the
// parameter names and shapes alongside model kind, config, epoch and loss.

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memaudit/errors.hpp"
#include "memaudit/numerics/params.hpp"

namespace memaudit::numerics {

struct Checkpoint {
  std::string kind;
  nlohmann::json config = nlohmann::json::object();
  std::size_t epoch = 0;
  double loss = 0.0;
  /// Model-specific header fields (schedule, latent statistics, ...).
  nlohmann::json extra = nlohmann::json::object();
  ParamSet params;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Loads and checks the header kind.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& kind);

/// Content fingerprint of an encoded checkpoint.
std::string checkpoint_id(const std::vector<unsigned char>& bytes);

/// Thrown when training produces a non-finite loss. Carries the parameters
/// from the last epoch that completed with a finite loss.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, Checkpoint last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const { return last_good_; }

 private:
  Checkpoint last_good_;
};

}  // namespace memaudit::numerics
