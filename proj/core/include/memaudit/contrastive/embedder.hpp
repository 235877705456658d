// Copyright 2026 The memaudit Authors
// SPDX-License-Identifier: Apache-2.0

// Orientation-invariant volume embedder trained with a triplet objective.
//
// Trunk: stride-2 conv blocks (k4, p1) + leaky_relu down to a small grid, a k3
// conv + leaky_relu to `trunk_channels`, then flatten (or spatial mean with
// `global_pool`) -> dense(hidden) -> leaky_relu -> dense(32), optionally
// followed by tanh (`bounded`).

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memaudit/numerics/autodiff.hpp"
#include "memaudit/numerics/checkpoint.hpp"
#include "memaudit/numerics/params.hpp"
#include "memaudit/rng.hpp"
#include "memaudit/volumes/orientation.hpp"
#include "memaudit/volumes/volume.hpp"

namespace memaudit::contrastive {

inline constexpr const char* kCheckpointKind = "embedder";
inline constexpr std::size_t kEmbeddingDim = 32;

/// Where training negatives come from.
enum class Negatives {
  kSingle,  // one uniformly drawn other volume per anchor
  kBatch,   // every other anchor in the optimizer batch
};

struct EmbedderConfig {
  volumes::Dims dims{16, 16, 16};
  /// One width per stride-2 block.
  std::vector<std::size_t> widths{8, 16};
  std::size_t trunk_channels = 8;
  /// Average the trunk output over space instead of flattening it.
  bool global_pool = false;
  std::size_t hidden = 64;
  /// Squash each embedding component into (-1, 1). With a fixed margin this
  /// stops the loss being satisfied by scaling up a few directions.
  bool bounded = false;
  double margin = 0.0;
  Negatives negatives = Negatives::kSingle;
  /// Present the anchor in a random orientation too, not only the positive.
  bool augment_anchor = false;
  double learning_rate = 1e-3;
  /// Cosine-anneal the learning rate from learning_rate to 0 over the epochs.
  bool cosine_decay = false;
  std::size_t epochs = 60;
  /// Triplets per optimizer step.
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  /// Abort when the mean per-component variance of a batch of anchor
  /// embeddings drops below this value.
  double variance_floor = 1e-6;

  void validate() const;
  /// Length of the trunk feature vector fed to the dense head.
  std::size_t trunk_size() const;
};

void to_json(nlohmann::json& j, const EmbedderConfig& c);
void from_json(const nlohmann::json& j, EmbedderConfig& c);

numerics::ParamSet init_params(const EmbedderConfig& config);

/// x: [N,1,D,H,W] -> [N,32].
numerics::Var embed(const numerics::Var& x, const numerics::BoundParams& p,
                    const EmbedderConfig& config);

std::vector<double> embed(const numerics::ParamSet& params, const EmbedderConfig& config,
                          const volumes::Volume& v);
/// Rows in input order, processed in chunks of config.batch_size.
std::vector<std::vector<double>> embed_all(const numerics::ParamSet& params,
                                           const EmbedderConfig& config,
                                           const std::vector<volumes::Volume>& vs);

/// Mean over rows of max(0, |a - p| - |a - n| + margin), Euclidean norms.
/// Rows are [N,d] (or a single [d] vector).
numerics::Var triplet_loss(const numerics::Var& anchor, const numerics::Var& positive,
                           const numerics::Var& negative, double margin = 0.0);
double triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                    const std::vector<double>& negative, double margin = 0.0);

/// Triplet loss with in-batch negatives: the mean over ordered pairs i != j
/// of max(0, |a_i - p_i| - |a_i - a_j| + margin). Needs at least 2 rows.
numerics::Var batch_triplet_loss(const numerics::Var& anchor, const numerics::Var& positive,
                                 double margin = 0.0);

struct Triplet {
  std::size_t anchor = 0;
  std::size_t negative = 0;
  volumes::Orientation orientation;
  volumes::Volume positive;
};

/// One epoch of triplets: every corpus index is an anchor exactly once, in
/// random order; positives are random orientations of the anchor and
/// negatives are uniform over the other indices.
std::vector<Triplet> sample_triplets(const std::vector<volumes::Volume>& corpus, Rng& rng);

/// Training views of one epoch: every corpus index once, in random order, with
/// a randomly oriented positive and, if `augment_anchor`, an independently
/// oriented anchor view (identity otherwise).
struct AnchorView {
  std::size_t index = 0;
  volumes::Orientation anchor_orientation;
  volumes::Volume anchor;
  volumes::Orientation orientation;
  volumes::Volume positive;
};

std::vector<AnchorView> sample_views(const std::vector<volumes::Volume>& corpus,
                                     bool augment_anchor, Rng& rng);

/// Fraction of triplets whose positive is strictly closer than the negative.
double triplet_accuracy(const numerics::ParamSet& params, const EmbedderConfig& config,
                        const std::vector<volumes::Volume>& corpus,
                        const std::vector<Triplet>& triplets);

struct TrainResult {
  /// Parameters of the best validation epoch: highest triplet accuracy, the
  /// latest such epoch on ties.
  numerics::ParamSet params;
  std::vector<double> loss_curve;
  std::vector<double> val_accuracy;
  std::vector<double> val_loss;
  std::vector<double> val_ratio;
  /// 1-based epoch that produced `params`; 0 means the initialization.
  std::size_t best_epoch = 0;
};

/// Validation triplets are drawn once from `val` with a fixed seed and reused
/// every epoch; see TrainResult for how the returned epoch is chosen.
TrainResult train(const EmbedderConfig& config, const std::vector<volumes::Volume>& train,
                  const std::vector<volumes::Volume>& val);

numerics::Checkpoint to_checkpoint(const EmbedderConfig& config, const TrainResult& result);
std::pair<EmbedderConfig, numerics::ParamSet> from_checkpoint(const numerics::Checkpoint& c);

/// Embeddings of a set of volumes, rows stored at 32-bit precision.
struct EmbeddingTable {
  std::string checkpoint_id;
  std::size_t dim = kEmbeddingDim;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;

  std::size_t count() const { return ids.size(); }
  void validate() const;
};

/// Embeds `vs` and rounds every component to float.
EmbeddingTable make_table(const numerics::ParamSet& params, const EmbedderConfig& config,
                          const std::vector<volumes::Volume>& vs, std::string checkpoint_id);

std::vector<unsigned char> encode_table(const EmbeddingTable& table);
EmbeddingTable decode_table(const std::vector<unsigned char>& bytes);
void save_table(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_table(const std::filesystem::path& path);

}  // namespace memaudit::contrastive
