#pragma once

// Run configuration: one flat JSON object.
//
//   head:  scales [int] | parts int (single-scale shorthand) | channels |
//          embed_dim | part_pool "gap"|"gmp" | global_mode
//          "gap"|"gmp"|"gap+gmp"|"gcp" | relation_enabled | use_global |
//          use_local
//   train: N_K | N_M | epochs | base_lr_head | base_lr_backbone | momentum |
//          weight_decay | lambda | alpha | seed | decay_start_epoch |
//          decay_period | decay_factor
//   paths: data | out
//
// Missing keys take the defaults; unknown keys and type mismatches are
// rejected with the JSON pointer of the offending value.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "rrid/head.hpp"
#include "rrid/training.hpp"

namespace rrid {

struct RunConfig {
  HeadConfig head;
  TrainConfig train;
  std::string data;
  std::string out;

  // Every key with its resolved value, in a fixed order.
  nlohmann::ordered_json to_json() const;
};

RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

// Checkpoint config blob: {"run": <RunConfig>, "num_classes", "rng_digest"}.
Checkpoint make_checkpoint(const RunConfig& run, TrainResult result);
RunConfig checkpoint_run_config(const Checkpoint& ckpt);

}  // namespace rrid
