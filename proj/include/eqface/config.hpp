#pragma once

// Run configuration: a plain-text file of `key = value` lines, `#` starts a
// comment. Unknown keys are rejected. Lists are comma separated; noise levels
// are `sigma:fraction` pairs, e.g. `data.noise_levels = 0.1:0.7, 1.0:0.3`.
//
// Keys:
//   seed                       master seed (falls back to $EQFACE_SEED)
//   data.n_classes data.samples_per_class data.d_in data.d
//   data.noise_levels data.lift_seed data.observation_noise
//   split.n_ref_ids split.n_ref_per_id split.n_query_per_id
//   split.n_disturb_ids split.seed
//   model.hidden model.d model.q
//   loss.m1 loss.m2 loss.m3 loss.scale
//   train.iterations train.step3_restart (continue|scratch) train.qwdf_threshold
//   step{1,2,3}.lr0 .momentum .weight_decay .decay_epochs .decay_factor
//              .epochs .batch_size
//   eval.mode eval.fusion eval.f_th eval.s_th eval.max_records

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eqface/model.hpp"
#include "eqface/synthgen.hpp"
#include "eqface/trainer.hpp"

namespace eqface {

using KeyValues = std::map<std::string, std::string>;

// Parses the text; throws InvalidConfig on a malformed line, a duplicate key
// or an unknown key.
KeyValues parse_key_values(const std::string& text);

struct SplitConfig {
  int n_ref_ids = 0;
  int n_ref_per_id = 0;
  int n_query_per_id = 0;
  int n_disturb_ids = 0;
  std::uint64_t seed = 1;
};

struct EvalConfig {
  std::string mode = "none";
  std::string fusion = "template";  // template | running
  double f_th = 0.5;
  double s_th = 0.3;
  std::size_t max_records = 0;  // 0 = unlimited
};

struct RunConfig {
  KeyValues raw;
  std::optional<std::uint64_t> seed;
  GenConfig gen;
  std::optional<SplitConfig> split;  // set when every split.* key is given
  ModelDims dims;
  bool dims_d_set = false;
  bool dims_q_set = false;
  PipelineConfig pipeline;
  EvalConfig eval;

  bool has(const std::string& key) const { return raw.contains(key); }
};

// Builds the typed view. `required` keys must be present (the seed is
// satisfied by $EQFACE_SEED too); otherwise InvalidConfig names the key.
RunConfig build_run_config(const KeyValues& kv, const std::vector<std::string>& required);

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& required);

// Keys `gen` cannot run without.
const std::vector<std::string>& gen_required_keys();

}  // namespace eqface
