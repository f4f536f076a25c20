#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "textar/model.hpp"
#include "textar/synthdoc.hpp"
#include "textar/training.hpp"

namespace textar::config {

// Bad user input (malformed config, unknown key, unparsable override).
// The CLI maps this to exit code 1; runtime failures exit 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  // context-window metric weights (the model's S gives the window size)
  double geometry_k = 1.0;
  double geometry_m = 2.0;
  int synth_docs = 8;
  synth::SynthConfig synth;
  model::ModelConfig model = model::ModelConfig::desk_default();
  train::TrainConfig train;
  int eval_batch_windows = 16;
};

// The full default config as JSON; every legal key appears here.
nlohmann::json default_run_json();

// Defaults, deep-merged with the optional config file, then with
// "dotted.path=value" overrides. Keys absent from the defaults are rejected.
nlohmann::json resolve_run_json(const std::string& config_path,
                                const std::vector<std::string>& overrides);

RunConfig parse_run_config(const nlohmann::json& merged);

}  // namespace textar::config
