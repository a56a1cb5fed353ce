#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "arhq/decompose.hpp"
#include "arhq/pipeline.hpp"
#include "arhq/quantizers.hpp"
#include "arhq/synthetic.hpp"

namespace arhq::io {

// Run-level settings around a LayerConfig. Schema and defaults are listed in
// docs/config.md; unknown keys are rejected.
struct RunConfig {
  LayerConfig layer;
  std::string layer_name = "layer0";
  FactorPrecision factor_precision = FactorPrecision::f64;
  std::optional<SynthSpec> synth;  // seed comes from layer.seed
  Index synth_layers = 1;

  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

// Throws ConfigError with a path-qualified message ("config.act_quantizer.bits: ...").
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved config, every default spelled out; parse_config(to_json(c)) == c.
nlohmann::json to_json(const RunConfig& cfg);
nlohmann::json to_json(const LayerConfig& cfg);
nlohmann::json to_json(const QuantizerSpec& spec);

QuantizerSpec parse_quantizer(const nlohmann::json& doc, const std::string& path);

// Synthetic spec for layer `index` of a run: seed = cfg.layer.seed + index.
SynthSpec synth_for_layer(const RunConfig& cfg, Index index);

}  // namespace arhq::io
