#include "arhq/config.hpp"

#include <initializer_list>
#include <set>

#include "arhq/error.hpp"
#include "arhq/tensor_file.hpp"

namespace arhq::io {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (std::string_view k : allowed) ok = ok || item.key() == k;
    if (!ok) throw ConfigError(path + "." + item.key() + ": unknown key");
  }
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  return v.get<double>();
}

std::int64_t get_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return v.get<std::int64_t>();
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + ": expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
  return v.get<bool>();
}

template <class Fn>
auto with_path(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json finite_or_null(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

QuantizerSpec parse_quantizer(const json& doc, const std::string& path) {
  check_keys(doc, path, {"family", "bits", "granularity", "block_size", "scale_rule", "clip"});
  QuantizerSpec spec;
  if (!doc.contains("family")) throw ConfigError(path + ".family: required");
  spec.family = with_path(path + ".family",
                          [&] { return parse_family(get_string(doc["family"], path + ".family")); });
  if (spec.family == QuantFamily::block_fp4) spec.granularity = Granularity::per_block;
  if (doc.contains("bits")) spec.bits = static_cast<int>(get_integer(doc["bits"], path + ".bits"));
  if (doc.contains("granularity")) {
    spec.granularity = with_path(path + ".granularity", [&] {
      return parse_granularity(get_string(doc["granularity"], path + ".granularity"));
    });
  }
  if (doc.contains("block_size")) {
    spec.block_size = get_integer(doc["block_size"], path + ".block_size");
  }
  if (doc.contains("scale_rule")) {
    spec.scale_rule = with_path(path + ".scale_rule", [&] {
      return parse_scale_rule(get_string(doc["scale_rule"], path + ".scale_rule"));
    });
  }
  if (doc.contains("clip") && !doc["clip"].is_null()) {
    spec.clip = get_number(doc["clip"], path + ".clip");
  }
  with_path(path, [&] {
    spec.validate();
    return 0;
  });
  return spec;
}

json to_json(const QuantizerSpec& spec) {
  return json{{"family", std::string(to_string(spec.family))},
              {"bits", spec.bits},
              {"granularity", std::string(to_string(spec.granularity))},
              {"block_size", spec.block_size},
              {"scale_rule", std::string(to_string(spec.scale_rule))},
              {"clip", finite_or_null(spec.clip)}};
}

void RunConfig::validate() const {
  layer.validate();
  if (layer_name.empty()) throw ConfigError("layer name must not be empty");
  if (synth) {
    with_path("synth", [&] {
      synth->validate();
      return 0;
    });
  }
  if (synth_layers < 1) throw ConfigError("synth.layers must be >= 1");
}

RunConfig parse_config(const json& doc) {
  const std::string root = "config";
  check_keys(doc, root,
             {"rank", "floor", "floor_rule", "floor_min", "act_quantizer", "weight_quantizer",
              "smoothing", "methods", "variants", "seed", "eval_in_sample", "layer",
              "factor_precision", "synth"});
  RunConfig cfg;
  LayerConfig& lc = cfg.layer;

  if (doc.contains("rank")) {
    const std::int64_t rank = get_integer(doc["rank"], root + ".rank");
    if (rank < 1) throw ConfigError(root + ".rank: must be >= 1, got " + std::to_string(rank));
    lc.rank = rank;
  }
  if (doc.contains("floor_rule")) {
    const std::string rule = get_string(doc["floor_rule"], root + ".floor_rule");
    if (rule == "relative") {
      lc.floor.kind = FloorRule::Kind::relative;
    } else if (rule == "absolute") {
      lc.floor.kind = FloorRule::Kind::absolute;
    } else {
      throw ConfigError(root + ".floor_rule: expected 'relative' or 'absolute'");
    }
  }
  if (doc.contains("floor")) lc.floor.value = get_number(doc["floor"], root + ".floor");
  if (doc.contains("floor_min")) lc.floor.min_abs = get_number(doc["floor_min"], root + ".floor_min");
  if (lc.floor.kind == FloorRule::Kind::absolute && !doc.contains("floor_min")) {
    lc.floor.min_abs = 0.0;
  }
  with_path(root + ".floor", [&] {
    lc.floor.validate();
    return 0;
  });

  if (doc.contains("act_quantizer")) {
    lc.act_quantizer = parse_quantizer(doc["act_quantizer"], root + ".act_quantizer");
  }
  if (doc.contains("weight_quantizer")) {
    lc.weight_quantizer = parse_quantizer(doc["weight_quantizer"], root + ".weight_quantizer");
  }

  if (doc.contains("smoothing")) {
    const json& s = doc["smoothing"];
    const std::string path = root + ".smoothing";
    if (s.is_null()) {
      lc.smoothing.reset();
    } else {
      check_keys(s, path, {"alpha", "scales_path"});
      SmoothingConfig sc;
      if (s.contains("alpha")) sc.alpha = get_number(s["alpha"], path + ".alpha");
      if (!(sc.alpha >= 0.0 && sc.alpha <= 1.0)) {
        throw ConfigError(path + ".alpha: must lie in [0, 1]");
      }
      if (s.contains("scales_path") && !s["scales_path"].is_null()) {
        sc.scales_path = get_string(s["scales_path"], path + ".scales_path");
      }
      lc.smoothing = sc;
    }
  }

  if (doc.contains("methods")) {
    const json& m = doc["methods"];
    if (!m.is_array() || m.empty()) throw ConfigError(root + ".methods: expected a non-empty array");
    lc.methods.clear();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string path = root + ".methods[" + std::to_string(i) + "]";
      lc.methods.push_back(with_path(path, [&] { return parse_split_method(get_string(m[i], path)); }));
    }
  }
  if (doc.contains("variants")) {
    const json& v = doc["variants"];
    if (!v.is_array() || v.empty()) throw ConfigError(root + ".variants: expected a non-empty array");
    lc.variants.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string path = root + ".variants[" + std::to_string(i) + "]";
      lc.variants.push_back(with_path(path, [&] { return parse_variant(get_string(v[i], path)); }));
    }
  } else if (!lc.smoothing) {
    lc.variants = {Variant::raw};
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw ConfigError(root + ".seed: expected a non-negative integer");
    lc.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("eval_in_sample")) {
    lc.eval_in_sample = get_bool(doc["eval_in_sample"], root + ".eval_in_sample");
  }
  if (doc.contains("layer")) cfg.layer_name = get_string(doc["layer"], root + ".layer");
  if (doc.contains("factor_precision")) {
    cfg.factor_precision = with_path(root + ".factor_precision", [&] {
      return parse_factor_precision(get_string(doc["factor_precision"], root + ".factor_precision"));
    });
  }
  if (doc.contains("synth") && !doc["synth"].is_null()) {
    const json& s = doc["synth"];
    const std::string path = root + ".synth";
    check_keys(s, path, {"d_in", "d_out", "n_calib", "n_eval", "weight_decay", "anisotropy", "layers"});
    SynthSpec spec;
    if (s.contains("d_in")) spec.d_in = get_integer(s["d_in"], path + ".d_in");
    if (s.contains("d_out")) spec.d_out = get_integer(s["d_out"], path + ".d_out");
    if (s.contains("n_calib")) spec.n_calib = get_integer(s["n_calib"], path + ".n_calib");
    if (s.contains("n_eval")) spec.n_eval = get_integer(s["n_eval"], path + ".n_eval");
    if (s.contains("weight_decay")) spec.weight_decay = get_number(s["weight_decay"], path + ".weight_decay");
    if (s.contains("anisotropy")) spec.anisotropy = get_number(s["anisotropy"], path + ".anisotropy");
    if (s.contains("layers")) cfg.synth_layers = get_integer(s["layers"], path + ".layers");
    spec.seed = lc.seed;
    cfg.synth = spec;
  }

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  try {
    return parse_config(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json to_json(const LayerConfig& lc) {
  json methods = json::array();
  for (SplitMethod m : lc.methods) methods.push_back(std::string(to_string(m)));
  json variants = json::array();
  for (Variant v : lc.variants) variants.push_back(std::string(to_string(v)));
  json smoothing = nullptr;
  if (lc.smoothing) {
    smoothing = json{{"alpha", lc.smoothing->alpha},
                     {"scales_path", lc.smoothing->scales_path.empty()
                                         ? json(nullptr)
                                         : json(lc.smoothing->scales_path)}};
  }
  return json{{"rank", lc.rank},
              {"floor", lc.floor.value},
              {"floor_rule", lc.floor.kind == FloorRule::Kind::relative ? "relative" : "absolute"},
              {"floor_min", lc.floor.min_abs},
              {"act_quantizer", to_json(lc.act_quantizer)},
              {"weight_quantizer", to_json(lc.weight_quantizer)},
              {"smoothing", smoothing},
              {"methods", methods},
              {"variants", variants},
              {"seed", lc.seed},
              {"eval_in_sample", lc.eval_in_sample}};
}

json to_json(const RunConfig& cfg) {
  json doc = to_json(cfg.layer);
  doc["layer"] = cfg.layer_name;
  doc["factor_precision"] = std::string(to_string(cfg.factor_precision));
  if (cfg.synth) {
    doc["synth"] = json{{"d_in", cfg.synth->d_in},         {"d_out", cfg.synth->d_out},
                        {"n_calib", cfg.synth->n_calib},   {"n_eval", cfg.synth->n_eval},
                        {"weight_decay", cfg.synth->weight_decay},
                        {"anisotropy", cfg.synth->anisotropy}, {"layers", cfg.synth_layers}};
  } else {
    doc["synth"] = nullptr;
  }
  return doc;
}

SynthSpec synth_for_layer(const RunConfig& cfg, Index index) {
  SynthSpec spec = cfg.synth.value_or(SynthSpec{});
  spec.seed = cfg.layer.seed + static_cast<std::uint64_t>(index);
  return spec;
}

}  // namespace arhq::io
