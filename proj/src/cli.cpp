#include "arhq/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "arhq/config.hpp"
#include "arhq/error.hpp"
#include "arhq/pipeline.hpp"
#include "arhq/report.hpp"
#include "arhq/synthetic.hpp"
#include "arhq/tensor_file.hpp"

namespace arhq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Verbosity { quiet, info, debug };

Verbosity verbosity_from_env() {
  const char* v = std::getenv("ARHQ_LOG");
  if (!v) return Verbosity::info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return Verbosity::quiet;
  if (s == "debug" || s == "2") return Verbosity::debug;
  return Verbosity::info;
}

int workers_from_env() {
  const char* v = std::getenv("ARHQ_WORKERS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n > 0 ? n : 1;
}

class Log {
 public:
  Log(std::ostream& err, Verbosity level) : err_(err), level_(level) {}
  void info(const std::string& msg) const {
    if (level_ != Verbosity::quiet) err_ << "arhq: " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (level_ == Verbosity::debug) err_ << "arhq: " << msg << '\n';
  }

 private:
  std::ostream& err_;
  Verbosity level_;
};

// Command-line overrides; each mirrors one config key.
struct Overrides {
  std::optional<Index> rank;
  std::optional<double> floor;
  std::optional<std::string> floor_rule;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> methods;
  std::optional<std::string> variants;
  std::optional<std::string> factor_precision;
  std::optional<std::string> layer;
  bool eval_in_sample = false;
};

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  Overrides ov;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void add_common(CLI::App* cmd, CommonArgs& a, bool needs_out = true) {
  cmd->add_option("--config", a.config_path, "JSON config (defaults apply when omitted)");
  auto* out = cmd->add_option("--out", a.out_dir, "Output directory");
  if (needs_out) out->required();
  cmd->add_option("--rank", a.ov.rank, "Low-rank branch rank (config: rank)");
  cmd->add_option("--floor", a.ov.floor, "Eigenvalue floor value (config: floor)");
  cmd->add_option("--floor-rule", a.ov.floor_rule, "relative|absolute (config: floor_rule)");
  cmd->add_option("--alpha", a.ov.alpha, "Smoothing exponent (config: smoothing.alpha)");
  cmd->add_option("--seed", a.ov.seed, "Seed (config: seed)");
  cmd->add_option("--methods", a.ov.methods, "Comma-separated split methods (config: methods)");
  cmd->add_option("--variants", a.ov.variants, "Comma-separated raw,smooth (config: variants)");
  cmd->add_option("--factor-precision", a.ov.factor_precision,
                  "f64|f32|bf16|f16 (config: factor_precision)");
  cmd->add_option("--layer", a.ov.layer, "Layer name (config: layer)");
  cmd->add_flag("--eval-in-sample", a.ov.eval_in_sample,
                "Measure SNR on calibration activations (config: eval_in_sample)");
}

io::RunConfig resolve_config(const CommonArgs& a) {
  json doc = a.config_path.empty() ? json::object() : io::to_json(io::load_config(a.config_path));
  const Overrides& ov = a.ov;
  if (ov.rank) doc["rank"] = *ov.rank;
  if (ov.floor) doc["floor"] = *ov.floor;
  if (ov.floor_rule) doc["floor_rule"] = *ov.floor_rule;
  if (ov.alpha) {
    if (!doc.contains("smoothing") || doc["smoothing"].is_null()) doc["smoothing"] = json::object();
    doc["smoothing"]["alpha"] = *ov.alpha;
  }
  if (ov.seed) doc["seed"] = *ov.seed;
  if (ov.methods) doc["methods"] = split_list(*ov.methods);
  if (ov.variants) doc["variants"] = split_list(*ov.variants);
  if (ov.factor_precision) doc["factor_precision"] = *ov.factor_precision;
  if (ov.layer) doc["layer"] = *ov.layer;
  if (ov.eval_in_sample) doc["eval_in_sample"] = true;
  io::RunConfig cfg = io::parse_config(doc);

  if (cfg.layer.smoothing && !cfg.layer.smoothing->scales_path.empty()) {
    const Matrix s = io::load_tensor(cfg.layer.smoothing->scales_path);
    cfg.layer.smoothing->scales = Eigen::Map<const Vector>(s.data(), s.size());
  }
  return cfg;
}

void write_json(const fs::path& path, const json& doc, const Log& log) {
  io::write_file(path, doc.dump(2) + "\n");
  log.info("wrote " + path.string());
}

void prepare_out(const fs::path& dir, const io::RunConfig& cfg, const Log& log) {
  fs::create_directories(dir);
  write_json(dir / "resolved_config.json", io::to_json(cfg), log);
}

struct LayerData {
  std::string name;
  Matrix w;
  Matrix x_calib;
  Matrix x_eval;
};

struct LayerInputs {
  std::string weight;
  std::string calib;
  std::string eval;
  bool synth = false;
};

void add_layer_inputs(CLI::App* cmd, LayerInputs& in, bool with_eval) {
  cmd->add_option("--weight", in.weight, "Weight tensor (D_out x D_in)");
  cmd->add_option("--calib", in.calib, "Calibration activations (N x D_in)");
  if (with_eval) {
    cmd->add_option("--eval", in.eval, "Held-out evaluation activations (N x D_in)");
    cmd->add_flag("--synth", in.synth, "Generate synthetic layers from the config's synth block");
  }
}

std::vector<LayerData> load_layers(const LayerInputs& in, const io::RunConfig& cfg,
                                   bool need_eval) {
  std::vector<LayerData> layers;
  if (in.synth) {
    if (!in.weight.empty() || !in.calib.empty() || !in.eval.empty()) {
      throw ConfigError("--synth cannot be combined with --weight/--calib/--eval");
    }
    for (Index i = 0; i < cfg.synth_layers; ++i) {
      io::SynthLayer s = io::gen_synthetic(io::synth_for_layer(cfg, i));
      layers.push_back({"synth" + std::to_string(i), std::move(s.w), std::move(s.x_calib),
                        std::move(s.x_eval)});
    }
    return layers;
  }
  if (in.weight.empty() || in.calib.empty()) {
    throw ConfigError("--weight and --calib are required (or use --synth)");
  }
  LayerData d;
  d.name = cfg.layer_name;
  d.w = io::load_tensor(in.weight);
  d.x_calib = io::load_tensor(in.calib);
  if (need_eval) {
    if (in.eval.empty() && !cfg.layer.eval_in_sample) {
      throw ConfigError("--eval is required unless eval_in_sample is set");
    }
    d.x_eval = in.eval.empty() ? d.x_calib : io::load_tensor(in.eval);
  }
  layers.push_back(std::move(d));
  return layers;
}

// ---- split ---------------------------------------------------------------

json split_sidecar(const LayerArtifacts& art, const io::RunConfig& cfg) {
  return json{{"method", std::string(to_string(art.split.method))},
              {"variant", std::string(to_string(art.variant))},
              {"rank", art.split.rank},
              {"d_in", art.weight.cols()},
              {"d_out", art.weight.rows()},
              {"params_added", art.split.params_added()},
              {"floor", art.metric.floor},
              {"n_calib", art.metric.n_rows},
              {"factor_precision", std::string(to_string(cfg.factor_precision))},
              {"act_quantizer", io::to_json(cfg.layer.act_quantizer)},
              {"weight_quantizer", io::to_json(cfg.layer.weight_quantizer)},
              {"smoothed", art.scales.has_value()},
              {"layer", cfg.layer_name},
              {"seed", cfg.layer.seed}};
}

int cmd_split(const CommonArgs& a, const LayerInputs& in, const std::string& method_name,
              const std::string& variant_name, const Log& log) {
  const io::RunConfig cfg = resolve_config(a);
  const SplitMethod method = parse_split_method(method_name);
  const Variant variant = parse_variant(variant_name);
  if (variant == Variant::smooth && !cfg.layer.smoothing) {
    throw ConfigError("--variant smooth requires smoothing to be enabled");
  }
  const std::vector<LayerData> layers = load_layers(in, cfg, false);
  const LayerData& d = layers.front();

  const LayerArtifacts art = run_layer(d.w, d.x_calib, cfg.layer, method, variant);
  const fs::path dir(a.out_dir);
  prepare_out(dir, cfg, log);
  io::save_split(art.split, dir / "split.arhq", cfg.factor_precision);
  log.info("wrote " + (dir / "split.arhq").string());
  io::save_metric(art.metric, dir / "metric.arhq");
  log.info("wrote " + (dir / "metric.arhq").string());
  if (art.scales) {
    io::save_tensor(Matrix(art.scales->s), dir / "scales.tensor");
    log.info("wrote " + (dir / "scales.tensor").string());
  }
  write_json(dir / "split.json", split_sidecar(art, cfg), log);
  return kExitOk;
}

// ---- evaluate ------------------------------------------------------------

int cmd_evaluate(const CommonArgs& a, const std::string& split_dir, const std::string& weight,
                 const std::string& eval, const Log& log) {
  const fs::path sdir(split_dir);
  CommonArgs eff = a;
  if (eff.config_path.empty()) eff.config_path = (sdir / "resolved_config.json").string();
  const io::RunConfig cfg = resolve_config(eff);

  const json sidecar = json::parse(io::read_file(sdir / "split.json"));
  LayerArtifacts art;
  art.weight = io::load_tensor(weight);
  const Matrix x_eval = io::load_tensor(eval);
  art.split = io::load_split(sdir / "split.arhq", parse_split_method(sidecar.at("method").get<std::string>()));
  art.variant = parse_variant(sidecar.at("variant").get<std::string>());
  if (sidecar.at("smoothed").get<bool>()) {
    const Matrix s = io::load_tensor(sdir / "scales.tensor");
    art.scales = explicit_scales(Eigen::Map<const Vector>(s.data(), s.size()));
  }
  require_shape(art.split.w_res, art.weight.rows(), art.weight.cols(), "evaluate: split vs weight");

  const Matrix y_ref = simulate_forward(x_eval, art, cfg.layer, ForwardMode::reference);
  MethodResult base;
  base.method = std::string(kBaselineMethod);
  base.variant = art.variant;
  base.snr_db = snr(y_ref, simulate_forward(x_eval, art, cfg.layer, ForwardMode::baseline_quant));
  MethodResult row;
  row.method = std::string(to_string(art.split.method));
  row.variant = art.variant;
  row.snr_db = snr(y_ref, simulate_forward(x_eval, art, cfg.layer, ForwardMode::dual_branch));
  row.gain_db = snr_gain(row.snr_db, base.snr_db);
  row.params_added = art.split.params_added();
  row.overhead_ratio = static_cast<double>(row.params_added) /
                       static_cast<double>(art.weight.rows() * art.weight.cols());
  if (fs::exists(sdir / "metric.arhq")) {
    const ResidualMetric metric = io::load_metric(sdir / "metric.arhq");
    const Matrix w_s = art.scales ? smooth_weights(art.weight, *art.scales) : art.weight;
    base.objective = (w_s * metric.g_sqrt).squaredNorm();
    row.objective = weighted_objective(w_s, art.split, metric.g_sqrt);
  }

  LayerReport rep;
  rep.layer = sidecar.value("layer", cfg.layer_name);
  rep.seed = cfg.layer.seed;
  rep.rank = art.split.rank;
  rep.d_in = art.weight.cols();
  rep.d_out = art.weight.rows();
  rep.config = cfg.layer;
  rep.rows = {base, row};

  const fs::path dir(a.out_dir);
  prepare_out(dir, cfg, log);
  io::write_report({rep}, dir / "evaluate.csv", io::ReportFormat::csv);
  log.info("wrote " + (dir / "evaluate.csv").string());
  io::write_report({rep}, dir / "evaluate.json", io::ReportFormat::json);
  log.info("wrote " + (dir / "evaluate.json").string());
  return kExitOk;
}

// ---- compare -------------------------------------------------------------

int cmd_compare(const CommonArgs& a, const LayerInputs& in, const Log& log) {
  const io::RunConfig cfg = resolve_config(a);
  const std::vector<LayerData> layers = load_layers(in, cfg, true);
  std::vector<LayerReport> reports(layers.size());
  parallel_for(layers.size(), workers_from_env(), [&](std::size_t i) {
    const LayerData& d = layers[i];
    reports[i] = compare_methods(d.w, d.x_calib, d.x_eval, cfg.layer, d.name);
  });
  const fs::path dir(a.out_dir);
  prepare_out(dir, cfg, log);
  io::write_report(reports, dir / "report.csv", io::ReportFormat::csv);
  log.info("wrote " + (dir / "report.csv").string());
  io::write_report(reports, dir / "report.json", io::ReportFormat::json);
  log.info("wrote " + (dir / "report.json").string());
  return kExitOk;
}

// ---- sweep-rank ----------------------------------------------------------

std::vector<Index> parse_ranks(const std::string& s) {
  std::vector<Index> ranks;
  for (const std::string& item : split_list(s)) {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &pos);
    } catch (const std::exception&) {
      throw ConfigError("--ranks: '" + item + "' is not an integer");
    }
    if (pos != item.size()) throw ConfigError("--ranks: '" + item + "' is not an integer");
    if (v < 1) throw ConfigError("--ranks: rank must be >= 1, got " + item);
    ranks.push_back(static_cast<Index>(v));
  }
  if (ranks.empty()) throw ConfigError("--ranks: no ranks given");
  for (std::size_t i = 1; i < ranks.size(); ++i) {
    if (ranks[i] <= ranks[i - 1]) throw ConfigError("--ranks: ranks must be strictly ascending");
  }
  return ranks;
}

int cmd_sweep_rank(const CommonArgs& a, const LayerInputs& in, const std::string& ranks_arg,
                   const Log& log) {
  const std::vector<Index> ranks = parse_ranks(ranks_arg);
  CommonArgs eff = a;
  eff.ov.rank = ranks.front();
  io::RunConfig cfg = resolve_config(eff);
  std::vector<LayerData> layers = load_layers(in, cfg, true);
  const LayerData& d = layers.front();

  const SweepResult sweep =
      sweep_rank(d.w, d.x_calib, d.x_eval, cfg.layer, ranks, d.name, workers_from_env());

  const fs::path dir(a.out_dir);
  prepare_out(dir, cfg, log);
  std::string table = "rank," + std::string(io::kCsvHeader) + "\n";
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    const fs::path p = dir / ("report_r" + std::to_string(ranks[i]) + ".csv");
    io::write_report({sweep.reports[i]}, p, io::ReportFormat::csv);
    log.info("wrote " + p.string());
    const std::string csv = io::render_csv({sweep.reports[i]});
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);  // header
    while (std::getline(ss, line)) {
      if (line.rfind("average", 0) == 0) continue;
      table += std::to_string(ranks[i]) + "," + line + "\n";
    }
  }
  io::write_file(dir / "sweep.csv", table);
  log.info("wrote " + (dir / "sweep.csv").string());

  std::string spectrum = "variant,index,sigma,tail_energy\n";
  for (const auto& [variant, sigma] : sweep.spectra) {
    for (Index i = 0; i < sigma.size(); ++i) {
      spectrum += std::string(to_string(variant)) + "," + std::to_string(i + 1) + "," +
                  io::format_number(sigma(i), "%.17g") + "," +
                  io::format_number(linalg::tail_energy(sigma, i + 1), "%.17g") + "\n";
    }
  }
  io::write_file(dir / "spectrum.csv", spectrum);
  log.info("wrote " + (dir / "spectrum.csv").string());
  return kExitOk;
}

// ---- gen-synth -----------------------------------------------------------

int cmd_gen_synth(const CommonArgs& a, io::SynthSpec overrides, const std::vector<bool>& given,
                  Index layers_override, const Log& log) {
  io::RunConfig cfg = resolve_config(a);
  io::SynthSpec spec = cfg.synth.value_or(io::SynthSpec{});
  if (given[0]) spec.d_in = overrides.d_in;
  if (given[1]) spec.d_out = overrides.d_out;
  if (given[2]) spec.n_calib = overrides.n_calib;
  if (given[3]) spec.n_eval = overrides.n_eval;
  if (given[4]) spec.weight_decay = overrides.weight_decay;
  if (given[5]) spec.anisotropy = overrides.anisotropy;
  cfg.synth = spec;
  if (layers_override > 0) cfg.synth_layers = layers_override;
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }

  const fs::path dir(a.out_dir);
  prepare_out(dir, cfg, log);
  json info = json::array();
  for (Index i = 0; i < cfg.synth_layers; ++i) {
    const io::SynthSpec s = io::synth_for_layer(cfg, i);
    const io::SynthLayer layer = io::gen_synthetic(s);
    const std::string prefix = cfg.synth_layers == 1 ? "" : "synth" + std::to_string(i) + "_";
    io::save_tensor(layer.w, dir / (prefix + "w.tensor"));
    io::save_tensor(layer.x_calib, dir / (prefix + "x_calib.tensor"));
    io::save_tensor(layer.x_eval, dir / (prefix + "x_eval.tensor"));
    log.info("wrote " + (dir / (prefix + "{w,x_calib,x_eval}.tensor")).string());
    info.push_back(json{{"prefix", prefix},
                        {"seed", s.seed},
                        {"measured_condition", layer.measured_condition}});
  }
  write_json(dir / "synth.json", json{{"layers", info}}, log);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const Log log(err, verbosity_from_env());

  CLI::App app{"Activation-residual-aware low-rank weight splitting for quantized layers", "arhq"};
  app.require_subcommand(1, 1);

  CommonArgs split_args, eval_args, cmp_args, sweep_args, synth_args;
  LayerInputs split_in, cmp_in, sweep_in;
  std::string split_method = "arhq", split_variant = "raw";
  std::string eval_split_dir, eval_weight, eval_x;
  std::string ranks_arg;
  io::SynthSpec synth_ov;
  Index synth_layers = 0;

  CLI::App* split = app.add_subcommand("split", "Compute a low-rank split for one layer");
  add_common(split, split_args);
  add_layer_inputs(split, split_in, false);
  split->add_option("--method", split_method, "Split method (default arhq)");
  split->add_option("--variant", split_variant, "raw|smooth (default raw)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Measure SNR of a saved split");
  add_common(evaluate, eval_args);
  evaluate->add_option("--split-dir", eval_split_dir, "Directory written by `split`")->required();
  evaluate->add_option("--weight", eval_weight, "Original weight tensor")->required();
  evaluate->add_option("--eval", eval_x, "Evaluation activations")->required();

  CLI::App* compare = app.add_subcommand("compare", "Compare split methods by layer SNR");
  add_common(compare, cmp_args);
  add_layer_inputs(compare, cmp_in, true);

  CLI::App* sweep = app.add_subcommand("sweep-rank", "Per-rank reports and scaled spectrum");
  add_common(sweep, sweep_args);
  add_layer_inputs(sweep, sweep_in, true);
  sweep->add_option("--ranks", ranks_arg, "Comma-separated ascending ranks")->required();

  CLI::App* gen = app.add_subcommand("gen-synth", "Write synthetic layer tensors");
  add_common(gen, synth_args);
  auto* o_din = gen->add_option("--d-in", synth_ov.d_in, "Input dimension");
  auto* o_dout = gen->add_option("--d-out", synth_ov.d_out, "Output dimension");
  auto* o_nc = gen->add_option("--n-calib", synth_ov.n_calib, "Calibration rows");
  auto* o_ne = gen->add_option("--n-eval", synth_ov.n_eval, "Evaluation rows");
  auto* o_dec = gen->add_option("--weight-decay", synth_ov.weight_decay, "Singular value decay");
  auto* o_an = gen->add_option("--anisotropy", synth_ov.anisotropy, "Target cond(G_x)");
  gen->add_option("--layers", synth_layers, "Number of layers (seeds seed..seed+layers-1)");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& s : args) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (split->parsed()) return cmd_split(split_args, split_in, split_method, split_variant, log);
    if (evaluate->parsed()) return cmd_evaluate(eval_args, eval_split_dir, eval_weight, eval_x, log);
    if (compare->parsed()) return cmd_compare(cmp_args, cmp_in, log);
    if (sweep->parsed()) return cmd_sweep_rank(sweep_args, sweep_in, ranks_arg, log);
    if (gen->parsed()) {
      const std::vector<bool> given = {o_din->count() > 0, o_dout->count() > 0, o_nc->count() > 0,
                                       o_ne->count() > 0,  o_dec->count() > 0,  o_an->count() > 0};
      return cmd_gen_synth(synth_args, synth_ov, given, synth_layers, log);
    }
  } catch (const ConfigError& e) {
    err << "arhq: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "arhq: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace arhq::cli
