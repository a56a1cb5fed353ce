#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "arhq/config.hpp"
#include "arhq/error.hpp"
#include "arhq/report.hpp"
#include "arhq/tensor_file.hpp"
#include "oracles.hpp"

using namespace arhq;
using namespace arhq::io;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("arhq_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(TensorFile, SmallLayoutIsExact) {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const std::string bytes = encode_tensor(m);
  ASSERT_EQ(bytes.size(), 72u);  // 6 magic + 2 + 16 shape + 48 payload
  EXPECT_EQ(bytes.substr(0, 6), "ARHQT1");
  EXPECT_EQ(bytes[6], 1);
  EXPECT_EQ(bytes[7], 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3);
  std::size_t offset = 0;
  Dtype dt = Dtype::f32;
  EXPECT_TRUE(decode_tensor(bytes, offset, &dt) == m);
  EXPECT_EQ(offset, bytes.size());
  EXPECT_EQ(dt, Dtype::f64);
}

TEST(TensorFile, RoundTripsBitExactly) {
  std::mt19937_64 rng(41);
  const Matrix m = oracle::random_matrix(100, 50, rng, 1e-3);
  const fs::path dir = temp_dir("roundtrip");
  save_tensor(m, dir / "m.tensor");
  EXPECT_TRUE(load_tensor(dir / "m.tensor") == m);
  save_tensor(m, dir / "f.tensor", Dtype::f32);
  const Matrix f = load_tensor(dir / "f.tensor");
  EXPECT_TRUE(f == m.cast<float>().cast<double>());
  EXPECT_EQ(fs::file_size(dir / "f.tensor"), 6u + 2 + 16 + 5000 * 4);
}

TEST(TensorFile, Errors) {
  Matrix m(1, 2);
  m << 1.0, 2.0;
  std::string bytes = encode_tensor(m);
  std::size_t offset = 0;
  EXPECT_THROW(decode_tensor(bytes.substr(0, 20), offset, nullptr), FormatError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  offset = 0;
  EXPECT_THROW(decode_tensor(bad_magic, offset), FormatError);
  std::string bad_dtype = bytes;
  bad_dtype[6] = 7;
  offset = 0;
  EXPECT_THROW(decode_tensor(bad_dtype, offset), FormatError);
  std::string bad_ndim = bytes;
  bad_ndim[7] = 3;
  offset = 0;
  EXPECT_THROW(decode_tensor(bad_ndim, offset), FormatError);

  EXPECT_THROW(encode_tensor(Matrix(0, 3)), DimensionError);
  Matrix nan = m;
  nan(0, 1) = std::nan("");
  EXPECT_THROW(encode_tensor(nan), DataError);

  const fs::path dir = temp_dir("errors");
  write_file(dir / "trail.tensor", bytes + "x");
  EXPECT_THROW(load_tensor(dir / "trail.tensor"), FormatError);
  try {
    load_tensor(dir / "missing.tensor");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing.tensor"), std::string::npos);
  }
}

TEST(TensorFile, FormatErrorsCarryOffset) {
  std::string bytes = encode_tensor(Matrix::Ones(1, 1));
  bytes[6] = 9;
  std::size_t offset = 0;
  try {
    decode_tensor(bytes, offset);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte 6"), std::string::npos) << e.what();
  }
}

TEST(Archive, RoundTripAndLookup) {
  std::mt19937_64 rng(42);
  const std::vector<NamedTensor> ts = {{"alpha", oracle::random_matrix(2, 3, rng), Dtype::f64},
                                       {"beta", oracle::random_matrix(4, 1, rng), Dtype::f32}};
  const std::vector<NamedTensor> back = decode_archive(encode_archive(ts));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "alpha");
  EXPECT_TRUE(back[0].value == ts[0].value);
  EXPECT_EQ(back[1].dtype, Dtype::f32);
  EXPECT_TRUE(find_tensor(back, "beta") == ts[1].value.cast<float>().cast<double>());
  EXPECT_THROW(find_tensor(back, "gamma"), FormatError);
  EXPECT_THROW(encode_archive({{"", Matrix::Ones(1, 1), Dtype::f64}}), FormatError);
  std::string bytes = encode_archive(ts);
  EXPECT_THROW(decode_archive(bytes.substr(0, bytes.size() - 1)), FormatError);
}

TEST(Archive, SplitAndMetric) {
  std::mt19937_64 rng(43);
  const Matrix w = oracle::random_matrix(6, 5, rng);
  const LowRankSplit split = svd_split(w, 2);
  const fs::path dir = temp_dir("split");
  save_split(split, dir / "s64.arhq");
  const LowRankSplit back = load_split(dir / "s64.arhq", SplitMethod::svd_plain);
  EXPECT_TRUE(back.a == split.a);
  EXPECT_TRUE(back.b == split.b);
  EXPECT_TRUE(back.w_res == split.w_res);
  EXPECT_EQ(back.rank, 2);

  save_split(split, dir / "s16.arhq", FactorPrecision::bf16);
  const LowRankSplit half = load_split(dir / "s16.arhq", SplitMethod::svd_plain);
  EXPECT_TRUE(half.a == round_to_precision(split.a, FactorPrecision::bf16));

  const ResidualMetric metric = make_metric(oracle::random_spd(5, 10.0, rng), 1e-6, 99);
  save_metric(metric, dir / "metric.arhq");
  const ResidualMetric m2 = load_metric(dir / "metric.arhq");
  EXPECT_TRUE(m2.g == metric.g);
  EXPECT_TRUE(m2.g_invsqrt == metric.g_invsqrt);
  EXPECT_EQ(m2.floor, metric.floor);
  EXPECT_EQ(m2.n_rows, 99);
}

TEST(Config, DefaultsFromEmptyDocument) {
  const RunConfig cfg = parse_config(json::object());
  EXPECT_TRUE(cfg == RunConfig{});
  EXPECT_EQ(cfg.layer.rank, 128);
  EXPECT_EQ(cfg.layer.methods.size(), 4u);
  EXPECT_FALSE(cfg.synth.has_value());
}

TEST(Config, ParsesEverything) {
  const json doc = json::parse(R"({
    "rank": 8, "floor": 1e-4, "floor_rule": "absolute",
    "act_quantizer": {"family": "uniform_symmetric", "bits": 8, "granularity": "per_tensor"},
    "weight_quantizer": {"family": "block_fp4", "block_size": 32},
    "smoothing": {"alpha": 0.25},
    "methods": ["arhq", "svd"], "variants": ["smooth"], "seed": 9,
    "eval_in_sample": true, "layer": "blk.0.q", "factor_precision": "bf16",
    "synth": {"d_in": 16, "d_out": 8, "layers": 3}
  })");
  const RunConfig cfg = parse_config(doc);
  EXPECT_EQ(cfg.layer.rank, 8);
  EXPECT_EQ(cfg.layer.floor.kind, FloorRule::Kind::absolute);
  EXPECT_EQ(cfg.layer.floor.min_abs, 0.0);
  EXPECT_EQ(cfg.layer.act_quantizer.bits, 8);
  EXPECT_EQ(cfg.layer.act_quantizer.granularity, Granularity::per_tensor);
  EXPECT_EQ(cfg.layer.weight_quantizer.granularity, Granularity::per_block);
  EXPECT_EQ(cfg.layer.weight_quantizer.block_size, 32);
  EXPECT_EQ(cfg.layer.smoothing->alpha, 0.25);
  EXPECT_EQ(cfg.layer.methods[1], SplitMethod::svd_plain);
  EXPECT_EQ(cfg.layer.variants.size(), 1u);
  EXPECT_TRUE(cfg.layer.eval_in_sample);
  EXPECT_EQ(cfg.layer_name, "blk.0.q");
  EXPECT_EQ(cfg.factor_precision, FactorPrecision::bf16);
  ASSERT_TRUE(cfg.synth.has_value());
  EXPECT_EQ(cfg.synth->seed, 9u);
  EXPECT_EQ(cfg.synth_layers, 3);
  EXPECT_EQ(synth_for_layer(cfg, 2).seed, 11u);
}

TEST(Config, ResolvedJsonRoundTrips) {
  const json doc = json::parse(R"({"rank": 3, "smoothing": null, "seed": 4,
    "act_quantizer": {"family": "uniform_symmetric", "clip": 2.5},
    "synth": {"d_in": 12}})");
  const RunConfig cfg = parse_config(doc);
  EXPECT_EQ(cfg.layer.variants, std::vector<Variant>{Variant::raw});
  const json resolved = to_json(cfg);
  EXPECT_TRUE(parse_config(resolved) == cfg);
  EXPECT_EQ(to_json(parse_config(resolved)).dump(), resolved.dump());
}

TEST(Config, ErrorsNameTheKey) {
  const auto message = [](const char* text) -> std::string {
    try {
      parse_config(json::parse(text));
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "no error";
  };
  EXPECT_NE(message(R"({"rnak": 3})").find("config.rnak"), std::string::npos);
  EXPECT_NE(message(R"({"rank": 0})").find("config.rank"), std::string::npos);
  EXPECT_NE(message(R"({"rank": "x"})").find("config.rank"), std::string::npos);
  EXPECT_NE(message(R"({"act_quantizer": {"family": "uniform_symmetric", "bits": 1}})")
                .find("config.act_quantizer"),
            std::string::npos);
  EXPECT_NE(message(R"({"act_quantizer": {"bits": 4}})").find("config.act_quantizer.family"),
            std::string::npos);
  EXPECT_NE(message(R"({"methods": ["arhq", "magic"]})").find("config.methods[1]"),
            std::string::npos);
  EXPECT_NE(message(R"({"smoothing": {"alpha": 2}})").find("config.smoothing.alpha"),
            std::string::npos);
  EXPECT_NE(message(R"({"smoothing": null, "variants": ["smooth"]})"), "no error");
  EXPECT_NE(message(R"({"floor_rule": "magic"})").find("config.floor_rule"), std::string::npos);
  EXPECT_NE(message(R"({"seed": -1})").find("config.seed"), std::string::npos);
  EXPECT_NE(message(R"({"synth": {"d_in": 0}})"), "no error");
  EXPECT_NE(message(R"([1, 2])"), "no error");
}

TEST(Config, LoadFromFile) {
  const fs::path dir = temp_dir("config");
  write_file(dir / "c.json", R"({"rank": 5})");
  EXPECT_EQ(load_config(dir / "c.json").layer.rank, 5);
  write_file(dir / "bad.json", "{rank: ");
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "none.json"), ConfigError);
}

namespace {

LayerReport fake_report(const std::string& name, std::uint64_t seed, double arhq_snr) {
  LayerReport rep;
  rep.layer = name;
  rep.seed = seed;
  rep.rank = 2;
  rep.d_in = 4;
  rep.d_out = 4;
  rep.config.variants = {Variant::raw};
  MethodResult base;
  base.method = "baseline";
  base.snr_db = 10.0;
  MethodResult arhq;
  arhq.method = "arhq";
  arhq.snr_db = arhq_snr;
  arhq.gain_db = snr_gain(arhq_snr, 10.0);
  arhq.objective = 0.125;
  arhq.params_added = 16;
  rep.rows = {base, arhq};
  return rep;
}

}  // namespace

TEST(Report, CsvLayout) {
  const std::string csv = render_csv({fake_report("l0", 3, 12.5), fake_report("l1", 3, 14.5)});
  const std::string expected =
      "layer,method,variant,snr_db,gain_db,objective,params_added,seed\n"
      "l0,baseline,raw,10.000000,+0.000000,0,0,3\n"
      "l0,arhq,raw,12.500000,+2.500000,0.125,16,3\n"
      "l1,baseline,raw,10.000000,+0.000000,0,0,3\n"
      "l1,arhq,raw,14.500000,+4.500000,0.125,16,3\n"
      "average,baseline,raw,10.000000,+0.000000,0,0,3\n"
      "average,arhq,raw,13.500000,+3.500000,0.125,16,3\n";
  EXPECT_EQ(csv, expected);
}

TEST(Report, InfiniteRowsExcludedFromMeans) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<AggregateRow> agg =
      aggregate({fake_report("l0", 1, inf), fake_report("l1", 2, 12.0)});
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_EQ(agg[1].excluded_inf, 1u);
  EXPECT_EQ(agg[1].snr_db, 12.0);
  EXPECT_EQ(agg[1].seed, "mixed");
  const std::string csv = render_csv({fake_report("l0", 1, inf), fake_report("l1", 2, 12.0)});
  EXPECT_NE(csv.find("l0,arhq,raw,inf,inf,"), std::string::npos) << csv;
  EXPECT_NE(csv.find("average[excluded_inf=1],arhq"), std::string::npos) << csv;
}

TEST(Report, JsonShape) {
  const json j = render_json({fake_report("l0", 3, 12.5)});
  EXPECT_EQ(j["format"], "arhq-report-v1");
  EXPECT_EQ(j["layers"][0]["rows"][1]["method"], "arhq");
  EXPECT_EQ(j["layers"][0]["config"]["rank"], 128);
  EXPECT_EQ(j["aggregate"].size(), 2u);
  EXPECT_THROW(render_json({}), ParameterError);
}

TEST(Report, FormatNumber) {
  EXPECT_EQ(format_number(std::numeric_limits<double>::infinity(), "%.3f"), "inf");
  EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity(), "%.3f"), "-inf");
  EXPECT_EQ(format_number(std::nan(""), "%.3f"), "nan");
  EXPECT_EQ(format_number(1.5, "%.3f"), "1.500");
}

TEST(Config, MinimalBlockFp4Config) {
  const RunConfig cfg =
      parse_config(json::parse(R"({"rank": 128, "act_quantizer": {"family": "block_fp4"}})"));
  EXPECT_EQ(cfg.layer.act_quantizer.family, QuantFamily::block_fp4);
  EXPECT_EQ(cfg.layer.act_quantizer.granularity, Granularity::per_block);
  EXPECT_EQ(cfg.layer.act_quantizer.block_size, 16);
  EXPECT_EQ(cfg.layer.smoothing->alpha, 0.5);
  EXPECT_EQ(cfg.layer.floor.kind, FloorRule::Kind::relative);
  EXPECT_EQ(cfg.layer.floor.value, 1e-6);
}

TEST(Config, ReportSnapshotReparses) {
  RunConfig cfg = parse_config(json::parse(R"({"rank": 6, "floor": 1e-3, "seed": 12,
    "weight_quantizer": {"family": "block_fp4", "block_size": 8},
    "smoothing": {"alpha": 0.3}, "methods": ["outlier_absorb", "arhq"]})"));
  LayerReport rep;
  rep.layer = "l";
  rep.config = cfg.layer;
  rep.rows.push_back(MethodResult{});
  rep.rows.back().method = "baseline";
  const json snapshot = render_json({rep})["layers"][0]["config"];
  EXPECT_TRUE(parse_config(snapshot).layer == cfg.layer);
}

TEST(Report, SingleRowGetsEqualAggregate) {
  LayerReport rep = fake_report("only", 4, 12.0);
  rep.rows.resize(1);
  const std::string csv = render_csv({rep});
  EXPECT_EQ(csv,
            "layer,method,variant,snr_db,gain_db,objective,params_added,seed\n"
            "only,baseline,raw,10.000000,+0.000000,0,0,4\n"
            "average,baseline,raw,10.000000,+0.000000,0,0,4\n");
}

TEST(Report, AggregateIsMeanOfDataRows) {
  std::vector<LayerReport> reps;
  const double snrs[] = {11.25, 17.5, 9.125, 14.0};
  for (int k = 0; k < 4; ++k) reps.push_back(fake_report("l" + std::to_string(k), 1, snrs[k]));
  const std::vector<AggregateRow> agg = aggregate(reps);
  EXPECT_DOUBLE_EQ(agg[1].snr_db, (11.25 + 17.5 + 9.125 + 14.0) / 4.0);
  EXPECT_DOUBLE_EQ(agg[1].gain_db, (1.25 + 7.5 - 0.875 + 4.0) / 4.0);
  EXPECT_EQ(agg[1].n_layers, 4u);
  EXPECT_EQ(agg[1].seed, "1");
  // Recompute from the rendered CSV rows.
  std::stringstream ss(render_csv(reps));
  std::string line;
  double sum = 0.0;
  while (std::getline(ss, line)) {
    if (line.rfind("l", 0) == 0 && line.find(",arhq,") != std::string::npos) {
      sum += std::stod(line.substr(line.find(",raw,") + 5));
    }
  }
  EXPECT_DOUBLE_EQ(sum / 4.0, agg[1].snr_db);
}
