#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "arhq/decompose.hpp"
#include "arhq/matrix.hpp"
#include "arhq/residual.hpp"

namespace arhq::io {

// Single tensor record, all integers little-endian:
//   "ARHQT1" | dtype u8 (0 = f32, 1 = f64) | ndim u8 | ndim x u64 shape | payload
// Archives prefix a name table entry to every record:
//   "ARHQA1" | count u32 | count x (name_len u16 | name | tensor record)
enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

inline constexpr std::string_view kTensorMagic = "ARHQT1";
inline constexpr std::string_view kArchiveMagic = "ARHQA1";

std::string encode_tensor(const Matrix& m, Dtype dtype = Dtype::f64);

// Decodes one record starting at bytes[offset]; advances offset past it.
// Errors carry the absolute byte offset of the problem.
Matrix decode_tensor(std::string_view bytes, std::size_t& offset, Dtype* dtype_out = nullptr);

void save_tensor(const Matrix& m, const std::filesystem::path& path, Dtype dtype = Dtype::f64);
Matrix load_tensor(const std::filesystem::path& path);

struct NamedTensor {
  std::string name;
  Matrix value;
  Dtype dtype = Dtype::f64;
};

std::string encode_archive(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_archive(std::string_view bytes);

void save_archive(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path);
std::vector<NamedTensor> load_archive(const std::filesystem::path& path);

// Throws FormatError if `name` is missing.
const Matrix& find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name);

// Split archive: tensors w_res, a, b. Factors are rounded to `precision`
// first; f64 factors are stored as f64, everything else as f32.
void save_split(const LowRankSplit& split, const std::filesystem::path& path,
                FactorPrecision precision = FactorPrecision::f64);
LowRankSplit load_split(const std::filesystem::path& path, SplitMethod method);

// Metric archive: g, g_sqrt, g_invsqrt, eigenvalues and a 2-entry header
// holding (floor, n_rows).
void save_metric(const ResidualMetric& metric, const std::filesystem::path& path);
ResidualMetric load_metric(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace arhq::io
