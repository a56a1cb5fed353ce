#include "arhq/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "arhq/error.hpp"

namespace arhq::io {

namespace {

template <class T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFFu));
  }
}

class Reader {
 public:
  Reader(std::string_view bytes, std::size_t& offset) : bytes_(bytes), offset_(offset) {}

  template <class T>
  T get_le(std::string_view what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[offset_ + i])) << (8 * i);
    }
    offset_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n, std::string_view what) {
    need(n, what);
    std::string_view s = bytes_.substr(offset_, n);
    offset_ += n;
    return s;
  }

  std::size_t offset() const { return offset_; }

  [[noreturn]] void fail(std::string_view msg) const {
    throw FormatError(std::string(msg) + " at byte " + std::to_string(offset_));
  }

 private:
  void need(std::size_t n, std::string_view what) const {
    if (bytes_.size() < offset_ || bytes_.size() - offset_ < n) {
      fail("truncated " + std::string(what) + " (need " + std::to_string(n) + " bytes, have " +
           std::to_string(bytes_.size() > offset_ ? bytes_.size() - offset_ : 0) + ")");
    }
  }

  std::string_view bytes_;
  std::size_t& offset_;
};

std::string dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

}  // namespace

std::string encode_tensor(const Matrix& m, Dtype dtype) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw DimensionError("encode_tensor: empty tensors (" + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ") are not allowed");
  }
  require_finite(m, "encode_tensor");
  std::string out(kTensorMagic);
  out.push_back(static_cast<char>(dtype));
  out.push_back(static_cast<char>(2));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  const std::size_t width = dtype == Dtype::f32 ? 4 : 8;
  out.reserve(out.size() + static_cast<std::size_t>(m.size()) * width);
  for (Index i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];  // row-major storage order
    if (dtype == Dtype::f32) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Matrix decode_tensor(std::string_view bytes, std::size_t& offset, Dtype* dtype_out) {
  Reader r(bytes, offset);
  if (r.take(kTensorMagic.size(), "magic") != kTensorMagic) {
    offset -= kTensorMagic.size();
    r.fail("bad tensor magic");
  }
  const auto code = r.get_le<std::uint8_t>("dtype");
  if (code > 1) {
    offset -= 1;
    r.fail("unknown dtype code " + std::to_string(code));
  }
  const auto dtype = static_cast<Dtype>(code);
  if (dtype_out) *dtype_out = dtype;
  const auto ndim = r.get_le<std::uint8_t>("ndim");
  if (ndim != 1 && ndim != 2) {
    offset -= 1;
    r.fail("unsupported ndim " + std::to_string(ndim));
  }
  std::uint64_t shape[2] = {1, 1};
  for (int d = 0; d < ndim; ++d) shape[d] = r.get_le<std::uint64_t>("shape");
  // A 1-D tensor loads as a column.
  const std::uint64_t rows = shape[0];
  const std::uint64_t cols = ndim == 2 ? shape[1] : 1;
  if (rows == 0 || cols == 0) {
    throw DimensionError("decode_tensor: empty tensor shape at byte " + std::to_string(offset));
  }
  const std::uint64_t width = dtype == Dtype::f32 ? 4 : 8;
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 40;
  if (rows > kLimit || cols > kLimit || rows * cols > kLimit / width) {
    r.fail("tensor shape too large");
  }
  const std::string_view payload =
      r.take(static_cast<std::size_t>(rows * cols * width), dtype_name(dtype) + " payload");

  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows * cols; ++i) {
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < width; ++b) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[i * width + b])) << (8 * b);
    }
    m.data()[i] = dtype == Dtype::f32
                      ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(v)))
                      : std::bit_cast<double>(v);
  }
  require_finite(m, "decode_tensor");
  return m;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

void save_tensor(const Matrix& m, const std::filesystem::path& path, Dtype dtype) {
  write_file(path, encode_tensor(m, dtype));
}

Matrix load_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t offset = 0;
  try {
    Matrix m = decode_tensor(bytes, offset);
    if (offset != bytes.size()) {
      throw FormatError("trailing data at byte " + std::to_string(offset));
    }
    return m;
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string encode_archive(const std::vector<NamedTensor>& tensors) {
  std::string out(kArchiveMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    if (t.name.empty() || t.name.size() > 0xFFFF) {
      throw FormatError("archive tensor names must be 1..65535 bytes");
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    out += encode_tensor(t.value, t.dtype);
  }
  return out;
}

std::vector<NamedTensor> decode_archive(std::string_view bytes) {
  std::size_t offset = 0;
  Reader r(bytes, offset);
  if (r.take(kArchiveMagic.size(), "magic") != kArchiveMagic) {
    offset = 0;
    r.fail("bad archive magic");
  }
  const auto count = r.get_le<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get_le<std::uint16_t>("name length");
    NamedTensor t;
    t.name = std::string(r.take(len, "name"));
    t.value = decode_tensor(bytes, offset, &t.dtype);
    out.push_back(std::move(t));
  }
  if (offset != bytes.size()) r.fail("trailing data");
  return out;
}

void save_archive(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path) {
  write_file(path, encode_archive(tensors));
}

std::vector<NamedTensor> load_archive(const std::filesystem::path& path) {
  try {
    return decode_archive(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

const Matrix& find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name) {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw FormatError("archive has no tensor named '" + std::string(name) + "'");
}

void save_split(const LowRankSplit& split, const std::filesystem::path& path,
                FactorPrecision precision) {
  const Dtype dtype = precision == FactorPrecision::f64 ? Dtype::f64 : Dtype::f32;
  save_archive({{"w_res", split.w_res, Dtype::f64},
                {"a", round_to_precision(split.a, precision), dtype},
                {"b", round_to_precision(split.b, precision), dtype}},
               path);
}

LowRankSplit load_split(const std::filesystem::path& path, SplitMethod method) {
  const std::vector<NamedTensor> tensors = load_archive(path);
  LowRankSplit split;
  split.w_res = find_tensor(tensors, "w_res");
  split.a = find_tensor(tensors, "a");
  split.b = find_tensor(tensors, "b");
  split.rank = split.a.cols();
  split.method = method;
  if (split.b.cols() != split.rank || split.a.rows() != split.w_res.cols() ||
      split.b.rows() != split.w_res.rows()) {
    throw DimensionError(path.string() + ": split factor shapes are inconsistent");
  }
  return split;
}

void save_metric(const ResidualMetric& metric, const std::filesystem::path& path) {
  Matrix header(1, 2);
  header << metric.floor, static_cast<double>(metric.n_rows);
  save_archive({{"header", header, Dtype::f64},
                {"g", metric.g, Dtype::f64},
                {"g_sqrt", metric.g_sqrt, Dtype::f64},
                {"g_invsqrt", metric.g_invsqrt, Dtype::f64},
                {"eigenvalues", metric.eigenvalues, Dtype::f64}},
               path);
}

ResidualMetric load_metric(const std::filesystem::path& path) {
  const std::vector<NamedTensor> tensors = load_archive(path);
  const Matrix& header = find_tensor(tensors, "header");
  if (header.size() != 2) throw FormatError(path.string() + ": metric header must hold 2 values");
  ResidualMetric m;
  m.floor = header.data()[0];
  m.n_rows = static_cast<Index>(header.data()[1]);
  m.g = find_tensor(tensors, "g");
  m.g_sqrt = find_tensor(tensors, "g_sqrt");
  m.g_invsqrt = find_tensor(tensors, "g_invsqrt");
  m.eigenvalues = find_tensor(tensors, "eigenvalues");
  return m;
}

}  // namespace arhq::io
