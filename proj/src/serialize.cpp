#include "diffret/serialize.hpp"

#include <bit>
#include <istream>
#include <ostream>

#include "diffret/error.hpp"

namespace diffret::io {

namespace {

void write_le(std::ostream& out, std::uint64_t v, int bytes) {
  char buf[8];
  for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, bytes);
  if (!out) throw IoError("write failed");
}

std::uint64_t read_le(std::istream& in, int bytes) {
  char buf[8];
  in.read(buf, bytes);
  if (in.gcount() != bytes) throw IoError("unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  }
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v, 4); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v, 8); }
void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v), 4); }
void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v), 8); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) throw IoError("write failed");
}

std::uint32_t read_u32(std::istream& in) { return static_cast<std::uint32_t>(read_le(in, 4)); }
std::uint64_t read_u64(std::istream& in) { return read_le(in, 8); }
float read_f32(std::istream& in) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(read_le(in, 4)));
}
double read_f64(std::istream& in) { return std::bit_cast<double>(read_le(in, 8)); }

std::string read_string(std::istream& in) {
  const std::uint32_t len = read_u32(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (in.gcount() != static_cast<std::streamsize>(len)) throw IoError("unexpected end of file");
  return s;
}

namespace {

void write_header(std::ostream& out, const std::string& name, const Shape& shape) {
  write_string(out, name);
  write_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) write_u32(out, static_cast<std::uint32_t>(d));
}

Shape read_header_shape(std::istream& in) {
  const std::uint32_t rank = read_u32(in);
  if (rank == 0 || rank > 8) throw IoError("tensor rank out of range");
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = read_u32(in);
    if (shape[i] == 0) throw IoError("tensor dim is zero");
  }
  return shape;
}

std::size_t shape_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

void write_named_f64(std::ostream& out, const std::string& name, const Tensor& t) {
  write_header(out, name, t.shape());
  for (double v : t.values()) write_f64(out, v);
}

void write_named_f32(std::ostream& out, const std::string& name, const Shape& shape,
                     const std::vector<float>& values) {
  if (shape_count(shape) != values.size()) throw ContractError("named f32 shape mismatch");
  write_header(out, name, shape);
  for (float v : values) write_f32(out, v);
}

NamedF64 read_named_f64(std::istream& in) {
  NamedF64 rec{read_string(in), Tensor::scalar(0.0)};
  Shape shape = read_header_shape(in);
  std::vector<double> values(shape_count(shape));
  for (double& v : values) v = read_f64(in);
  rec.tensor = Tensor(std::move(shape), std::move(values));
  return rec;
}

NamedF32 read_named_f32(std::istream& in) {
  NamedF32 rec;
  rec.name = read_string(in);
  rec.shape = read_header_shape(in);
  rec.values.resize(shape_count(rec.shape));
  for (float& v : rec.values) v = read_f32(in);
  return rec;
}

bool at_eof(std::istream& in) {
  return in.peek() == std::istream::traits_type::eof();
}

}  // namespace diffret::io
