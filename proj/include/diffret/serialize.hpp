#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "diffret/tensor.hpp"

namespace diffret::io {

// All integers and floating-point payloads are encoded little-endian,
// explicitly byte by byte, so files are identical across platforms.

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);  // u32 length prefix

std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);

// Named tensor record: name length u32, name bytes, rank u32, dims u32 each,
// then the payload (f64 for checkpoints, f32 for corpus features).
void write_named_f64(std::ostream& out, const std::string& name, const Tensor& t);
void write_named_f32(std::ostream& out, const std::string& name, const Shape& shape,
                     const std::vector<float>& values);

struct NamedF64 {
  std::string name;
  Tensor tensor;
};
struct NamedF32 {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

NamedF64 read_named_f64(std::istream& in);
NamedF32 read_named_f32(std::istream& in);

// True when the stream is exactly at end-of-file (peeks without consuming).
bool at_eof(std::istream& in);

}  // namespace diffret::io
