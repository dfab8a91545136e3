// SPDX-License-Identifier: Apache-2.0
#include "skycast/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "skycast/errors.hpp"

namespace skycast {

namespace {

constexpr char kMagic[8] = {'S', 'K', 'Y', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint64_t kMaxRank = 8;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw DataError("checkpoint: truncated container");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedArray& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw ConfigError("checkpoint: missing array '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

void Checkpoint::add(std::string name, const Tensor& t) {
  arrays.push_back({std::move(name), t.shape(), {t.data().begin(), t.data().end()}});
}

void Checkpoint::add(std::string name, Shape shape, std::vector<double> data) {
  arrays.push_back({std::move(name), std::move(shape), std::move(data)});
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof kMagic);
  const std::string header = ckpt.header.dump();
  put_u64(out, header.size());
  out += header;
  put_u64(out, ckpt.arrays.size());
  for (const auto& a : ckpt.arrays) {
    if (shape_numel(a.shape) != a.data.size()) {
      throw InvalidShape(fmt::format("checkpoint: array '{}' size does not match its shape", a.name));
    }
    put_u64(out, a.name.size());
    out += a.name;
    put_u64(out, a.shape.size());
    for (auto d : a.shape) put_u64(out, d);
    for (double v : a.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("cannot write checkpoint '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
  Reader r(std::string(std::istreambuf_iterator<char>(f), {}));
  if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw DataError("'" + path.string() + "' is not a skycast checkpoint");
  }
  Checkpoint ckpt;
  const std::uint64_t header_len = r.u64();
  try {
    ckpt.header = nlohmann::json::parse(r.str(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str(r.u64());
    const std::uint64_t rank = r.u64();
    if (rank > kMaxRank) throw DataError(fmt::format("checkpoint: array '{}' has rank {}", a.name, rank));
    std::uint64_t n = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      a.shape.push_back(r.u64());
      n *= a.shape.back();
    }
    a.data.resize(n);
    for (auto& v : a.data) v = r.f64();
    ckpt.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  return ckpt;
}

void load_into(const Checkpoint& ckpt, const std::string& name, const Tensor& target) {
  const NamedArray& a = ckpt.array(name);
  if (a.shape != target.shape()) {
    throw ConfigError(fmt::format("checkpoint: array '{}' has shape {}, model expects {}", name,
                                  shape_string(a.shape), shape_string(target.shape())));
  }
  std::memcpy(target.mutable_data().data(), a.data.data(), a.data.size() * sizeof(double));
}

}  // namespace skycast
