#include "liverfat/rvf.hpp"

#include <bit>
#include <cstring>

#include "liverfat/error.hpp"
#include "liverfat/util.hpp"

namespace liverfat::rvf {
namespace {

static_assert(std::endian::native == std::endian::little,
              "RVF encoding assumes a little-endian host");

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void f32(float v) { raw(&v, 4); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  float f32() { float v; raw(&v, 4); return v; }
  void raw(void* p, std::size_t n) {
    if (pos_ + n > in_.size()) throw ValidationError("truncated RVF data");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const std::vector<Volume3>& channels) {
  require(!channels.empty(), "RVF needs at least one channel");
  const Grid& g = channels.front().grid();
  for (const auto& c : channels)
    require(c.grid() == g, "RVF channels must share one grid");
  Writer w;
  w.raw("RVF1", 4);
  w.u32(static_cast<std::uint32_t>(g.dims.x));
  w.u32(static_cast<std::uint32_t>(g.dims.y));
  w.u32(static_cast<std::uint32_t>(g.dims.z));
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(g.spacing[a]));
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(g.origin[a]));
  w.u32(static_cast<std::uint32_t>(channels.size()));
  for (const auto& c : channels) w.raw(c.data().data(), c.size() * sizeof(float));
  return std::move(w.out);
}

std::vector<Volume3> decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "RVF1", 4) != 0) throw ValidationError("not an RVF1 file");
  Grid g;
  g.dims.x = static_cast<int>(r.u32());
  g.dims.y = static_cast<int>(r.u32());
  g.dims.z = static_cast<int>(r.u32());
  for (int a = 0; a < 3; ++a) g.spacing[a] = r.f32();
  for (int a = 0; a < 3; ++a) g.origin[a] = r.f32();
  g.validate();
  const std::uint32_t n = r.u32();
  require(n >= 1, "RVF file has no channels");
  std::vector<Volume3> out;
  for (std::uint32_t c = 0; c < n; ++c) {
    std::vector<float> data(g.count());
    r.raw(data.data(), data.size() * sizeof(float));
    out.emplace_back(g, std::move(data));
  }
  require(r.done(), "trailing bytes after RVF payload");
  return out;
}

void write(const std::filesystem::path& path, const std::vector<Volume3>& channels) {
  write_bytes(path, encode(channels));
}

std::vector<Volume3> read(const std::filesystem::path& path) {
  return decode(read_bytes(path));
}

}  // namespace liverfat::rvf
