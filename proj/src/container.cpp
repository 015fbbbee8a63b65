#include "remembra/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace remembra {

namespace {

constexpr char kMagic[4] = {'R', 'M', 'B', 'R'};

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  const uint64_t v = std::bit_cast<uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  uint8_t u8() { return static_cast<uint8_t>(byte()); }
  uint16_t u16() { return static_cast<uint16_t>(byte()) | static_cast<uint16_t>(byte()) << 8; }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte()) << (8 * i);
    return std::bit_cast<double>(v);
  }
  void expect_magic() {
    for (char m : kMagic) {
      if (byte() != static_cast<uint8_t>(m))
        throw std::runtime_error(path_ + ": not a RMBR container");
    }
  }
  void expect_end() {
    if (pos_ != bytes_.size())
      throw std::runtime_error(path_ + ": trailing bytes after last entry");
  }

 private:
  uint8_t byte() {
    if (pos_ >= bytes_.size()) throw std::runtime_error(path_ + ": truncated container");
    return static_cast<uint8_t>(bytes_[pos_++]);
  }
  const std::string& bytes_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void write_container(const std::string& path, std::span<const ContainerEntry> entries) {
  std::string out;
  out.append(kMagic, 4);
  put_u16(out, kContainerVersion);
  if (entries.size() > 0xffff) throw std::invalid_argument("container: too many entries");
  put_u16(out, static_cast<uint16_t>(entries.size()));
  for (const ContainerEntry& e : entries) {
    out.push_back(static_cast<char>(e.kind));
    const Shape& s = e.tensor.shape();
    if (s.size() > 0xff) throw std::invalid_argument("container: rank too large");
    out.push_back(static_cast<char>(s.size()));
    for (int d : s) put_u32(out, static_cast<uint32_t>(d));
    for (int64_t i = 0; i < e.tensor.size(); ++i) put_f64(out, e.tensor[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("container: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("container: write failed for " + path);
}

std::vector<ContainerEntry> read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("container: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(bytes, path);
  r.expect_magic();
  const uint16_t version = r.u16();
  if (version != kContainerVersion)
    throw std::runtime_error(path + ": unsupported container version " + std::to_string(version));
  const uint16_t count = r.u16();
  std::vector<ContainerEntry> entries;
  entries.reserve(count);
  for (uint16_t e = 0; e < count; ++e) {
    ContainerEntry entry;
    entry.kind = r.u8();
    const uint8_t rank = r.u8();
    Shape shape(rank);
    for (uint8_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(r.u32());
    std::vector<double> data(static_cast<size_t>(shape_size(shape)));
    for (double& v : data) v = r.f64();
    entry.tensor = Tensor(std::move(shape), std::move(data));
    entries.push_back(std::move(entry));
  }
  r.expect_end();
  return entries;
}

}  // namespace remembra
