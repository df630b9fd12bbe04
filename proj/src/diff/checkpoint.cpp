#include "macn/diff/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace macn::diff {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'C', 'N', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const uint32_t n = read_pod<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

std::ifstream open_and_check(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_pod<uint32_t>(is);
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  return is;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& tag) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write(kMagic, 8);
  write_pod<uint32_t>(os, 1);
  write_string(os, tag);
  write_pod<uint64_t>(os, store.count());
  for (const Param& p : store) {
    write_string(os, p.name);
    write_pod<uint32_t>(os, static_cast<uint32_t>(p.shape.size()));
    for (int d : p.shape) write_pod<int64_t>(os, d);
    os.write(reinterpret_cast<const char*>(p.value.data()),
             static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::string load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream is = open_and_check(path);
  const std::string tag = read_string(is);
  const uint64_t count = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(is);
    const uint32_t ndim = read_pod<uint32_t>(is);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d)
      shape[d] = static_cast<int>(read_pod<int64_t>(is));
    Param* p = store.find(name);
    if (!p) throw std::runtime_error("checkpoint: unknown param " + name);
    if (p->shape != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
  }
  return tag;
}

std::string checkpoint_tag(const std::string& path) {
  std::ifstream is = open_and_check(path);
  return read_string(is);
}

}  // namespace macn::diff
