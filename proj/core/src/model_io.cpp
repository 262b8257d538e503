// Model container: magic string, format version, tag-space descriptor,
// hash seed, dense transition/start/stop blocks, sorted sparse emission
// table. Little-endian, bit-exact round trip.

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tagunify/common.hpp"
#include "tagunify/emissions.hpp"

namespace tagunify {

namespace {

constexpr char kMagic[] = "TAGUNIFY-MODEL\n";
constexpr size_t kMagicLen = sizeof(kMagic) - 1;

static_assert(std::endian::native == std::endian::little,
              "model container assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("model file truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  uint32_t n = get<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("model file truncated");
  return s;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_doubles(std::istream& in, std::vector<double>& v, size_t n) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("model file truncated");
}

void write_model(std::ostream& out, const Model& m) {
  out.write(kMagic, static_cast<std::streamsize>(kMagicLen));
  put<uint32_t>(out, m.format_version);
  put<uint8_t>(out, static_cast<uint8_t>(m.kind));
  put_string(out, m.tag_set.id);
  put<uint32_t>(out, static_cast<uint32_t>(m.tag_set.types.size()));
  for (const auto& t : m.tag_set.types) put_string(out, t);
  put_string(out, m.hierarchy_id);
  put<uint64_t>(out, m.hash_seed);

  put<uint32_t>(out, static_cast<uint32_t>(m.L()));
  put_doubles(out, m.w.transition);
  put_doubles(out, m.w.start);
  put_doubles(out, m.w.stop);

  std::vector<uint32_t> features;
  features.reserve(m.w.emission.size());
  for (const auto& [f, row] : m.w.emission) features.push_back(f);
  std::sort(features.begin(), features.end());
  put<uint64_t>(out, features.size());
  for (uint32_t f : features) {
    put<uint32_t>(out, f);
    put_doubles(out, m.w.emission.at(f));
  }
}

}  // namespace

void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  write_model(out, m);
  if (!out) throw std::runtime_error("failed writing model file: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);

  char magic[kMagicLen];
  in.read(magic, static_cast<std::streamsize>(kMagicLen));
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw std::runtime_error(path + " is not a model file (bad magic)");

  Model m;
  m.format_version = get<uint32_t>(in);
  if (m.format_version != 1)
    throw std::runtime_error(path + ": unsupported model format version " +
                             std::to_string(m.format_version));
  m.kind = static_cast<ModelKind>(get<uint8_t>(in));
  std::string id = get_string(in);
  uint32_t n_types = get<uint32_t>(in);
  std::vector<EntityType> types;
  types.reserve(n_types);
  for (uint32_t i = 0; i < n_types; ++i) types.push_back(get_string(in));
  m.tag_set = TagSet(id, types);
  m.hierarchy_id = get_string(in);
  m.hash_seed = get<uint64_t>(in);

  uint32_t L = get<uint32_t>(in);
  if (L != static_cast<uint32_t>(m.tag_set.label_count()))
    throw std::runtime_error(path + ": label dimension inconsistent with tag set");
  m.w.init(static_cast<int>(L));
  get_doubles(in, m.w.transition, static_cast<size_t>(L) * L);
  get_doubles(in, m.w.start, L);
  get_doubles(in, m.w.stop, L);

  uint64_t rows = get<uint64_t>(in);
  for (uint64_t r = 0; r < rows; ++r) {
    uint32_t f = get<uint32_t>(in);
    get_doubles(in, m.w.emission_row(f), L);
  }
  return m;
}

uint64_t model_hash(const Model& m) {
  std::ostringstream buf(std::ios::binary);
  write_model(buf, m);
  return fnv1a64(buf.str());
}

}  // namespace tagunify
