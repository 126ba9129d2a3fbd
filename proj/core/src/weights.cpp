#include "banknet/weights.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace bnk {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'K', 'W'};

std::uint32_t crc_table_entry(std::uint32_t i) {
  std::uint32_t c = i;
  for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
  return c;
}

}  // namespace

std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) t[i] = crc_table_entry(i);
    return t;
  }();
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t n) : data_(data), n_(n) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return n_ - pos_; }

  const std::uint8_t* take(std::size_t count) {
    if (remaining() < count) {
      throw WeightError(WeightError::Kind::truncated, "weight file structure overruns its size");
    }
    const std::uint8_t* p = data_ + pos_;
    pos_ += count;
    return p;
  }

  std::uint8_t u8() { return *take(1); }
  std::uint16_t u16() {
    const std::uint8_t* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  const std::uint8_t* data_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw WeightError(WeightError::Kind::open_failed, "cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

// Checks checksum/magic/version and returns a reader over the payload
// (everything between the header and the trailing CRC).
Reader open_payload(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  if (bytes.size() < 16) {
    throw WeightError(WeightError::Kind::bad_checksum,
                      path.string() + " is too short to carry a checksum");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw WeightError(WeightError::Kind::bad_magic, path.string() + " is not a BNKW weight file");
  }
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored = static_cast<std::uint32_t>(bytes[body]) |
                               (static_cast<std::uint32_t>(bytes[body + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[body + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[body + 3]) << 24);
  const std::uint32_t computed = crc32_ieee(bytes.data(), body);
  if (stored != computed) {
    throw WeightError(WeightError::Kind::bad_checksum,
                      path.string() + " checksum mismatch (file corrupt or truncated)");
  }
  Reader r(bytes.data(), body);
  r.take(4);  // magic
  const std::uint32_t version = r.u32();
  if (version != kWeightVersion) {
    throw WeightError(WeightError::Kind::bad_version,
                      path.string() + " has unsupported version " + std::to_string(version));
  }
  return r;
}

}  // namespace

void save_weights(const ParamStore& params, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kWeightVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const std::string& name : params.names()) {
    const Tensor& t = params.at(name);
    if (name.size() > 0xffff) throw Error("parameter name too long: " + name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size(); ++i) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(t[i])));
    }
  }
  put_u32(out, crc32_ieee(out.data(), out.size()));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw WeightError(WeightError::Kind::open_failed, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw WeightError(WeightError::Kind::open_failed, "failed writing " + path.string());
}

ParamStore load_weights(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  Reader r = open_payload(bytes, path);
  const std::uint32_t count = r.u32();
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    const std::uint8_t* name_bytes = r.take(name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const int rank = r.u8();
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int d = 0; d < rank; ++d) shape[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
    Tensor t(shape);
    for (std::size_t v = 0; v < t.size(); ++v) t[v] = static_cast<double>(r.f32());
    store.add(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) {
    throw WeightError(WeightError::Kind::truncated,
                      path.string() + " has trailing bytes after the last tensor");
  }
  return store;
}

ParamStore load_weights(const std::filesystem::path& path, const ModelSpec& expect) {
  ParamStore store = load_weights(path);
  const auto decls = expect.param_decls();
  if (decls.size() != store.size()) {
    throw WeightError(WeightError::Kind::shape_mismatch,
                      path.string() + " holds " + std::to_string(store.size()) +
                          " tensors, model declares " + std::to_string(decls.size()));
  }
  for (const auto& [name, shape] : decls) {
    if (!store.has(name)) {
      throw WeightError(WeightError::Kind::shape_mismatch,
                        path.string() + " is missing parameter '" + name + "'");
    }
    if (store.at(name).shape() != shape) {
      throw WeightError(WeightError::Kind::shape_mismatch,
                        "parameter '" + name + "' has shape " + store.at(name).shape_str() +
                            ", model wants " + shape_str(shape));
    }
  }
  return store;
}

std::vector<WeightEntry> peek_weights(const std::filesystem::path& path) {
  const ParamStore store = load_weights(path);
  std::vector<WeightEntry> out;
  out.reserve(store.size());
  for (const std::string& name : store.names()) {
    out.push_back({name, store.at(name).shape()});
  }
  return out;
}

}  // namespace bnk
