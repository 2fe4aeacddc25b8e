#include "uapr/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace uapr {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'U', 'A', 'P', 'R', 'B', 'I', 'N', '\0'};

std::uint64_t fnv1a(const std::string& bytes, std::size_t len) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_string32(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void put_raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
  template <typename T>
  T get() {
    T v;
    take(&v, sizeof v);
    return v;
  }
  std::string get_string(std::uint64_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void take(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) throw FormatError("container truncated at byte " + std::to_string(pos_));
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Container::block(const std::string& name) const {
  for (const auto& [n, t] : blocks) {
    if (n == name) return t;
  }
  throw FormatError("container of kind '" + kind + "' has no block '" + name + "'");
}

void write_container(const std::filesystem::path& path, const Container& c) {
  Writer w;
  w.put_raw(kMagic, sizeof kMagic);
  w.put(kContainerVersion);
  w.put_string32(c.kind);
  const std::string header = c.header.dump();
  w.put(static_cast<std::uint64_t>(header.size()));
  w.put_raw(header.data(), header.size());
  w.put(static_cast<std::uint32_t>(c.blocks.size()));
  for (const auto& [name, t] : c.blocks) {
    w.put_string32(name);
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape().dims()) w.put(static_cast<std::uint64_t>(d));
    w.put_raw(t.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
  }
  w.put(fnv1a(w.buffer(), w.buffer().size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

Container read_container(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 4 + 8 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError(path.string() + " is not a uapr container (bad magic or truncated)");
  }
  Reader r(buf, buf.size() - 8);
  char magic[8];
  r.take(magic, sizeof magic);
  const auto version = r.get<std::uint32_t>();
  if (version != kContainerVersion) {
    throw FormatError(path.string() + ": container version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kContainerVersion) + ")");
  }
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, buf.data() + buf.size() - 8, 8);
  if (stored_sum != fnv1a(buf, buf.size() - 8)) {
    throw FormatError(path.string() + ": checksum mismatch (corrupt or truncated, version " +
                      std::to_string(version) + ")");
  }

  Container c;
  c.kind = r.get_string(r.get<std::uint32_t>());
  if (!expected_kind.empty() && c.kind != expected_kind) {
    throw FormatError(path.string() + ": expected a '" + expected_kind + "' container, found '" +
                      c.kind + "'");
  }
  const std::string header = r.get_string(r.get<std::uint64_t>());
  try {
    c.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t b = 0; b < count; ++b) {
    std::string name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError(path.string() + ": implausible rank in block " + name);
    std::vector<Index> dims;
    for (std::uint32_t i = 0; i < rank; ++i) dims.push_back(static_cast<Index>(r.get<std::uint64_t>()));
    Tensor t{Shape(dims)};
    r.take(t.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
    c.blocks.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos() != buf.size() - 8) throw FormatError(path.string() + ": trailing bytes in container");
  return c;
}

}  // namespace uapr
