#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "knock/cnn.hpp"
#include "knock/container.hpp"
#include "knock/error.hpp"

namespace knock {

namespace {

constexpr char kMagic[8] = {'K', 'N', 'O', 'C', 'K', 'B', 'I', 'N'};

template <class T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <class T>
  T get(const char* section) {
    need(sizeof(T), section);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  void need(std::size_t n, const char* section) const {
    if (bytes_.size() - pos_ < n)
      throw LoadError(path_ + ": file truncated in section '" + section + "'");
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const char* data() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_container(const std::filesystem::path& path, const Container& c) {
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kModelFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.kind));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.header.size()));
  for (auto w : c.header) put_le<std::uint32_t>(out, w);
  put_le<std::uint64_t>(out, c.payload.size());
  for (double d : c.payload) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(d));
  write_file_atomic(path, out);
}

Container read_container(const std::filesystem::path& path, ContainerKind expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open model file '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  Reader r(std::move(bytes), name);

  r.need(sizeof kMagic, "magic");
  if (std::memcmp(r.data(), kMagic, sizeof kMagic) != 0)
    throw LoadError(name + ": not a model file (bad magic)");
  r.skip(sizeof kMagic);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kModelFormatVersion)
    throw LoadError(name + ": format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kModelFormatVersion) + ")");
  const auto kind = r.get<std::uint32_t>("kind");
  if (kind != static_cast<std::uint32_t>(expected))
    throw LoadError(name + ": file holds object kind " + std::to_string(kind) + ", expected " +
                    std::to_string(static_cast<std::uint32_t>(expected)));

  Container c;
  c.kind = expected;
  const auto h = r.get<std::uint32_t>("header");
  r.need(std::size_t{4} * h, "header");
  c.header.resize(h);
  for (auto& w : c.header) w = r.get<std::uint32_t>("header");

  const auto n = r.get<std::uint64_t>("payload count");
  if (n > r.remaining() / 8) throw LoadError(name + ": file truncated in section 'weights'");
  c.payload.resize(n);
  for (auto& d : c.payload) d = std::bit_cast<double>(r.get<std::uint64_t>("weights"));
  if (r.remaining() != 0) throw LoadError(name + ": trailing bytes after 'weights'");
  return c;
}

// KnockNet header words: mode, base kernel, input length, then
// (in_channels, out_channels, kernel) for conv1..3 and (in, out) for fc1..2.

void save_model(const KnockNet& net, const std::filesystem::path& path) {
  const auto& t = net.topology();
  Container c;
  c.kind = ContainerKind::knock_net;
  c.header = {static_cast<std::uint32_t>(t.mode), static_cast<std::uint32_t>(t.base_kernel),
              static_cast<std::uint32_t>(t.input_length)};
  for (const auto& l : t.conv) {
    c.header.push_back(static_cast<std::uint32_t>(l.shape.in_channels));
    c.header.push_back(static_cast<std::uint32_t>(l.shape.out_channels));
    c.header.push_back(static_cast<std::uint32_t>(l.shape.kernel));
  }
  for (const auto& l : t.dense) {
    c.header.push_back(static_cast<std::uint32_t>(l.shape.in));
    c.header.push_back(static_cast<std::uint32_t>(l.shape.out));
  }
  c.payload.assign(net.parameters().begin(), net.parameters().end());
  write_container(path, c);
}

KnockNet load_model(const std::filesystem::path& path) {
  const auto c = read_container(path, ContainerKind::knock_net);
  const std::string name = path.string();
  if (c.header.size() != 16)
    throw LoadError(name + ": header has " + std::to_string(c.header.size()) +
                    " words, expected 16");
  const auto mode_tag = c.header[0];
  if (mode_tag != static_cast<std::uint32_t>(ConvMode::shared_kernel) &&
      mode_tag != static_cast<std::uint32_t>(ConvMode::cross_channel))
    throw UnsupportedMode(name + ": unsupported convolution mode tag " + std::to_string(mode_tag));

  Topology t;
  try {
    t = Topology::make(static_cast<int>(c.header[1]), c.header[2], static_cast<ConvMode>(mode_tag));
  } catch (const ShapeError& e) {
    throw LoadError(name + ": header describes an invalid topology: " + e.what());
  }
  std::size_t w = 3;
  for (const auto& l : t.conv) {
    if (c.header[w] != l.shape.in_channels || c.header[w + 1] != l.shape.out_channels ||
        c.header[w + 2] != l.shape.kernel)
      throw LoadError(name + ": layer dims in header do not match the topology");
    w += 3;
  }
  for (const auto& l : t.dense) {
    if (c.header[w] != l.shape.in || c.header[w + 1] != l.shape.out)
      throw LoadError(name + ": layer dims in header do not match the topology");
    w += 2;
  }
  KnockNet net(t);
  if (c.payload.size() != net.parameters().size())
    throw LoadError(name + ": weights section holds " + std::to_string(c.payload.size()) +
                    " values, topology needs " + std::to_string(net.parameters().size()));
  std::copy(c.payload.begin(), c.payload.end(), net.parameters().begin());
  return net;
}

}  // namespace knock
