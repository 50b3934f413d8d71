// SPDX-License-Identifier: Apache-2.0
#include "davam/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace davam {

namespace {

constexpr char kMagic[] = "DAVAMCKPT";
constexpr std::size_t kMagicLen = 9;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw CorruptCheckpointError("checkpoint: truncated container");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(i)]))
           << (8 * i);
    pos += 4;
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const NamedTensor& Checkpoint::require(const std::string& name) const {
  const NamedTensor* t = find(name);
  if (!t) throw MissingTensorError("checkpoint: missing tensor " + name);
  return *t;
}

void Checkpoint::remove_group(TensorGroup group) {
  std::vector<NamedTensor> kept;
  for (auto& t : tensors)
    if (t.group != group) kept.push_back(std::move(t));
  tensors = std::move(kept);
}

namespace {

std::string serialize(const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, kMagicLen);
  put_u32(out, ckpt.version);
  put_str(out, ckpt.model_kind);
  out.push_back(ckpt.has_prior ? 1 : 0);
  put_str(out, ckpt.config_text);
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_str(out, t.name);
    out.push_back(0);  // dtype tag: f32
    out.push_back(static_cast<char>(t.group));
    put_u32(out, static_cast<std::uint32_t>(t.data.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.data.cols()));
  }
  for (const auto& t : ckpt.tensors) {
    const char* bytes = reinterpret_cast<const char*>(t.data.data());
    out.append(bytes, sizeof(float) * static_cast<std::size_t>(t.data.size()));
  }
  return out;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::string bytes = serialize(*this);
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("checkpoint: short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("checkpoint: cannot rename into place: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCheckpointError("checkpoint: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string buf = ss.str();

  if (buf.size() < kMagicLen || std::memcmp(buf.data(), kMagic, kMagicLen) != 0)
    throw CorruptCheckpointError("checkpoint: bad magic in " + path);
  Reader r{buf, kMagicLen};

  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kVersion)
    throw CheckpointVersionError("checkpoint: unsupported version " +
                                 std::to_string(ckpt.version));
  ckpt.model_kind = r.str();
  ckpt.has_prior = r.u8() != 0;
  ckpt.config_text = r.str();
  std::uint32_t count = r.u32();
  struct Head {
    std::string name;
    std::uint8_t group;
    std::uint32_t rows, cols;
  };
  std::vector<Head> heads;
  for (std::uint32_t i = 0; i < count; ++i) {
    Head h;
    h.name = r.str();
    std::uint8_t dtype = r.u8();
    if (dtype != 0)
      throw CorruptCheckpointError("checkpoint: unknown dtype tag");
    h.group = r.u8();
    if (h.group > 4) throw CorruptCheckpointError("checkpoint: bad group tag");
    h.rows = r.u32();
    h.cols = r.u32();
    heads.push_back(std::move(h));
  }
  for (const auto& h : heads) {
    NamedTensor t;
    t.name = h.name;
    t.group = static_cast<TensorGroup>(h.group);
    t.data.resize(h.rows, h.cols);
    std::size_t bytes = sizeof(float) * static_cast<std::size_t>(t.data.size());
    r.need(bytes);
    std::memcpy(t.data.data(), buf.data() + r.pos, bytes);
    r.pos += bytes;
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.pos != buf.size())
    throw CorruptCheckpointError("checkpoint: trailing bytes in " + path);
  return ckpt;
}

std::uint64_t Checkpoint::content_hash() const {
  std::string bytes = serialize(*this);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace davam
