#include "spdectl/checkpoint.hpp"

#include "spdectl/binary_io.hpp"
#include "spdectl/hash.hpp"

namespace spdectl {

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.section.size() != 4) throw std::invalid_argument("checkpoint section tag must be 4 bytes");
  ByteWriter w;
  w.raw("SPDM", 4);
  w.u32(Checkpoint::version);
  w.raw(ckpt.section.data(), 4);
  w.u64(ckpt.spec_hash);
  w.str(ckpt.metadata);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& p : ckpt.tensors) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.dim()));
    for (auto e : p.value.shape()) w.u64(e);
    for (double v : p.value.values()) w.f64(v);
  }
  const auto digest = Fnv1a().bytes(w.bytes().data(), w.size()).digest();
  w.u64(digest);
  return w.bytes();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  if (bytes.size() < 8) throw FormatError(source + ": file too short for an SPDM container");
  const std::size_t body = bytes.size() - 8;
  ByteReader trailer(bytes.data() + body, 8, source);
  if (trailer.u64() != Fnv1a().bytes(bytes.data(), body).digest()) {
    throw FormatError(source + ": checksum mismatch (file corrupted or truncated)");
  }
  ByteReader r(bytes.data(), body, source);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "SPDM") throw FormatError(source + ": bad magic, not an SPDM container");
  const auto version = r.u32();
  if (version != Checkpoint::version) {
    throw FormatError(source + ": unsupported SPDM version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.section.resize(4);
  r.raw(ckpt.section.data(), 4);
  ckpt.spec_hash = r.u64();
  ckpt.metadata = r.str();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    nn::Parameter p;
    p.name = r.str(4096);
    const auto rank = r.u32();
    if (rank > 8) throw FormatError(source + ": tensor '" + p.name + "' has implausible rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = r.u64();
      if (e == 0 || e > (std::size_t{1} << 32)) throw FormatError(source + ": tensor '" + p.name + "' bad extent");
      n *= e;
    }
    p.value = Tensor(shape, r.f64s(n));
    ckpt.tensors.push_back(std::move(p));
  }
  if (r.remaining() != 0) throw FormatError(source + ": trailing bytes after tensor table");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path), path); }

void restore_params(nn::ParamStore& store, const Checkpoint& ckpt) {
  nn::ParamStore src;
  for (const auto& p : ckpt.tensors) src.add(p.name, p.value);
  store.load(src);
}

}  // namespace spdectl
