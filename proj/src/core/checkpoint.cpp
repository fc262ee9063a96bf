#include "auv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <system_error>

namespace auv {
namespace {

constexpr char kMagic[4] = {'A', 'U', 'V', 'N'};
constexpr std::uint32_t kKindF32 = 0;
constexpr std::uint32_t kKindText = 1;

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::vector<char>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const std::vector<char>& b) : bytes_(b) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(const std::string& name, Tensor<float> tensor) {
  for (Entry& e : entries_) {
    if (e.name == name) {
      e = Entry{name, false, std::move(tensor), {}};
      return;
    }
  }
  entries_.push_back(Entry{name, false, std::move(tensor), {}});
}

void Checkpoint::put_text(const std::string& name, std::string text) {
  for (Entry& e : entries_) {
    if (e.name == name) {
      e = Entry{name, true, {}, std::move(text)};
      return;
    }
  }
  entries_.push_back(Entry{name, true, {}, std::move(text)});
}

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

bool Checkpoint::has(const std::string& name) const {
  const Entry* e = find(name);
  return e && !e->is_text;
}

bool Checkpoint::has_text(const std::string& name) const {
  const Entry* e = find(name);
  return e && e->is_text;
}

const Tensor<float>& Checkpoint::get(const std::string& name) const {
  const Entry* e = find(name);
  if (!e || e->is_text) throw DataError("checkpoint: missing tensor entry '" + name + "'");
  return e->tensor;
}

const Tensor<float>& Checkpoint::get(const std::string& name, const Shape& expected) const {
  const Tensor<float>& t = get(name);
  if (t.shape() != expected) {
    throw DataError("checkpoint: entry '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                    shape_str(expected));
  }
  return t;
}

const std::string& Checkpoint::text(const std::string& name) const {
  const Entry* e = find(name);
  if (!e || !e->is_text) throw DataError("checkpoint: missing text entry '" + name + "'");
  return e->text;
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  for (const Entry& e : entries_) out.push_back(e.name);
  return out;
}

std::vector<char> Checkpoint::serialize() const {
  std::vector<char> out(kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const Entry& e : entries_) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    if (e.is_text) {
      put_u32(out, kKindText);
      put_u32(out, 1);
      put_u32(out, static_cast<std::uint32_t>(e.text.size()));
      out.insert(out.end(), e.text.begin(), e.text.end());
    } else {
      put_u32(out, kKindF32);
      put_u32(out, static_cast<std::uint32_t>(e.tensor.rank()));
      for (int d : e.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
      for (float f : e.tensor.values()) put_f32(out, f);
    }
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("checkpoint: bad magic (expected \"AUVN\")");
  }
  Reader r(bytes);
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const std::uint32_t kind = r.u32();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw DataError("checkpoint: entry '" + name + "' has implausible rank " + std::to_string(rank));
    Shape shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t e = r.u32();
      if (e > (1u << 30)) throw DataError("checkpoint: entry '" + name + "' extent too large");
      shape.push_back(static_cast<int>(e));
      n *= e;
    }
    if (kind == kKindText) {
      if (rank != 1) throw DataError("checkpoint: text entry '" + name + "' must have rank 1");
      ck.put_text(name, r.str(n));
    } else if (kind == kKindF32) {
      r.need(n * 4);
      std::vector<float> data(n);
      for (std::size_t k = 0; k < n; ++k) data[k] = r.f32();
      ck.put(name, Tensor<float>(std::move(shape), std::move(data)));
    } else {
      throw DataError("checkpoint: entry '" + name + "' has unknown kind " + std::to_string(kind));
    }
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes after last entry");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<char>(text.begin(), text.end()));
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace auv
