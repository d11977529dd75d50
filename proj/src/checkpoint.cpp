#include "memadapter/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "memadapter/error.hpp"
#include "memadapter/rng.hpp"

namespace memadapter {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'M', 'A', 'L', 'N', 'C', 'K'};

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

void put_float(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put(out, bits);
}

class Cursor {
 public:
  Cursor(const std::string& bytes, std::size_t begin, std::size_t end)
      : bytes_(bytes), pos_(begin), end_(end) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (end_ - pos_ < n) throw ValidationError(std::string("checkpoint truncated in ") + what);
  }
  const std::string& bytes_;
  std::size_t pos_, end_;
};

std::string encode_payload(const Tensor& t) {
  std::uint64_t count = 1;
  for (std::uint64_t d : t.shape) count *= d;
  if (count != t.data.size()) throw ValidationError("tensor shape does not match its data");
  std::string out;
  put<std::uint64_t>(out, t.shape.size());
  for (std::uint64_t d : t.shape) put<std::uint64_t>(out, d);
  for (float f : t.data) put_float(out, f);
  return out;
}

}  // namespace

std::string encode_checkpoint(const NamedTensors& sections) {
  std::set<std::string> names;
  for (const auto& [name, t] : sections) {
    if (!names.insert(name).second) throw ValidationError("duplicate section " + name);
  }
  std::vector<std::string> payloads;
  std::size_t table = 8 + 4 + 4;
  for (const auto& [name, t] : sections) {
    payloads.push_back(encode_payload(t));
    table += 4 + name.size() + 8 + 8;
  }
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sections.size()));
  std::uint64_t offset = table;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const std::string& name = sections[i].first;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, offset);
    put<std::uint64_t>(out, payloads[i].size());
    offset += payloads[i].size();
  }
  for (const std::string& p : payloads) out += p;
  put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

NamedTensors decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 4 + 8) throw ValidationError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ValidationError("checkpoint has bad magic");
  }
  const std::size_t body = bytes.size() - 8;
  Cursor header(bytes, sizeof kMagic, body);
  const auto version = header.get<std::uint32_t>("header");
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  Cursor tail(bytes, body, bytes.size());
  if (tail.get<std::uint64_t>("checksum") != fnv1a64(std::string_view(bytes).substr(0, body))) {
    throw ValidationError("checkpoint checksum mismatch");
  }
  const auto count = header.get<std::uint32_t>("header");
  NamedTensors out;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = header.get<std::uint32_t>("section table");
    std::string name = header.take(len, "section table");
    const auto offset = header.get<std::uint64_t>("section table");
    const auto length = header.get<std::uint64_t>("section table");
    if (offset > body || length > body - offset) {
      throw ValidationError("checkpoint section " + name + " is truncated");
    }
    if (!names.insert(name).second) throw ValidationError("duplicate section " + name);
    Cursor payload(bytes, offset, offset + length);
    Tensor t;
    const auto rank = payload.get<std::uint64_t>("section payload");
    if (rank > payload.remaining() / 8) throw ValidationError("checkpoint section " + name + " is truncated");
    std::uint64_t elements = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      t.shape.push_back(payload.get<std::uint64_t>("section payload"));
      elements *= t.shape.back();
    }
    if (payload.remaining() != elements * 4) {
      throw ValidationError("checkpoint section " + name + " shape does not match its length");
    }
    t.data.resize(elements);
    for (float& f : t.data) {
      const auto bits = payload.get<std::uint32_t>("section payload");
      std::memcpy(&f, &bits, sizeof f);
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void save_checkpoint(const NamedTensors& sections, const std::string& path) {
  const std::string bytes = encode_checkpoint(sections);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write checkpoint " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

Tensor to_tensor(const Mat& m) {
  Tensor t{{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<float>(m(r, c)));
  return t;
}

Tensor to_tensor(const Vec& v) {
  Tensor t{{static_cast<std::uint64_t>(v.size())}, {}};
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data.push_back(static_cast<float>(v(i)));
  return t;
}

Mat to_matrix(const Tensor& t) {
  if (t.shape.size() != 2) throw ValidationError("expected a rank-2 tensor");
  Mat m(static_cast<Eigen::Index>(t.shape[0]), static_cast<Eigen::Index>(t.shape[1]));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.data[k++];
  return m;
}

Vec to_vector(const Tensor& t) {
  if (t.shape.size() != 1) throw ValidationError("expected a rank-1 tensor");
  Vec v(static_cast<Eigen::Index>(t.shape[0]));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = t.data[static_cast<std::size_t>(i)];
  return v;
}

const Tensor& find_section(const NamedTensors& sections, const std::string& name) {
  for (const auto& [n, t] : sections) {
    if (n == name) return t;
  }
  throw ValidationError("checkpoint has no section " + name);
}

NamedTensors to_sections(const AlignmentModule& module) {
  return {{"align.w1", to_tensor(module.w1)},
          {"align.b1", to_tensor(module.b1)},
          {"align.w2", to_tensor(module.w2)},
          {"align.b2", to_tensor(module.b2)},
          {"align.activation",
           Tensor{{1}, {module.activation == Activation::tanh ? 0.0f : 1.0f}}}};
}

AlignmentModule alignment_from_sections(const NamedTensors& sections) {
  AlignmentModule m;
  m.w1 = to_matrix(find_section(sections, "align.w1"));
  m.b1 = to_vector(find_section(sections, "align.b1"));
  m.w2 = to_matrix(find_section(sections, "align.w2"));
  m.b2 = to_vector(find_section(sections, "align.b2"));
  const Tensor& act = find_section(sections, "align.activation");
  if (act.data.size() != 1) throw ValidationError("malformed activation section");
  m.activation = act.data[0] == 0.0f ? Activation::tanh : Activation::identity;
  m.check_shapes();
  return m;
}

NamedTensors to_sections(const RetrieverModel& model) {
  NamedTensors out;
  for (const auto& [name, m] : model.matrices()) out.emplace_back("retriever." + name, to_tensor(*m));
  for (const auto& [name, v] : model.vectors()) out.emplace_back("retriever." + name, to_tensor(*v));
  return out;
}

RetrieverModel retriever_from_sections(const NamedTensors& sections) {
  RetrieverModel model;
  for (const auto& [name, m] : model.matrices()) *m = to_matrix(find_section(sections, "retriever." + name));
  for (const auto& [name, v] : model.vectors()) *v = to_vector(find_section(sections, "retriever." + name));
  model.check_shapes();
  return model;
}

}  // namespace memadapter
