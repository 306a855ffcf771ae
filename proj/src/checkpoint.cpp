#include "pidaudit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "pidaudit/error.hpp"

namespace pidaudit {
namespace {

constexpr char kMagic[8] = {'P', 'I', 'D', 'A', 'U', 'D', 'I', 'T'};

std::uint64_t fnv1a(const std::vector<unsigned char>& bytes, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  void array(std::string_view name, const std::vector<std::size_t>& shape, std::span<const double> values) {
    str(name);
    u32(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) u32(static_cast<std::uint32_t>(d));
    for (double v : values) f32(v);
  }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& buf, std::size_t end, std::string file)
      : buf_(buf), end_(end), file_(std::move(file)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_), buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("checkpoint " + file_ + ": " + what);
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > end_) fail("truncated");
  }
  const std::vector<unsigned char>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string file_;
};

struct StoredArray {
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

StoredArray read_array(Reader& r) {
  StoredArray a;
  const auto rank = r.u32();
  if (rank > 8) r.fail("implausible array rank");
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    a.shape.push_back(r.u32());
    n *= a.shape.back();
  }
  if (n > (std::size_t{1} << 32)) r.fail("implausible array size");
  a.values.resize(n);
  for (auto& v : a.values) v = r.f32();
  return a;
}

}  // namespace

std::string serialize_model_config(const ModelConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "embed_dim=" << c.embed_dim << "\nheads=" << c.heads << "\nlayers=" << c.layers << "\ncontext=" << c.context
      << "\ninput_dim=" << c.input_dim << "\nout_bins=" << c.out_bins << "\ndropout=" << c.dropout
      << "\nffn_enabled=" << (c.ffn_enabled ? 1 : 0) << "\nffn_mult=" << c.ffn_mult << "\nrope_base=" << c.rope_base
      << "\n";
  return out.str();
}

ModelConfig parse_model_config(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("model config missing '") + key + "'");
    return it->second;
  };
  ModelConfig c;
  try {
    c.embed_dim = std::stoi(get("embed_dim"));
    c.heads = std::stoi(get("heads"));
    c.layers = std::stoi(get("layers"));
    c.context = std::stoi(get("context"));
    c.input_dim = std::stoi(get("input_dim"));
    c.out_bins = std::stoi(get("out_bins"));
    c.dropout = std::stod(get("dropout"));
    c.ffn_enabled = std::stoi(get("ffn_enabled")) != 0;
    c.ffn_mult = std::stoi(get("ffn_mult"));
    c.rope_base = std::stod(get("rope_base"));
  } catch (const std::logic_error&) {
    throw DataError("model config has a malformed value");
  }
  return c;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const AdamState* optimizer) {
  Writer w;
  w.bytes(std::string_view(kMagic, sizeof kMagic));
  w.u32(kCheckpointVersion);
  w.str(serialize_model_config(model.config()));
  w.u64(model.seed());
  const auto params = model.params();
  w.u32(static_cast<std::uint32_t>(params.size() + 2));
  for (const auto& p : params) w.array(p.name, p.value.shape(), p.value.data());
  w.array("input.center", {model.input_center.size()}, model.input_center);
  w.array("input.scale", {model.input_scale.size()}, model.input_scale);
  w.u32(optimizer ? 1 : 0);
  if (optimizer) {
    w.u64(static_cast<std::uint64_t>(optimizer->step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.array(params[i].name + ".m", params[i].value.shape(), optimizer->m[i]);
      w.array(params[i].name + ".v", params[i].value.shape(), optimizer->v[i]);
    }
  }
  auto& buf = w.buffer();
  const std::uint64_t sum = fnv1a(buf, buf.size());
  w.u64(sum);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string file = path.string();
  if (buf.size() < sizeof kMagic + 4 + 8 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("checkpoint " + file + ": not a checkpoint file (bad magic)");
  }
  const std::size_t body = buf.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(buf[body + static_cast<std::size_t>(i)]) << (8 * i);
  if (stored != fnv1a(buf, body)) throw DataError("checkpoint " + file + ": checksum mismatch (file corrupted)");

  Reader r(buf, body, file);
  r.u64();  // magic, already checked
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  ModelConfig cfg;
  try {
    cfg = parse_model_config(r.str());
    cfg.validate();
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
  const auto seed = r.u64();
  Model model(cfg, seed);
  const auto count = r.u32();
  std::map<std::string, StoredArray> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    arrays.emplace(std::move(name), read_array(r));
  }
  for (auto& p : model.params()) {
    auto it = arrays.find(p.name);
    if (it == arrays.end()) r.fail("missing array '" + p.name + "'");
    if (it->second.shape != p.value.shape()) r.fail("shape mismatch for '" + p.name + "'");
    p.value.values() = std::move(it->second.values);
  }
  for (auto [name, dst] : {std::pair{"input.center", &model.input_center}, std::pair{"input.scale", &model.input_scale}}) {
    auto it = arrays.find(name);
    if (it == arrays.end() || it->second.values.size() != dst->size()) r.fail(std::string("bad array '") + name + "'");
    *dst = std::move(it->second.values);
  }

  Checkpoint ck{std::move(model), std::nullopt};
  if (r.u32() == 1) {
    AdamState st(AdamConfig{}, ck.model.params());
    st.step = static_cast<std::int64_t>(r.u64());
    for (std::size_t i = 0; i < st.m.size(); ++i) {
      for (auto* dst : {&st.m[i], &st.v[i]}) {
        r.str();
        auto a = read_array(r);
        if (a.values.size() != dst->size()) r.fail("optimizer state shape mismatch");
        *dst = std::move(a.values);
      }
    }
    ck.optimizer = std::move(st);
  }
  if (r.pos() != body) r.fail("trailing bytes before checksum");
  return ck;
}

}  // namespace pidaudit
