#include <bit>
#include <cstring>
#include <limits>
#include <map>

#include "har/csv.hpp"
#include "har/error.hpp"
#include "har/model.hpp"

namespace har {

namespace {

constexpr char kMagic[8] = {'H', 'A', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorCode::CorruptCheckpoint, why); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) corrupt("unexpected end of checkpoint data");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::string config_text(const HarModelConfig& c) {
  std::string s;
  s += "in_channels=" + std::to_string(c.in_channels) + "\n";
  s += "num_classes=" + std::to_string(c.num_classes) + "\n";
  s += "window_seconds=" + csv::format(c.window_seconds) + "\n";
  s += "target_hz=" + csv::format(c.target_hz) + "\n";
  s += "kernel=" + std::to_string(c.kernel) + "\n";
  s += "block_widths=" + join_ints(c.block_widths) + "\n";
  s += "block_dilations=" + join_ints(c.block_dilations) + "\n";
  s += "seed=" + std::to_string(c.seed) + "\n";
  return s;
}

int parse_int_field(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) corrupt("config block lacks " + key);
  const auto v = csv::parse_int(it->second);
  if (!v || *v < std::numeric_limits<int>::min() || *v > std::numeric_limits<int>::max()) {
    corrupt("bad integer for " + key);
  }
  return static_cast<int>(*v);
}

double parse_real_field(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) corrupt("config block lacks " + key);
  const auto v = csv::parse_double(it->second);
  if (!v) corrupt("bad number for " + key);
  return *v;
}

std::vector<int> parse_int_list(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) corrupt("config block lacks " + key);
  std::vector<int> out;
  for (auto part : csv::split(it->second)) {
    const auto v = csv::parse_int(part);
    if (!v) corrupt("bad list for " + key);
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

HarModelConfig parse_config_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  for (auto line : csv::lines(text)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) corrupt("malformed config line");
    kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }
  HarModelConfig c;
  c.in_channels = parse_int_field(kv, "in_channels");
  c.num_classes = parse_int_field(kv, "num_classes");
  c.window_seconds = parse_real_field(kv, "window_seconds");
  c.target_hz = parse_real_field(kv, "target_hz");
  c.kernel = parse_int_field(kv, "kernel");
  c.block_widths = parse_int_list(kv, "block_widths");
  c.block_dilations = parse_int_list(kv, "block_dilations");
  const auto seed_it = kv.find("seed");
  if (seed_it == kv.end()) corrupt("config block lacks seed");
  try {
    c.seed = std::stoull(seed_it->second);
  } catch (const std::exception&) {
    corrupt("bad seed");
  }
  return c;
}

void put_record(std::string& out, const std::string& name, const ad::Shape& shape,
                std::span<const double> values) {
  put_le(out, name.size(), 2);
  out += name;
  put_le(out, shape.size(), 1);
  for (std::size_t d : shape) put_le(out, d, 4);
  for (double v : values) put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
}

}  // namespace

std::string encode_checkpoint(const ModelParams& params, const HarModelConfig& config) {
  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kVersion, 4);
  const std::string cfg = config_text(config);
  put_le(out, cfg.size(), 4);
  out += cfg;
  const auto tensors = params.parameters();
  const auto buffers = params.buffers();
  put_le(out, tensors.size() + buffers.size(), 4);
  for (const auto& t : tensors) put_record(out, t.name, t.tensor.shape(), t.tensor.values());
  for (const auto& b : buffers) put_record(out, b.name, {b.values->size()}, *b.values);
  put_le(out, fnv1a(out), 8);
  return out;
}

void save_checkpoint(const ModelParams& params, const HarModelConfig& config,
                     const std::filesystem::path& path) {
  csv::write_file(path, encode_checkpoint(params, config));
}

LoadedModel decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 4 + 4 + 8) corrupt("file too short");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) corrupt("bad magic");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.le(8) != fnv1a(body)) corrupt("digest mismatch (truncated or modified file)");

  Reader r(body);
  r.take(sizeof(kMagic));
  const auto version = r.le(4);
  if (version != kVersion) corrupt("unsupported version " + std::to_string(version));
  const auto cfg_len = static_cast<std::size_t>(r.le(4));
  HarModelConfig config = parse_config_text(r.take(cfg_len));
  ModelParams params;
  try {
    params = build_model(config);
  } catch (const Error& e) {
    corrupt(std::string("invalid stored config: ") + e.what());
  }

  std::map<std::string, std::pair<ad::Shape, std::span<double>>> slots;
  for (auto& t : params.parameters()) {
    auto tensor = t.tensor;
    slots.emplace(t.name, std::make_pair(tensor.shape(), tensor.values()));
  }
  for (auto& b : params.mutable_buffers()) slots.emplace(b.name, std::make_pair(ad::Shape{b.values->size()}, std::span<double>(*b.values)));

  const auto count = static_cast<std::size_t>(r.le(4));
  if (count != slots.size()) corrupt("record count does not match the stored config");
  std::map<std::string, bool> seen;
  for (std::size_t i = 0; i < count; ++i) {
    const auto name_len = static_cast<std::size_t>(r.le(2));
    const std::string name(r.take(name_len));
    const auto it = slots.find(name);
    if (it == slots.end()) corrupt("unexpected record " + name);
    if (seen[name]) corrupt("duplicate record " + name);
    seen[name] = true;
    const auto rank = static_cast<std::size_t>(r.le(1));
    ad::Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.le(4));
    if (shape != it->second.first) corrupt("shape mismatch for " + name);
    for (double& v : it->second.second) {
      v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(r.le(4))));
    }
  }
  if (!r.done()) corrupt("trailing bytes after the last record");
  return {std::move(params), std::move(config)};
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::Io, "checkpoint not found: " + path.string());
  }
  return decode_checkpoint(csv::read_file(path));
}

}  // namespace har
