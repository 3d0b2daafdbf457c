#include "aadam/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "aadam/corpus.hpp"
#include "aadam/error.hpp"

namespace aadam {

namespace {

constexpr std::string_view kMagic = "AADAM-CHECKPOINT";

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string dash(const std::string& s) { return s.empty() ? "-" : s; }
std::string undash(std::string_view s) { return s == "-" ? std::string() : std::string(s); }

void check_field(const std::string& s, const char* what) {
  if (s.find_first_of("\t\n\r") != std::string::npos) {
    throw DataError(std::string("checkpoint: ") + what + " '" + s + "' contains a tab or newline");
  }
}

std::string shape_field(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

std::string provenance_field(const std::optional<std::map<std::string, std::size_t>>& p) {
  if (!p) return "NA";
  std::string out;
  for (const auto& [k, n] : *p) out += (out.empty() ? "" : ",") + k + "=" + std::to_string(n);
  return out.empty() ? "-" : out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t end = s.find(sep, start);
    out.push_back(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) return out;
    start = end + 1;
  }
}

template <typename T>
T parse_number(std::string_view s, const std::string& where) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("checkpoint " + where + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

std::optional<std::map<std::string, std::size_t>> parse_provenance_field(std::string_view s, const std::string& where) {
  if (s == "NA") return std::nullopt;
  std::map<std::string, std::size_t> out;
  if (s == "-") return out;
  for (auto item : split(s, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw DataError("checkpoint " + where + ": bad provenance '" + std::string(s) + "'");
    out[std::string(item.substr(0, eq))] = parse_number<std::size_t>(item.substr(eq + 1), where);
  }
  return out;
}

// Reads manifest lines from the front of the file.
class Lines {
 public:
  explicit Lines(std::string_view bytes) : bytes_(bytes) {}

  std::string_view next(const char* expecting) {
    const std::size_t end = bytes_.find('\n', pos_);
    if (end == std::string_view::npos) {
      throw DataError(std::string("checkpoint truncated in manifest while reading ") + expecting + " at byte offset " +
                      std::to_string(pos_));
    }
    std::string_view line = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    ++line_;
    return line;
  }

  std::string_view keyed(std::string_view key) {
    std::string_view line = next(std::string(key).c_str());
    if (line.substr(0, key.size()) != key || line.size() <= key.size() || line[key.size()] != ' ') {
      throw DataError("checkpoint manifest line " + std::to_string(line_) + ": expected '" + std::string(key) +
                      " ...', found '" + std::string(line.substr(0, 40)) + "'");
    }
    return line.substr(key.size() + 1);
  }

  std::string where() const { return "manifest line " + std::to_string(line_); }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::ostringstream m;
  const EncoderConfig& k = c.config;
  m << kMagic << ' ' << kCheckpointVersion << '\n';
  m << "kind " << c.kind << '\n';
  m << "config vocab_size=" << k.vocab_size << " d_model=" << k.d_model << " n_layers=" << k.n_layers
    << " n_heads=" << k.n_heads << " d_ff=" << k.d_ff << " max_len=" << k.max_len
    << " adapter_bottleneck=" << k.adapter_bottleneck << " seed=" << k.seed << " dropout=" << fmt(k.dropout) << '\n';
  m << "config_hash " << dash(c.config_hash) << '\n';
  check_field(c.adapters.language_id, "adapter id");
  check_field(c.adapters.task_id, "adapter id");
  if (c.adapters.language_id.find(' ') != std::string::npos || c.adapters.task_id.find(' ') != std::string::npos) {
    throw DataError("checkpoint: adapter ids must not contain spaces");
  }
  m << "adapters " << dash(c.adapters.language_id) << ' ' << dash(c.adapters.task_id) << '\n';
  m << "lineage " << c.lineage.size() << '\n';
  for (const auto& e : c.lineage) {
    for (const auto* s : {&e.stage, &e.hash, &e.parent, &e.objective, &e.language}) check_field(*s, "lineage field");
    m << "L " << e.stage << '\t' << dash(e.hash) << '\t' << dash(e.parent) << '\t' << e.objective << '\t'
      << dash(e.language) << '\t' << provenance_field(e.provenance) << '\n';
  }
  m << "tensors " << c.tensors.size() << '\n';
  std::size_t offset = 0;
  for (const auto& p : c.tensors) {
    check_field(p.name, "tensor name");
    m << "T " << p.name << '\t' << (p.trainable ? 1 : 0) << '\t' << shape_field(p.tensor.shape()) << '\t' << offset
      << '\t' << p.tensor.size() << '\n';
    offset += 4 * p.tensor.size();
  }
  m << "payload " << offset << "\n\n";
  std::string out = m.str();
  const std::size_t header = out.size();
  out.resize(header + offset);
  char* dst = out.data() + header;
  for (const auto& p : c.tensors) {
    for (double v : p.tensor.values()) {
      const float f = static_cast<float>(v);
      if (!std::isfinite(f)) throw NumericError("checkpoint: tensor " + p.name + " does not fit in float32");
      const auto bits = std::bit_cast<std::uint32_t>(f);
      for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Lines lines(bytes);
  Checkpoint c;
  {
    const auto first = lines.next("header");
    const auto parts = split(first, ' ');
    if (parts.size() != 2 || parts[0] != kMagic) throw DataError("not a checkpoint file (bad magic line)");
    const int version = parse_number<int>(parts[1], "header");
    if (version != kCheckpointVersion) {
      throw DataError("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                      std::to_string(kCheckpointVersion) + ")");
    }
  }
  c.kind = std::string(lines.keyed("kind"));
  if (c.kind != "model" && c.kind != "language-adapter" && c.kind != "task-adapter") {
    throw DataError("checkpoint " + lines.where() + ": unknown kind '" + c.kind + "'");
  }
  for (auto kv : split(lines.keyed("config"), ' ')) {
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) throw DataError("checkpoint " + lines.where() + ": bad config entry");
    const auto key = kv.substr(0, eq);
    const auto val = kv.substr(eq + 1);
    const std::string w = lines.where();
    EncoderConfig& k = c.config;
    if (key == "vocab_size") k.vocab_size = parse_number<std::size_t>(val, w);
    else if (key == "d_model") k.d_model = parse_number<std::size_t>(val, w);
    else if (key == "n_layers") k.n_layers = parse_number<std::size_t>(val, w);
    else if (key == "n_heads") k.n_heads = parse_number<std::size_t>(val, w);
    else if (key == "d_ff") k.d_ff = parse_number<std::size_t>(val, w);
    else if (key == "max_len") k.max_len = parse_number<std::size_t>(val, w);
    else if (key == "adapter_bottleneck") k.adapter_bottleneck = parse_number<std::size_t>(val, w);
    else if (key == "seed") k.seed = parse_number<std::uint64_t>(val, w);
    else if (key == "dropout") k.dropout = parse_number<double>(val, w);
    else throw DataError("checkpoint " + w + ": unknown config key '" + std::string(key) + "'");
  }
  c.config_hash = undash(lines.keyed("config_hash"));
  {
    const auto parts = split(lines.keyed("adapters"), ' ');
    if (parts.size() != 2) throw DataError("checkpoint " + lines.where() + ": expected two adapter ids");
    c.adapters = {undash(parts[0]), undash(parts[1])};
  }
  const auto n_lineage = parse_number<std::size_t>(lines.keyed("lineage"), lines.where());
  for (std::size_t i = 0; i < n_lineage; ++i) {
    const auto line = lines.next("lineage entry");
    const auto f = split(line.substr(std::min<std::size_t>(2, line.size())), '\t');
    if (line.substr(0, 2) != "L " || f.size() != 6) {
      throw DataError("checkpoint " + lines.where() + ": malformed lineage entry");
    }
    c.lineage.push_back({std::string(f[0]), undash(f[1]), undash(f[2]), std::string(f[3]), undash(f[4]),
                         parse_provenance_field(f[5], lines.where())});
  }
  const auto n_tensors = parse_number<std::size_t>(lines.keyed("tensors"), lines.where());
  struct Entry {
    std::size_t offset, count;
  };
  std::vector<Entry> entries;
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < n_tensors; ++i) {
    const auto line = lines.next("tensor entry");
    const auto f = split(line.substr(std::min<std::size_t>(2, line.size())), '\t');
    if (line.substr(0, 2) != "T " || f.size() != 5) {
      throw DataError("checkpoint " + lines.where() + ": malformed tensor entry");
    }
    const std::string w = lines.where();
    Shape shape;
    for (auto d : split(f[2], 'x')) shape.push_back(parse_number<std::size_t>(d, w));
    const auto offset = parse_number<std::size_t>(f[3], w);
    const auto count = parse_number<std::size_t>(f[4], w);
    for (std::size_t d : shape) {
      if (d == 0) throw DataError("checkpoint " + w + ": zero dimension in tensor " + std::string(f[0]));
    }
    if (shape_numel(shape) != count) {
      throw DataError("checkpoint " + w + ": tensor " + std::string(f[0]) + " shape " + shape_to_string(shape) +
                      " disagrees with count " + std::to_string(count));
    }
    if (offset != expected_offset) {
      throw DataError("checkpoint " + w + ": tensor " + std::string(f[0]) + " at byte offset " +
                      std::to_string(offset) + ", expected " + std::to_string(expected_offset));
    }
    expected_offset += 4 * count;
    c.tensors.push_back({std::string(f[0]), Tensor(shape), f[1] == "1"});
    entries.push_back({offset, count});
  }
  const auto payload = parse_number<std::size_t>(lines.keyed("payload"), lines.where());
  if (payload != expected_offset) {
    throw DataError("checkpoint manifest declares a payload of " + std::to_string(payload) +
                    " bytes but its tensors need " + std::to_string(expected_offset));
  }
  if (!lines.next("separator").empty()) throw DataError("checkpoint: missing blank line before payload");
  const std::size_t base = lines.pos();
  const std::size_t available = bytes.size() - base;
  if (available != payload) {
    std::string msg = "checkpoint payload " + std::string(available < payload ? "truncated" : "has trailing bytes") +
                      ": manifest expects " + std::to_string(payload) + " bytes after byte offset " +
                      std::to_string(base) + ", found " + std::to_string(available);
    if (available < payload) {
      for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].offset + 4 * entries[i].count > available) {
          msg += "; first incomplete tensor is " + c.tensors[i].name + " at payload offset " +
                 std::to_string(entries[i].offset);
          break;
        }
      }
    }
    throw DataError(msg);
  }
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + base);
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    auto& values = c.tensors[i].tensor.values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const unsigned char* b = src + entries[i].offset + 4 * j;
      const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
      const float f = std::bit_cast<float>(bits);
      if (!std::isfinite(f)) {
        throw DataError("checkpoint: non-finite value in tensor " + c.tensors[i].name + " at payload offset " +
                        std::to_string(entries[i].offset + 4 * j));
      }
      values[j] = static_cast<double>(f);
    }
  }
  return c;
}

Checkpoint to_checkpoint(const ModelGraph& model, const std::string& prefix) {
  Checkpoint c;
  c.config = model.config();
  c.config_hash = model.config_hash();
  c.adapters = model.adapters();
  c.lineage = model.lineage();
  for (const auto& p : model.params()) {
    if (p.name.rfind(prefix, 0) == 0) c.tensors.push_back(p);
  }
  return c;
}

ModelGraph to_model(const Checkpoint& c) {
  if (c.kind != "model") throw DataError("checkpoint holds a " + c.kind + ", not a model");
  validate(c.config);
  ModelGraph model(c.config);
  const ModelGraph reference = build_encoder(c.config);
  std::map<std::string, const Parameter*> stored;
  for (const auto& p : c.tensors) stored[p.name] = &p;
  for (const auto& r : reference.params()) {
    auto it = stored.find(r.name);
    if (it == stored.end()) throw DataError("checkpoint lacks tensor " + r.name);
    if (it->second->tensor.shape() != r.tensor.shape()) {
      throw DataError("checkpoint tensor " + r.name + " has shape " + shape_to_string(it->second->tensor.shape()) +
                      ", expected " + shape_to_string(r.tensor.shape()));
    }
  }
  for (const auto& p : c.tensors) {
    if (p.name.rfind("adapter.", 0) != 0 && !reference.params().contains(p.name)) {
      throw DataError("checkpoint has unknown tensor " + p.name);
    }
  }
  for (AdapterKind kind : {AdapterKind::Language, AdapterKind::Task}) {
    const std::string& id = kind == AdapterKind::Language ? c.adapters.language_id : c.adapters.task_id;
    AdapterBundle bundle{kind, id, {}};
    for (const auto& p : c.tensors) {
      if (p.name.rfind(adapter_prefix(kind), 0) == 0) bundle.params.push_back(p);
    }
    if (id.empty()) {
      if (!bundle.params.empty()) {
        throw DataError("checkpoint has " + std::string(to_string(kind)) + " adapter tensors but no id");
      }
      continue;
    }
    ModelGraph scratch(c.config);
    attach_adapter(scratch, bundle);  // shape validation only
  }
  for (const auto& p : c.tensors) {
    if (p.name.rfind("adapter.lang.", 0) != 0 && p.name.rfind("adapter.task.", 0) != 0 &&
        p.name.rfind("adapter.", 0) == 0) {
      throw DataError("checkpoint has unknown tensor " + p.name);
    }
    model.params().add(p.name, p.tensor, p.trainable);
  }
  model.adapters() = c.adapters;
  for (const auto& e : c.lineage) model.append_lineage(e);
  model.set_config_hash(c.config_hash);
  return model;
}

void save_checkpoint(const ModelGraph& model, const std::string& path) {
  write_text(path, serialize_checkpoint(to_checkpoint(model)));
}

ModelGraph load_checkpoint(const std::string& path) {
  try {
    return to_model(parse_checkpoint(read_text(path)));
  } catch (const DataError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw DataError(path + ": " + msg);
  }
}

void save_adapter(const ModelGraph& model, AdapterKind kind, const std::string& path) {
  if (!model.has_adapter(kind)) throw UsageError("no " + std::string(to_string(kind)) + " adapter to save");
  Checkpoint c = to_checkpoint(model, adapter_prefix(kind));
  c.kind = kind == AdapterKind::Language ? "language-adapter" : "task-adapter";
  if (kind == AdapterKind::Language) c.adapters.task_id.clear();
  else c.adapters.language_id.clear();
  write_text(path, serialize_checkpoint(c));
}

AdapterBundle load_adapter(const std::string& path) {
  try {
    const Checkpoint c = parse_checkpoint(read_text(path));
    if (c.kind == "model") throw DataError("file holds a full model, not an adapter bundle");
    const AdapterKind kind = c.kind == "language-adapter" ? AdapterKind::Language : AdapterKind::Task;
    const std::string id = kind == AdapterKind::Language ? c.adapters.language_id : c.adapters.task_id;
    for (const auto& p : c.tensors) {
      if (p.name.rfind(adapter_prefix(kind), 0) != 0) throw DataError("adapter bundle holds foreign tensor " + p.name);
    }
    return AdapterBundle{kind, id, c.tensors};
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace aadam
