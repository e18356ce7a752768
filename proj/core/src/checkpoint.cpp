#include "biasforge/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "biasforge/error.hpp"
#include "biasforge/random.hpp"

namespace biasforge {

namespace {

constexpr char kMagic[8] = {'B', 'F', 'C', 'K', 'P', 'T', '0', '1'};
enum : std::uint8_t { kFloat = 1, kDouble = 2, kText = 3 };

template <typename U>
void append(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U read() {
    need(sizeof(U));
    U value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto v = bytes_.substr(pos_, n);
    pos_ += n;
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(Errc::corrupt_data, "checkpoint is truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

template <typename U>
std::vector<U> read_array(Reader& r, std::uint64_t count) {
  const auto raw = r.take(count * sizeof(U));
  std::vector<U> values(count);
  if (count) std::memcpy(values.data(), raw.data(), raw.size());
  return values;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io_failure, "failed writing " + path.string());
}

}  // namespace

const std::vector<float>& Checkpoint::floats(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end() || !std::holds_alternative<std::vector<float>>(it->second))
    fail(Errc::missing_parameters, "checkpoint has no float32 entry '" + name + "'");
  return std::get<std::vector<float>>(it->second);
}

const std::vector<double>& Checkpoint::doubles(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end() || !std::holds_alternative<std::vector<double>>(it->second))
    fail(Errc::missing_parameters, "checkpoint has no float64 entry '" + name + "'");
  return std::get<std::vector<double>>(it->second);
}

const std::string& Checkpoint::text(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end() || !std::holds_alternative<std::string>(it->second))
    fail(Errc::missing_parameters, "checkpoint has no text entry '" + name + "'");
  return std::get<std::string>(it->second);
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::string out(kMagic, sizeof kMagic);
  append<std::uint64_t>(out, checkpoint.entries_.size());
  for (const auto& [name, entry] : checkpoint.entries_) {
    append<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    if (const auto* f = std::get_if<std::vector<float>>(&entry)) {
      append<std::uint8_t>(out, kFloat);
      append<std::uint64_t>(out, f->size());
      out.append(reinterpret_cast<const char*>(f->data()), f->size() * sizeof(float));
    } else if (const auto* d = std::get_if<std::vector<double>>(&entry)) {
      append<std::uint8_t>(out, kDouble);
      append<std::uint64_t>(out, d->size());
      out.append(reinterpret_cast<const char*>(d->data()), d->size() * sizeof(double));
    } else {
      const auto& t = std::get<std::string>(entry);
      append<std::uint8_t>(out, kText);
      append<std::uint64_t>(out, t.size());
      out += t;
    }
  }
  append<std::uint64_t>(out, fnv1a64(out));
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    fail(Errc::corrupt_data, "not a biasforge checkpoint");
  const auto body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (stored != fnv1a64(body)) fail(Errc::corrupt_data, "checkpoint checksum mismatch");

  Reader r(body);
  r.take(sizeof kMagic);
  const auto count = r.read<std::uint64_t>();
  Checkpoint out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.read<std::uint32_t>();
    const std::string name(r.take(len));
    const auto kind = r.read<std::uint8_t>();
    const auto n = r.read<std::uint64_t>();
    switch (kind) {
      case kFloat: out.put(name, read_array<float>(r, n)); break;
      case kDouble: out.put(name, read_array<double>(r, n)); break;
      case kText: out.put_text(name, std::string(r.take(n))); break;
      default: fail(Errc::corrupt_data, "unknown checkpoint entry kind");
    }
  }
  if (!r.done()) fail(Errc::corrupt_data, "trailing bytes in checkpoint");
  return out;
}

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

namespace {

template <typename T>
void put_values(Checkpoint& c, const std::string& name, std::vector<T> v) {
  c.put(name, std::move(v));
}

template <typename T>
const std::vector<T>& get_values(const Checkpoint& c, const std::string& name) {
  if constexpr (std::is_same_v<T, float>)
    return c.floats(name);
  else
    return c.doubles(name);
}

}  // namespace

template <typename T>
void store_parameters(Checkpoint& checkpoint, const std::string& prefix, const nn::ParameterSet<T>& params) {
  for (std::size_t i = 0; i < params.tensors().size(); ++i) {
    const auto data = params.tensors()[i].data();
    put_values(checkpoint, prefix + params.names()[i], std::vector<T>(data.begin(), data.end()));
  }
}

template <typename T>
void load_parameters(const Checkpoint& checkpoint, const std::string& prefix, nn::ParameterSet<T>& params) {
  for (std::size_t i = 0; i < params.tensors().size(); ++i) {
    const auto& values = get_values<T>(checkpoint, prefix + params.names()[i]);
    auto t = params.tensors()[i];
    if (values.size() != t.size())
      fail(Errc::shape_mismatch, "checkpoint entry '" + prefix + params.names()[i] + "' has " +
                                     std::to_string(values.size()) + " values, expected " + std::to_string(t.size()));
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
  }
}

template <typename T>
void store_adam(Checkpoint& checkpoint, const std::string& prefix, const nn::AdamState<T>& state) {
  checkpoint.put_text(prefix + "step", std::to_string(state.step));
  checkpoint.put_text(prefix + "count", std::to_string(state.first.size()));
  for (std::size_t i = 0; i < state.first.size(); ++i) {
    put_values(checkpoint, prefix + "m." + std::to_string(i), state.first[i]);
    put_values(checkpoint, prefix + "v." + std::to_string(i), state.second[i]);
  }
}

template <typename T>
nn::AdamState<T> load_adam(const Checkpoint& checkpoint, const std::string& prefix) {
  nn::AdamState<T> state;
  try {
    state.step = std::stoll(checkpoint.text(prefix + "step"));
    const auto count = std::stoull(checkpoint.text(prefix + "count"));
    for (std::size_t i = 0; i < count; ++i) {
      state.first.push_back(get_values<T>(checkpoint, prefix + "m." + std::to_string(i)));
      state.second.push_back(get_values<T>(checkpoint, prefix + "v." + std::to_string(i)));
    }
  } catch (const std::invalid_argument&) {
    fail(Errc::corrupt_data, "malformed optimizer state '" + prefix + "'");
  } catch (const std::out_of_range&) {
    fail(Errc::corrupt_data, "malformed optimizer state '" + prefix + "'");
  }
  return state;
}

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint_path) {
  return checkpoint_path.string() + ".manifest";
}

std::string format_checkpoint_manifest(const CheckpointManifest& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "model = %s\nseed = %llu\niteration = %lld\nconfig_hash = %s\nL_D = %.9g\nL_G = %.9g\n",
                m.model.c_str(), static_cast<unsigned long long>(m.seed), static_cast<long long>(m.iteration),
                m.config_hash.c_str(), m.loss_d, m.loss_g);
  return buf;
}

CheckpointManifest parse_checkpoint_manifest(std::string_view text) {
  CheckpointManifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool seen_model = false, seen_hash = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError(Errc::corrupt_data, line_no, "expected 'key = value'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    try {
      if (key == "model") {
        m.model = value;
        seen_model = true;
      } else if (key == "seed") {
        m.seed = std::stoull(value);
      } else if (key == "iteration") {
        m.iteration = std::stoll(value);
      } else if (key == "config_hash") {
        m.config_hash = value;
        seen_hash = true;
      } else if (key == "L_D") {
        m.loss_d = std::stod(value);
      } else if (key == "L_G") {
        m.loss_g = std::stod(value);
      } else {
        throw ParseError(Errc::corrupt_data, line_no, "unknown manifest key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ParseError(Errc::bad_value, line_no, "malformed value for '" + key + "'");
    }
  }
  if (!seen_model || !seen_hash) fail(Errc::corrupt_data, "checkpoint manifest lacks model or config_hash");
  return m;
}

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& checkpoint_path) {
  return parse_checkpoint_manifest(read_file(manifest_path(checkpoint_path)));
}

void save_checkpoint(const Checkpoint& checkpoint, const CheckpointManifest& manifest,
                     const std::filesystem::path& path) {
  write_checkpoint(checkpoint, path);
  write_file(manifest_path(path), format_checkpoint_manifest(manifest));
}

#define BIASFORGE_INSTANTIATE(T)                                                                      \
  template void store_parameters(Checkpoint&, const std::string&, const nn::ParameterSet<T>&);        \
  template void load_parameters(const Checkpoint&, const std::string&, nn::ParameterSet<T>&);         \
  template void store_adam(Checkpoint&, const std::string&, const nn::AdamState<T>&);                 \
  template nn::AdamState<T> load_adam(const Checkpoint&, const std::string&);

BIASFORGE_INSTANTIATE(float)
BIASFORGE_INSTANTIATE(double)

#undef BIASFORGE_INSTANTIATE

}  // namespace biasforge
