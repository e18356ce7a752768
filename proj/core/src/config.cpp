#include "biasforge/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "biasforge/error.hpp"
#include "biasforge/random.hpp"

namespace biasforge {

namespace {

struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
  bool hashed = true;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& value, const char* kind) {
  throw std::invalid_argument("'" + value + "' is not " + kind);
}

template <typename I>
I parse_integer(const std::string& v) {
  I out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(v, "an integer");
  return out;
}

double parse_double(const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(v, "a number");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(v, "a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Access>
Field int_field(std::string key, Access access, bool hashed = true) {
  return {std::move(key), [access](PipelineConfig& c, const std::string& v) { access(c) = parse_integer<int>(v); },
          [access](const PipelineConfig& c) { return std::to_string(access(const_cast<PipelineConfig&>(c))); },
          hashed};
}

template <typename Access>
Field u64_field(std::string key, Access access, bool hashed = true) {
  return {std::move(key),
          [access](PipelineConfig& c, const std::string& v) { access(c) = parse_integer<std::uint64_t>(v); },
          [access](const PipelineConfig& c) { return std::to_string(access(const_cast<PipelineConfig&>(c))); },
          hashed};
}

template <typename Access>
Field double_field(std::string key, Access access, bool hashed = true) {
  return {std::move(key), [access](PipelineConfig& c, const std::string& v) { access(c) = parse_double(v); },
          [access](const PipelineConfig& c) { return format_double(access(const_cast<PipelineConfig&>(c))); },
          hashed};
}

template <typename Access>
Field bool_field(std::string key, Access access, bool hashed = true) {
  return {std::move(key), [access](PipelineConfig& c, const std::string& v) { access(c) = parse_bool(v); },
          [access](const PipelineConfig& c) {
            return std::string(access(const_cast<PipelineConfig&>(c)) ? "true" : "false");
          },
          hashed};
}

template <typename Access>
Field string_field(std::string key, Access access, bool hashed = true) {
  return {std::move(key), [access](PipelineConfig& c, const std::string& v) { access(c) = v; },
          [access](const PipelineConfig& c) { return std::string(access(const_cast<PipelineConfig&>(c))); }, hashed};
}

template <typename Access>
Field path_field(std::string key, Access access, bool hashed = true) {
  return {std::move(key), [access](PipelineConfig& c, const std::string& v) { access(c) = v; },
          [access](const PipelineConfig& c) { return access(const_cast<PipelineConfig&>(c)).generic_string(); },
          hashed};
}

template <typename Access>
Field int_list_field(std::string key, Access access, bool hashed = true) {
  return {std::move(key),
          [access](PipelineConfig& c, const std::string& v) {
            std::vector<int> out;
            for (const auto& item : split_list(v)) out.push_back(parse_integer<int>(item));
            access(c) = std::move(out);
          },
          [access](const PipelineConfig& c) {
            std::string out;
            for (int x : access(const_cast<PipelineConfig&>(c))) out += (out.empty() ? "" : ",") + std::to_string(x);
            return out;
          },
          hashed};
}

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(u64_field("run.seed", [](C& c) -> auto& { return c.seed; }));

    f.push_back(path_field("data.manifest", [](C& c) -> auto& { return c.manifest; }));
    f.push_back(path_field("data.image_root", [](C& c) -> auto& { return c.image_root; }));
    f.push_back(u64_field("data.split_seed", [](C& c) -> auto& { return c.split_seed; }));

    f.push_back(double_field("bias.threshold", [](C& c) -> auto& { return c.bias_threshold; }));

    f.push_back(int_field("skin.image_size", [](C& c) -> auto& { return c.skin.image_size; }));
    f.push_back(int_field("skin.channels", [](C& c) -> auto& { return c.skin.channels; }));
    f.push_back(int_field("skin.z_dim", [](C& c) -> auto& { return c.skin.z_dim; }));
    f.push_back(double_field("skin.lambda_gp", [](C& c) -> auto& { return c.skin.lambda_gp; }));
    f.push_back(int_field("skin.n_critic", [](C& c) -> auto& { return c.skin.n_critic; }));
    f.push_back(double_field("skin.lr_critic", [](C& c) -> auto& { return c.skin.lr_critic; }));
    f.push_back(double_field("skin.lr_generator", [](C& c) -> auto& { return c.skin.lr_generator; }));
    f.push_back(double_field("skin.adam_beta1", [](C& c) -> auto& { return c.skin.adam_beta1; }));
    f.push_back(double_field("skin.adam_beta2", [](C& c) -> auto& { return c.skin.adam_beta2; }));
    f.push_back(int_field("skin.batch_size", [](C& c) -> auto& { return c.skin.batch_size; }));
    f.push_back(bool_field("skin.literal_concat", [](C& c) -> auto& { return c.skin.literal_concat; }));
    f.push_back(int_list_field("skin.encoder_channels", [](C& c) -> auto& { return c.skin.encoder_channels; }));
    f.push_back(int_field("skin.feature_dim", [](C& c) -> auto& { return c.skin.feature_dim; }));
    f.push_back(int_field("skin.fc_channels", [](C& c) -> auto& { return c.skin.fc_channels; }));
    f.push_back(int_field("skin.deconv1_channels", [](C& c) -> auto& { return c.skin.deconv1_channels; }));
    f.push_back(int_field("skin.deconv2_channels", [](C& c) -> auto& { return c.skin.deconv2_channels; }));
    f.push_back(Field{"skin.critic",
                      [](C& c, const std::string& v) {
                        if (v == "conv")
                          c.skin.critic_kind = skin::CriticKind::conv;
                        else if (v == "dense")
                          c.skin.critic_kind = skin::CriticKind::dense;
                        else
                          bad_value(v, "one of conv, dense");
                      },
                      [](const C& c) {
                        return std::string(c.skin.critic_kind == skin::CriticKind::conv ? "conv" : "dense");
                      },
                      true});
    f.push_back(int_list_field("skin.critic_channels", [](C& c) -> auto& { return c.skin.critic_channels; }));
    f.push_back(int_field("skin.dense_hidden", [](C& c) -> auto& { return c.skin.dense_hidden; }));
    f.push_back(bool_field("skin.augment", [](C& c) -> auto& { return c.skin_augment; }));
    f.push_back(int_field("skin.steps", [](C& c) -> auto& { return c.skin_schedule.steps; }, false));
    f.push_back(int_field("skin.checkpoint_interval",
                          [](C& c) -> auto& { return c.skin_schedule.checkpoint_interval; }, false));

    f.push_back(int_field("ergan.image_size", [](C& c) -> auto& { return c.ergan.image_size; }));
    f.push_back(int_field("ergan.channels", [](C& c) -> auto& { return c.ergan.channels; }));
    f.push_back(int_list_field("ergan.encoder_channels", [](C& c) -> auto& { return c.ergan.encoder_channels; }));
    f.push_back(int_field("ergan.decoder_channels", [](C& c) -> auto& { return c.ergan.decoder_channels; }));
    f.push_back(int_list_field("ergan.disc_channels", [](C& c) -> auto& { return c.ergan.disc_channels; }));
    f.push_back(double_field("ergan.w_adv", [](C& c) -> auto& { return c.ergan.w_adv; }));
    f.push_back(double_field("ergan.w_id", [](C& c) -> auto& { return c.ergan.w_id; }));
    f.push_back(double_field("ergan.w_rec", [](C& c) -> auto& { return c.ergan.w_rec; }));
    f.push_back(double_field("ergan.w_mask", [](C& c) -> auto& { return c.ergan.w_mask; }));
    f.push_back(double_field("ergan.lr_generator", [](C& c) -> auto& { return c.ergan.lr_generator; }));
    f.push_back(double_field("ergan.lr_discriminator", [](C& c) -> auto& { return c.ergan.lr_discriminator; }));
    f.push_back(double_field("ergan.adam_beta1", [](C& c) -> auto& { return c.ergan.adam_beta1; }));
    f.push_back(double_field("ergan.adam_beta2", [](C& c) -> auto& { return c.ergan.adam_beta2; }));
    f.push_back(int_field("ergan.batch_size", [](C& c) -> auto& { return c.ergan.batch_size; }));
    f.push_back(int_field("ergan.steps", [](C& c) -> auto& { return c.ergan_schedule.steps; }, false));
    f.push_back(int_field("ergan.checkpoint_interval",
                          [](C& c) -> auto& { return c.ergan_schedule.checkpoint_interval; }, false));

    f.push_back(int_field("enhance.work_size", [](C& c) -> auto& { return c.enhance.work_size; }));
    f.push_back(int_field("enhance.superpixels", [](C& c) -> auto& { return c.enhance.superpixels; }));
    f.push_back(double_field("enhance.edge_threshold", [](C& c) -> auto& { return c.enhance.edge_threshold; }));
    f.push_back(double_field("enhance.blur_sigma", [](C& c) -> auto& { return c.enhance.blur_sigma; }));
    f.push_back(int_field("enhance.slic_iterations", [](C& c) -> auto& { return c.enhance.slic_iterations; }));
    f.push_back(int_field("enhance.support_channels", [](C& c) -> auto& { return c.enhance.support_channels; }));
    f.push_back(int_field("enhance.main_channels", [](C& c) -> auto& { return c.enhance.main_channels; }));
    f.push_back(int_list_field("enhance.disc_channels", [](C& c) -> auto& { return c.enhance.disc_channels; }));
    f.push_back(double_field("enhance.w_d1", [](C& c) -> auto& { return c.enhance.w_d1; }));
    f.push_back(double_field("enhance.w_d2", [](C& c) -> auto& { return c.enhance.w_d2; }));
    f.push_back(double_field("enhance.w_content", [](C& c) -> auto& { return c.enhance.w_content; }));
    f.push_back(double_field("enhance.lr_generator", [](C& c) -> auto& { return c.enhance.lr_generator; }));
    f.push_back(double_field("enhance.lr_discriminator", [](C& c) -> auto& { return c.enhance.lr_discriminator; }));
    f.push_back(double_field("enhance.adam_beta1", [](C& c) -> auto& { return c.enhance.adam_beta1; }));
    f.push_back(double_field("enhance.adam_beta2", [](C& c) -> auto& { return c.enhance.adam_beta2; }));
    f.push_back(int_field("enhance.batch_size", [](C& c) -> auto& { return c.enhance.batch_size; }));
    f.push_back(double_field("enhance.degrade_noise", [](C& c) -> auto& { return c.enhance.degrade_noise; }));
    f.push_back(int_field("enhance.steps", [](C& c) -> auto& { return c.enhance_schedule.steps; }, false));
    f.push_back(int_field("enhance.checkpoint_interval",
                          [](C& c) -> auto& { return c.enhance_schedule.checkpoint_interval; }, false));

    f.push_back(path_field("generate.input_dir", [](C& c) -> auto& { return c.generate_input_dir; }));
    f.push_back(path_field("generate.clean_dir", [](C& c) -> auto& { return c.generate_clean_dir; }));
    f.push_back(string_field("generate.tag", [](C& c) -> auto& { return c.generate_tag; }));

    f.push_back(path_field("evaluate.pairs", [](C& c) -> auto& { return c.evaluate_pairs; }));

    f.push_back(double_field("assemble.target_rate", [](C& c) -> auto& { return c.target_rate; }));
    f.push_back(path_field("assemble.bias_report", [](C& c) -> auto& { return c.bias_report; }));
    f.push_back(Field{"assemble.synthetic_dirs",
                      [](C& c, const std::string& v) {
                        c.synthetic_dirs.clear();
                        for (const auto& item : split_list(v)) c.synthetic_dirs.emplace_back(item);
                      },
                      [](const C& c) {
                        std::string out;
                        for (const auto& p : c.synthetic_dirs) out += (out.empty() ? "" : ",") + p.generic_string();
                        return out;
                      },
                      true});
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

bool in_section(std::string_view key, std::string_view section) {
  if (section.empty()) return true;
  return key.size() > section.size() && key.substr(0, section.size()) == section && key[section.size()] == '.';
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(bias_threshold > 0.0 && bias_threshold < 1.0)) fail(Errc::config_error, "bias.threshold must be in (0, 1)");
  if (!(target_rate > 0.0 && target_rate <= 1.0)) fail(Errc::config_error, "assemble.target_rate must be in (0, 1]");
  for (const auto* s : {&skin_schedule, &ergan_schedule, &enhance_schedule})
    if (s->steps < 0 || s->checkpoint_interval < 0)
      fail(Errc::config_error, "steps and checkpoint_interval must be non-negative");
  skin.validate();
  ergan.validate();
  enhance.validate();
}

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig config;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(Errc::config_error, line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = find_field(key);
    if (!field) throw ParseError(Errc::config_error, line_no, "unknown config key '" + key + "'");
    if (!seen.insert(key).second) throw ParseError(Errc::config_error, line_no, "duplicate config key '" + key + "'");
    try {
      field->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw ParseError(Errc::config_error, line_no, key + ": " + e.what());
    }
  }
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  PipelineConfig config;
  try {
    config = parse_config(ss.str());
  } catch (const ParseError& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(config.manifest);
  resolve(config.image_root);
  resolve(config.generate_input_dir);
  resolve(config.generate_clean_dir);
  resolve(config.evaluate_pairs);
  resolve(config.bias_report);
  for (auto& p : config.synthetic_dirs) resolve(p);
  return config;
}

std::string canonical_config(const PipelineConfig& config, std::string_view section) {
  std::vector<std::string> lines;
  for (const auto& f : fields()) {
    if (!in_section(f.key, section)) continue;
    if (!section.empty() && !f.hashed) continue;
    lines.push_back(f.key + " = " + f.get(config));
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& l : lines) out += l + '\n';
  return out;
}

std::string config_hash(const PipelineConfig& config, std::string_view section) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config(config, section))));
  return buf;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

}  // namespace biasforge
