#include "biasforge/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "biasforge/error.hpp"
#include "biasforge/random.hpp"

namespace biasforge {

int AttributeManifest::index_of(std::string_view attribute) const {
  auto it = std::find(attribute_names.begin(), attribute_names.end(), attribute);
  return it == attribute_names.end() ? -1 : static_cast<int>(it - attribute_names.begin());
}

const std::vector<std::string>& celeba_attribute_names() {
  static const std::vector<std::string> names{
      "5_o_Clock_Shadow", "Arched_Eyebrows",   "Attractive",       "Bags_Under_Eyes",
      "Bald",             "Bangs",             "Big_Lips",         "Big_Nose",
      "Black_Hair",       "Blond_Hair",        "Blurry",           "Brown_Hair",
      "Bushy_Eyebrows",   "Chubby",            "Double_Chin",      "Eyeglasses",
      "Goatee",           "Gray_Hair",         "Heavy_Makeup",     "High_Cheekbones",
      "Male",             "Mouth_Slightly_Open", "Mustache",       "Narrow_Eyes",
      "No_Beard",         "Oval_Face",         "Pale_Skin",        "Pointy_Nose",
      "Receding_Hairline", "Rosy_Cheeks",      "Sideburns",        "Smiling",
      "Straight_Hair",    "Wavy_Hair",         "Wearing_Earrings", "Wearing_Hat",
      "Wearing_Lipstick", "Wearing_Necklace",  "Wearing_Necktie",  "Young"};
  return names;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

bool is_blank(std::string_view line) { return split_ws(line).empty(); }

}  // namespace

AttributeManifest parse_attribute_manifest(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || is_blank(lines[0])) throw ParseError(Errc::bad_value, 1, "missing record count");

  const auto count_tokens = split_ws(lines[0]);
  long long declared = -1;
  auto [ptr, ec] = std::from_chars(count_tokens[0].data(), count_tokens[0].data() + count_tokens[0].size(), declared);
  if (ec != std::errc() || ptr != count_tokens[0].data() + count_tokens[0].size() || declared < 0 ||
      count_tokens.size() != 1)
    throw ParseError(Errc::bad_value, 1, "record count is not a non-negative integer");

  AttributeManifest manifest;
  if (lines.size() >= 2) {
    for (auto name : split_ws(lines[1])) manifest.attribute_names.emplace_back(name);
  }
  if (manifest.attribute_names.empty() && declared > 0)
    throw ParseError(Errc::wrong_column_count, 2, "missing attribute name line");
  std::set<std::string> unique(manifest.attribute_names.begin(), manifest.attribute_names.end());
  if (unique.size() != manifest.attribute_names.size())
    throw ParseError(Errc::bad_value, 2, "duplicate attribute name");

  const std::size_t width = manifest.attribute_names.size();
  for (std::size_t li = 2; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    if (is_blank(lines[li])) continue;
    const auto tokens = split_ws(lines[li]);
    if (manifest.records.size() == static_cast<std::size_t>(declared))
      throw ParseError(Errc::count_mismatch, line_no,
                       "more records than the declared count " + std::to_string(declared));
    if (tokens.size() != width + 1)
      throw ParseError(Errc::wrong_column_count, line_no,
                       "expected " + std::to_string(width) + " values, found " + std::to_string(tokens.size() - 1));
    AttributeManifest::Record record;
    record.image_id = std::string(tokens[0]);
    record.values.reserve(width);
    for (std::size_t k = 1; k < tokens.size(); ++k) {
      if (tokens[k] == "1") {
        record.values.push_back(1);
      } else if (tokens[k] == "-1") {
        record.values.push_back(-1);
      } else {
        throw ParseError(Errc::bad_value, line_no,
                         "value '" + std::string(tokens[k]) + "' is not 1 or -1");
      }
    }
    manifest.records.push_back(std::move(record));
  }
  if (manifest.records.size() != static_cast<std::size_t>(declared))
    throw ParseError(Errc::count_mismatch, lines.size(),
                     "declared " + std::to_string(declared) + " records, found " +
                         std::to_string(manifest.records.size()));
  return manifest;
}

AttributeManifest read_attribute_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "cannot read manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_attribute_manifest(ss.str());
}

std::string serialize_attribute_manifest(const AttributeManifest& manifest) {
  std::ostringstream os;
  os << manifest.records.size() << '\n';
  for (std::size_t i = 0; i < manifest.attribute_names.size(); ++i)
    os << (i ? " " : "") << manifest.attribute_names[i];
  os << '\n';
  for (const auto& r : manifest.records) {
    os << r.image_id;
    for (int v : r.values) os << ' ' << v;
    os << '\n';
  }
  return os.str();
}

void write_attribute_manifest(const AttributeManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot write manifest " + path.string());
  out << serialize_attribute_manifest(manifest);
  if (!out) fail(Errc::io_failure, "cannot write manifest " + path.string());
}

SplitSpec split_dataset(const AttributeManifest& manifest, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(manifest.records.size());
  for (const auto& r : manifest.records) ids.push_back(r.image_id);
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const std::size_t n = ids.size();
  const std::size_t n_train = (7 * n) / 10;
  const std::size_t n_eval = n / 10;
  SplitSpec split;
  split.seed = seed;
  split.train_ids.assign(ids.begin(), ids.begin() + n_train);
  split.eval_ids.assign(ids.begin() + n_train, ids.begin() + n_train + n_eval);
  split.test_ids.assign(ids.begin() + n_train + n_eval, ids.end());
  return split;
}

Image augment(const Image& img, std::uint64_t seed, const AugmentConfig& policy) {
  if (img.range() != RangeTag::unit) fail(Errc::range_mismatch, "augment expects a unit-range image");
  Rng rng(seed);
  const bool flip = uniform01(rng) < policy.p_flip;
  const double angle = policy.max_rotation_deg > 0.0
                           ? uniform(rng, -policy.max_rotation_deg, policy.max_rotation_deg)
                           : 0.0;
  Image out = flip ? horizontal_flip(img) : img;
  return rotate(out, angle);
}

}  // namespace biasforge
