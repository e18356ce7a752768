#include "biasforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "biasforge/bias.hpp"
#include "biasforge/metrics.hpp"
#include "biasforge/random.hpp"

namespace biasforge {

namespace fs = std::filesystem;

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"analyze",  "split",    "augment",  "train-skin",
                                              "train-ergan", "train-enhance", "generate", "enhance",
                                              "evaluate", "assemble", "synth"};
  return names;
}

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::config_error:
    case Errc::invalid_argument: return 1;
    case Errc::non_finite: return 3;
    default: return 2;
  }
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(Errc::io_failure, "failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ostream& log_of(const RunContext& ctx) {
  static std::ostringstream sink;
  if (ctx.log) return *ctx.log;
  sink.str({});
  return sink;
}

void prepare_out(const RunContext& ctx) {
  if (ctx.out_dir.empty()) fail(Errc::config_error, "an output directory (--out) is required");
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  if (ec) fail(Errc::io_failure, "cannot create " + ctx.out_dir.string() + ": " + ec.message());
}

class RunRecord {
 public:
  RunRecord(const RunContext& ctx, std::string command)
      : ctx_(ctx), command_(std::move(command)), started_(utc_timestamp()) {
    prepare_out(ctx);
  }

  void finish() const {
    std::string text;
    text += "tool_version = " + std::string(kToolVersion) + "\n";
    text += "command = " + command_ + "\n";
    text += "config_hash = " + ctx_.config_text_hash + "\n";
    text += "master_seed = " + std::to_string(ctx_.config.seed) + "\n";
    for (const auto& stage : stage_names())
      text += "seed." + stage + " = " + std::to_string(derive_seed(ctx_.config.seed, stage)) + "\n";
    text += "started = " + started_ + "\n";
    text += "finished = " + utc_timestamp() + "\n";
    text += "outcome = ok\n";
    write_text(ctx_.out_dir / "run_manifest.txt", text);
  }

 private:
  const RunContext& ctx_;
  std::string command_;
  std::string started_;
};

AttributeManifest load_manifest(const PipelineConfig& cfg) {
  if (cfg.manifest.empty()) fail(Errc::config_error, "data.manifest is not set");
  return read_attribute_manifest(cfg.manifest);
}

fs::path image_path(const PipelineConfig& cfg, const std::string& id) {
  const fs::path p = cfg.image_root / id;
  if (!fs::exists(p)) fail(Errc::unresolved_id, "image id '" + id + "' not found under " + cfg.image_root.string());
  return p;
}

// Training split images, optionally restricted to records where `attribute` is -1.
std::vector<Image> training_images(const PipelineConfig& cfg, const std::string& exclude_attribute = {}) {
  const auto manifest = load_manifest(cfg);
  if (manifest.records.empty()) fail(Errc::empty_input, "manifest " + cfg.manifest.string() + " has no records");
  const auto split = split_dataset(manifest, cfg.split_seed);
  const int excl = exclude_attribute.empty() ? -1 : manifest.index_of(exclude_attribute);
  std::set<std::string> excluded;
  if (excl >= 0)
    for (const auto& r : manifest.records)
      if (r.values[excl] == 1) excluded.insert(r.image_id);
  std::vector<Image> out;
  for (const auto& id : split.train_ids)
    if (!excluded.count(id)) out.push_back(load_image(image_path(cfg, id)));
  if (out.empty()) fail(Errc::empty_input, "training split of " + cfg.manifest.string() + " has no usable images");
  return out;
}

void check_checkpoint_hash(const RunContext& ctx, const CheckpointManifest& m, const std::string& model) {
  if (m.model != model)
    fail(Errc::invalid_argument, "checkpoint " + ctx.checkpoint.string() + " holds a '" + m.model +
                                     "' model, expected '" + model + "'");
  const auto expected = config_hash(ctx.config, model);
  if (m.config_hash == expected) return;
  const std::string msg = "checkpoint config hash " + m.config_hash + " differs from current " + model +
                          " config hash " + expected;
  if (!ctx.override_hash) fail(Errc::hash_mismatch, msg + " (pass --override-hash to proceed)");
  log_of(ctx) << "warning: " << msg << "; proceeding under --override-hash\n";
}

std::string checkpoint_name(const std::string& model, std::int64_t iteration, bool final) {
  return final ? model + ".ckpt" : model + "_step" + std::to_string(iteration) + ".ckpt";
}

void print_diagnostics(std::ostream& log, const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) log << k << "=" << v << "\n";
}

}  // namespace

// ---- checkpoint glue --------------------------------------------------------------

Checkpoint skin_checkpoint(const skin::SkinTrainState& state) {
  Checkpoint c;
  store_parameters(c, "generator.", state.generator.params());
  store_parameters(c, "critic.", state.critic.params());
  store_adam(c, "adam_generator.", state.adam_generator);
  store_adam(c, "adam_critic.", state.adam_critic);
  c.put_text("rng", rng_state(state.rng));
  c.put_text("iteration", std::to_string(state.iteration));
  c.put_text("critic_steps", std::to_string(state.critic_steps));
  c.put_text("generator_steps", std::to_string(state.generator_steps));
  return c;
}

void restore_skin(skin::SkinTrainState& state, const Checkpoint& c) {
  load_parameters(c, "generator.", state.generator.params());
  load_parameters(c, "critic.", state.critic.params());
  state.adam_generator = load_adam<float>(c, "adam_generator.");
  state.adam_critic = load_adam<float>(c, "adam_critic.");
  restore_rng_state(state.rng, c.text("rng"));
  state.iteration = std::stoll(c.text("iteration"));
  state.critic_steps = std::stoll(c.text("critic_steps"));
  state.generator_steps = std::stoll(c.text("generator_steps"));
}

Checkpoint ergan_checkpoint(const ergan::ErganTrainState& state) {
  Checkpoint c;
  store_parameters(c, "generator.", state.generator.params());
  store_parameters(c, "discriminator.", state.discriminator.params());
  store_adam(c, "adam_generator.", state.adam_generator);
  store_adam(c, "adam_discriminator.", state.adam_discriminator);
  c.put_text("rng", rng_state(state.rng));
  c.put_text("iteration", std::to_string(state.iteration));
  return c;
}

void restore_ergan(ergan::ErganTrainState& state, const Checkpoint& c) {
  load_parameters(c, "generator.", state.generator.params());
  load_parameters(c, "discriminator.", state.discriminator.params());
  state.adam_generator = load_adam<float>(c, "adam_generator.");
  state.adam_discriminator = load_adam<float>(c, "adam_discriminator.");
  restore_rng_state(state.rng, c.text("rng"));
  state.iteration = std::stoll(c.text("iteration"));
}

Checkpoint enhance_checkpoint(const enhance::EnhanceTrainState& state) {
  Checkpoint c;
  store_parameters(c, "generator.", state.generator.params());
  store_parameters(c, "d1.", state.discriminators.d1.params());
  store_parameters(c, "d2.", state.discriminators.d2.params());
  store_adam(c, "adam_generator.", state.adam_generator);
  store_adam(c, "adam_d1.", state.adam_d1);
  store_adam(c, "adam_d2.", state.adam_d2);
  c.put_text("rng", rng_state(state.rng));
  c.put_text("iteration", std::to_string(state.iteration));
  return c;
}

void restore_enhance(enhance::EnhanceTrainState& state, const Checkpoint& c) {
  load_parameters(c, "generator.", state.generator.params());
  load_parameters(c, "d1.", state.discriminators.d1.params());
  load_parameters(c, "d2.", state.discriminators.d2.params());
  state.adam_generator = load_adam<float>(c, "adam_generator.");
  state.adam_d1 = load_adam<float>(c, "adam_d1.");
  state.adam_d2 = load_adam<float>(c, "adam_d2.");
  restore_rng_state(state.rng, c.text("rng"));
  state.iteration = std::stoll(c.text("iteration"));
}

// ---- commands -------------------------------------------------------------------------

void cmd_analyze(const RunContext& ctx) {
  RunRecord record(ctx, "analyze");
  const auto manifest = load_manifest(ctx.config);
  if (manifest.records.empty())
    fail(Errc::empty_input, "manifest " + ctx.config.manifest.string() + " has no records");
  const auto report = analyze_dataset(manifest, ctx.config.image_root, ctx.config.bias_threshold);
  write_text(ctx.out_dir / "bias_report.txt", format_bias_report(report));
  write_text(ctx.out_dir / "attribute_rates.csv", format_attribute_csv(report.stats));
  auto& log = log_of(ctx);
  log << "records=" << manifest.records.size() << "\n";
  log << "flagged_attributes=" << report.flagged_attributes.size() << "\n";
  log << "flagged_tone_bins=" << report.flagged_tone_bins.size() << "\n";
  record.finish();
}

namespace {

template <typename State, typename Step, typename Save>
void run_training(const RunContext& ctx, const std::string& model, State& state, const TrainSchedule& schedule,
                  Step step, Save save) {
  auto& log = log_of(ctx);
  std::vector<std::pair<std::string, std::string>> last;
  while (state.iteration < schedule.steps) {
    last = step();
    const bool at_interval = schedule.checkpoint_interval > 0 && state.iteration % schedule.checkpoint_interval == 0;
    if (at_interval && state.iteration < schedule.steps)
      save(ctx.out_dir / checkpoint_name(model, state.iteration, false));
  }
  save(ctx.out_dir / checkpoint_name(model, state.iteration, true));
  log << "model=" << model << "\n";
  log << "iteration=" << state.iteration << "\n";
  print_diagnostics(log, last);
}

}  // namespace

void cmd_train_skin(const RunContext& ctx) {
  RunRecord record(ctx, "train-skin");
  auto cfg = ctx.config.skin;
  cfg.seed = derive_seed(ctx.config.seed, "train-skin");
  skin::SkinTrainState state(cfg);
  if (!ctx.checkpoint.empty()) {
    check_checkpoint_hash(ctx, read_checkpoint_manifest(ctx.checkpoint), "skin");
    restore_skin(state, read_checkpoint(ctx.checkpoint));
  }
  skin::ImagePoolSource source(training_images(ctx.config), cfg.image_size, ctx.config.skin_augment);
  const auto hash = config_hash(ctx.config, "skin");
  std::deque<double> norms;
  double sum_norms = 0.0;
  skin::SkinDiagnostics diag;
  run_training(
      ctx, "skin", state, ctx.config.skin_schedule,
      [&] {
        diag = skin::train_step(state, source);
        norms.push_back(diag.mean_grad_norm);
        sum_norms += diag.mean_grad_norm;
        if (norms.size() > 50) {
          sum_norms -= norms.front();
          norms.pop_front();
        }
        return std::vector<std::pair<std::string, std::string>>{
            {"L_D", fmt(diag.critic_loss)},
            {"L_G", fmt(diag.generator_loss)},
            {"gradient_penalty", fmt(diag.gradient_penalty)},
            {"wasserstein_estimate", fmt(diag.wasserstein_estimate)},
            {"mean_grad_norm", fmt(diag.mean_grad_norm)},
            {"mean_grad_norm_last50", fmt(sum_norms / static_cast<double>(norms.size()))}};
      },
      [&](const fs::path& path) {
        save_checkpoint(skin_checkpoint(state),
                        {"skin", cfg.seed, state.iteration, hash, diag.critic_loss, diag.generator_loss}, path);
      });
  record.finish();
}

void cmd_train_ergan(const RunContext& ctx) {
  RunRecord record(ctx, "train-ergan");
  auto cfg = ctx.config.ergan;
  cfg.seed = derive_seed(ctx.config.seed, "train-ergan");
  ergan::ErganTrainState state(cfg);
  if (!ctx.checkpoint.empty()) {
    check_checkpoint_hash(ctx, read_checkpoint_manifest(ctx.checkpoint), "ergan");
    restore_ergan(state, read_checkpoint(ctx.checkpoint));
  }
  ergan::CompositePairSource source(training_images(ctx.config, "Eyeglasses"), cfg.image_size);
  const auto hash = config_hash(ctx.config, "ergan");
  ergan::ErganDiagnostics diag;
  run_training(
      ctx, "ergan", state, ctx.config.ergan_schedule,
      [&] {
        diag = ergan::train_step(state, source);
        return std::vector<std::pair<std::string, std::string>>{{"L_D", fmt(diag.discriminator_loss)},
                                                                {"L_G", fmt(diag.generator_loss)},
                                                                {"adversarial", fmt(diag.adversarial)},
                                                                {"identity", fmt(diag.identity)},
                                                                {"reconstruction", fmt(diag.reconstruction)},
                                                                {"mask_min", fmt(diag.mask_min)},
                                                                {"mask_max", fmt(diag.mask_max)}};
      },
      [&](const fs::path& path) {
        save_checkpoint(ergan_checkpoint(state),
                        {"ergan", cfg.seed, state.iteration, hash, diag.discriminator_loss, diag.generator_loss}, path);
      });
  record.finish();
}

void cmd_train_enhance(const RunContext& ctx) {
  RunRecord record(ctx, "train-enhance");
  auto cfg = ctx.config.enhance;
  cfg.seed = derive_seed(ctx.config.seed, "train-enhance");
  enhance::EnhanceTrainState state(cfg);
  if (!ctx.checkpoint.empty()) {
    check_checkpoint_hash(ctx, read_checkpoint_manifest(ctx.checkpoint), "enhance");
    restore_enhance(state, read_checkpoint(ctx.checkpoint));
  }
  const enhance::EnhancePairSource source(cfg, training_images(ctx.config), derive_seed(cfg.seed, "degrade"));
  const auto hash = config_hash(ctx.config, "enhance");
  enhance::EnhanceDiagnostics diag;
  run_training(
      ctx, "enhance", state, ctx.config.enhance_schedule,
      [&] {
        diag = enhance::train_step(state, source);
        return std::vector<std::pair<std::string, std::string>>{{"L_D", fmt(diag.discriminator_loss)},
                                                                {"L_G", fmt(diag.generator_loss)},
                                                                {"adversarial_d1", fmt(diag.adversarial_d1)},
                                                                {"adversarial_d2", fmt(diag.adversarial_d2)},
                                                                {"content", fmt(diag.content)}};
      },
      [&](const fs::path& path) {
        save_checkpoint(enhance_checkpoint(state),
                        {"enhance", cfg.seed, state.iteration, hash, diag.discriminator_loss, diag.generator_loss},
                        path);
      });
  record.finish();
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(Errc::missing_file, "directory " + dir.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::string csv_path(const fs::path& p) { return p.generic_string(); }

fs::path absolute_normal(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

void run_inference(const RunContext& ctx, const std::string& required_model) {
  if (ctx.checkpoint.empty()) fail(Errc::config_error, "--checkpoint is required");
  const auto manifest = read_checkpoint_manifest(ctx.checkpoint);
  const std::string model = required_model.empty() ? manifest.model : required_model;
  check_checkpoint_hash(ctx, manifest, model);
  const auto blob = read_checkpoint(ctx.checkpoint);

  fs::path input = ctx.input;
  if (input.empty()) input = ctx.config.generate_input_dir;
  if (input.empty()) input = ctx.config.image_root;
  if (input.empty()) fail(Errc::config_error, "no input directory (use --input or generate.input_dir)");
  const auto files = list_images(input);
  if (files.empty()) fail(Errc::empty_input, "no images in " + input.string());

  const fs::path dest = ctx.config.generate_tag.empty() ? ctx.out_dir : ctx.out_dir / ctx.config.generate_tag;
  fs::create_directories(dest);
  auto rel = [&](const fs::path& p) { return csv_path(p.lexically_relative(ctx.out_dir)); };
  auto& log = log_of(ctx);
  Rng init(0);

  if (model == "skin") {
    skin::Generator<float> gen(ctx.config.skin, init);
    load_parameters(blob, "generator.", gen.params());
    const auto seed = derive_seed(ctx.config.seed, "generate");
    std::string pairs;
    for (const auto& f : files) {
      const Image img = load_image(f);
      const Image out = skin::recolor(gen, ctx.config.skin, img, derive_seed(seed, f.filename().string()));
      const fs::path target = dest / (f.stem().string() + "_skin.png");
      save_image(out, target);
      pairs += rel(target) + "," + csv_path(absolute_normal(f)) + ",skin\n";
    }
    write_text(ctx.out_dir / "pairs_skin.csv", pairs);
  } else if (model == "ergan") {
    ergan::Generator<float> gen(ctx.config.ergan, init);
    load_parameters(blob, "generator.", gen.params());
    std::string vs_input, vs_clean;
    for (const auto& f : files) {
      const Image img = load_image(f);
      const auto result = ergan::remove_glasses(gen, ctx.config.ergan, img);
      const fs::path target = dest / (f.stem().string() + "_noglasses.png");
      save_image(result.output, target);
      save_image(result.mask, dest / (f.stem().string() + "_mask.png"));
      vs_input += rel(target) + "," + csv_path(absolute_normal(f)) + ",eyeglasses\n";
      if (!ctx.config.generate_clean_dir.empty()) {
        const fs::path clean = ctx.config.generate_clean_dir / f.filename();
        if (fs::exists(clean)) vs_clean += rel(target) + "," + csv_path(absolute_normal(clean)) + ",eyeglasses\n";
      }
    }
    write_text(ctx.out_dir / "pairs_eyeglasses_vs_input.csv", vs_input);
    if (!ctx.config.generate_clean_dir.empty()) write_text(ctx.out_dir / "pairs_eyeglasses_vs_clean.csv", vs_clean);
  } else if (model == "enhance") {
    enhance::DoubleTailGenerator<float> gen(ctx.config.enhance, init);
    load_parameters(blob, "generator.", gen.params());
    std::string pairs;
    for (const auto& f : files) {
      const Image out = enhance::enhance_image(ctx.config.enhance, gen, load_image(f));
      const fs::path target = dest / (f.stem().string() + ".png");
      save_image(out, target);
      pairs += rel(target) + "," + csv_path(absolute_normal(f)) + ",enhanced\n";
    }
    write_text(ctx.out_dir / "pairs_enhanced.csv", pairs);
  } else {
    fail(Errc::corrupt_data, "checkpoint names unknown model '" + model + "'");
  }
  log << "model=" << model << "\n";
  log << "outputs=" << files.size() << "\n";
}

}  // namespace

void cmd_generate(const RunContext& ctx) {
  RunRecord record(ctx, "generate");
  run_inference(ctx, "");
  record.finish();
}

void cmd_enhance(const RunContext& ctx) {
  RunRecord record(ctx, "enhance");
  run_inference(ctx, "enhance");
  record.finish();
}

std::vector<EvalPair> parse_pairs_manifest(std::string_view text, const fs::path& base) {
  std::vector<EvalPair> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3) throw ParseError(Errc::wrong_column_count, line_no, "expected generated,reference,category");
    if (!is_metric_category(cells[2]))
      throw ParseError(Errc::bad_value, line_no, "unknown category '" + cells[2] + "'");
    EvalPair p;
    p.generated = fs::path(cells[0]).is_relative() ? base / cells[0] : fs::path(cells[0]);
    p.reference = fs::path(cells[1]).is_relative() ? base / cells[1] : fs::path(cells[1]);
    p.category = cells[2];
    p.line = line_no;
    out.push_back(std::move(p));
  }
  return out;
}

void cmd_evaluate(const RunContext& ctx) {
  RunRecord record(ctx, "evaluate");
  const fs::path pairs_path = ctx.input.empty() ? ctx.config.evaluate_pairs : ctx.input;
  if (pairs_path.empty()) fail(Errc::config_error, "no pairs manifest (use --input or evaluate.pairs)");
  const auto pairs = parse_pairs_manifest(read_text(pairs_path), pairs_path.parent_path());
  if (pairs.empty()) fail(Errc::empty_input, "pairs manifest " + pairs_path.string() + " lists no pairs");
  std::vector<PairScore> scores;
  for (const auto& p : pairs) {
    try {
      scores.push_back(score_pair(load_image(p.generated), load_image(p.reference), p.category));
    } catch (const Error& e) {
      throw Error(e.code(), pairs_path.string() + " line " + std::to_string(p.line) + ": " + e.what());
    }
  }
  const auto report = aggregate(scores);
  write_report_csv(report, ctx.out_dir / "metrics_report.csv");
  log_of(ctx) << format_report_csv(report);
  record.finish();
}

std::optional<long> synthetic_needed(long positives, long total, double rate) {
  if (positives < 0 || total < positives) fail(Errc::invalid_argument, "synthetic_needed: bad counts");
  if (!(rate > 0.0 && rate <= 1.0)) fail(Errc::invalid_argument, "synthetic_needed: rate outside (0, 1]");
  auto ok = [&](long k) {
    return static_cast<double>(positives + k) >= rate * static_cast<double>(total + k);
  };
  if (ok(0)) return 0L;
  if (rate >= 1.0) return std::nullopt;
  long k = static_cast<long>(std::ceil((rate * total - positives) / (1.0 - rate)));
  k = std::max(k, 0L);
  while (!ok(k)) ++k;
  while (k > 0 && ok(k - 1)) --k;
  return k;
}

AssemblyResult assemble_balanced(const AttributeManifest& original, const std::vector<std::string>& flagged,
                                 const std::map<std::string, std::vector<std::string>>& synthetic, double rate) {
  AssemblyResult result;
  result.manifest = original;
  auto& m = result.manifest;
  const std::size_t width = m.attribute_names.size();
  auto positives = [&](int idx) {
    long p = 0;
    for (const auto& r : m.records) p += r.values[idx] == 1;
    return p;
  };
  for (const auto& attr : flagged) {
    const int idx = m.index_of(attr);
    if (idx < 0) fail(Errc::unresolved_id, "flagged attribute '" + attr + "' is not in the manifest");
    const long p = positives(idx);
    const long n = static_cast<long>(m.records.size());
    AssemblyRow row;
    row.attribute = attr;
    row.original_rate = n ? static_cast<double>(p) / n : 0.0;
    const auto it = synthetic.find(attr);
    const std::vector<std::string> empty;
    const auto& pool = it == synthetic.end() ? empty : it->second;
    row.available = static_cast<long>(pool.size());
    const auto need = synthetic_needed(p, n, rate);
    const long want = need ? *need : row.available;
    row.added = std::min(want, row.available);
    if (want > 0 && row.available == 0)
      result.warnings.push_back("no synthetic images available for " + attr);
    else if (!need || *need > row.available)
      result.warnings.push_back(attr + ": target rate not reachable with " + std::to_string(row.available) +
                                " synthetic images");
    for (long i = 0; i < row.added; ++i) {
      AttributeManifest::Record rec;
      rec.image_id = pool[static_cast<std::size_t>(i)];
      rec.values.assign(width, -1);
      rec.values[idx] = 1;
      m.records.push_back(std::move(rec));
    }
    result.rows.push_back(row);
  }
  const double n = static_cast<double>(m.records.size());
  for (auto& row : result.rows) row.achieved_rate = n > 0 ? positives(m.index_of(row.attribute)) / n : 0.0;
  return result;
}

std::string format_assembly_report(const AssemblyResult& result, double rate) {
  std::string out;
  out += "target_rate = " + fmt(rate) + "\n";
  out += "records = " + std::to_string(result.manifest.records.size()) + "\n";
  for (const auto& row : result.rows) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s = original_rate %.6f, available %ld, added %ld, achieved_rate %.6f\n",
                  row.attribute.c_str(), row.original_rate, row.available, row.added, row.achieved_rate);
    out += buf;
  }
  for (const auto& w : result.warnings) out += "warning = " + w + "\n";
  return out;
}

void cmd_assemble(const RunContext& ctx) {
  RunRecord record(ctx, "assemble");
  const auto& cfg = ctx.config;
  const auto manifest = load_manifest(cfg);
  fs::path report = cfg.bias_report;
  if (report.empty()) report = ctx.out_dir / "bias_report.txt";
  const auto flagged = read_flagged_attributes(report);

  const fs::path root = cfg.image_root.empty() ? fs::path(".") : cfg.image_root;
  const fs::path root_abs = fs::weakly_canonical(fs::absolute(root));
  std::map<std::string, std::vector<std::string>> synthetic;
  for (const auto& dir : cfg.synthetic_dirs)
    for (const auto& attr : flagged) {
      const fs::path sub = dir / attr;
      if (!fs::is_directory(sub)) continue;
      for (const auto& f : list_images(sub))
        synthetic[attr].push_back(fs::weakly_canonical(fs::absolute(f)).lexically_relative(root_abs).generic_string());
    }

  const auto result = assemble_balanced(manifest, flagged, synthetic, cfg.target_rate);
  write_attribute_manifest(result.manifest, ctx.out_dir / "balanced_manifest.txt");
  const auto text = format_assembly_report(result, cfg.target_rate);
  write_text(ctx.out_dir / "assembly_report.txt", text);
  auto& log = log_of(ctx);
  for (const auto& w : result.warnings) log << "warning: " << w << "\n";
  log << text;
  record.finish();
}

void cmd_synth(const fs::path& out_dir, int count, int size, std::uint64_t seed) {
  if (count < 1 || size < 16) fail(Errc::invalid_argument, "synth needs count >= 1 and size >= 16");
  fs::create_directories(out_dir / "images");
  const auto manifest = write_fixture_dataset(out_dir / "images", count, size, derive_seed(seed, "synth"));
  write_attribute_manifest(manifest, out_dir / "list_attr.txt");
}

}  // namespace biasforge
