#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "biasforge/checkpoint.hpp"
#include "biasforge/cli.hpp"
#include "biasforge/config.hpp"
#include "biasforge/metrics.hpp"
#include "biasforge/pipeline.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using biasforge::AttributeManifest;
using biasforge::Errc;

namespace skin = biasforge::skin;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "biasforge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = biasforge::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

const char* kSmallSkin =
    "skin.image_size = 16\n"
    "skin.z_dim = 4\n"
    "skin.encoder_channels = 4,8\n"
    "skin.feature_dim = 8\n"
    "skin.fc_channels = 4\n"
    "skin.deconv1_channels = 8\n"
    "skin.deconv2_channels = 4\n"
    "skin.critic_channels = 4,8\n"
    "skin.batch_size = 4\n"
    "skin.n_critic = 2\n";

// Synthetic dataset plus a config pointing at it.
fs::path fixture_project(const std::string& name, int count, const std::string& extra = "") {
  const auto dir = testing_support::scratch_dir(name);
  biasforge::cmd_synth(dir, count, 16, 4);
  write(dir / "run.cfg", std::string("run.seed = 11\ndata.manifest = list_attr.txt\ndata.image_root = images\n") +
                             kSmallSkin + extra);
  return dir;
}

AttributeManifest ten_with_one_positive() {
  AttributeManifest m;
  m.attribute_names = {"Eyeglasses", "Smiling"};
  for (int i = 0; i < 10; ++i) m.records.push_back({"o" + std::to_string(i) + ".png", {i == 0 ? 1 : -1, 1}});
  return m;
}

std::vector<std::string> synthetic_ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("synth/Eyeglasses/s" + std::to_string(i) + ".png");
  return out;
}

skin::SkinGanConfig small_skin() {
  const auto cfg = biasforge::parse_config(kSmallSkin).skin;
  cfg.validate();
  return cfg;
}

std::vector<biasforge::Image> faces(int n) {
  std::vector<biasforge::Image> out;
  for (int i = 0; i < n; ++i) {
    biasforge::SyntheticFaceSpec spec;
    spec.skin_rgb = {0.3 + 0.1 * i, 0.25 + 0.07 * i, 0.2 + 0.05 * i};
    spec.noise_sigma = 0.02;
    spec.seed = i;
    out.push_back(biasforge::generate_synthetic_face(spec, 16, 16));
  }
  return out;
}

}  // namespace

TEST(Seeds, StageSeedsDistinctAndStable) {
  const auto& stages = biasforge::stage_names();
  for (std::uint64_t master : {0ull, 1ull, 42ull, ~0ull}) {
    std::set<std::uint64_t> seen;
    for (const auto& s : stages) {
      EXPECT_EQ(biasforge::derive_seed(master, s), biasforge::derive_seed(master, s));
      seen.insert(biasforge::derive_seed(master, s));
    }
    EXPECT_EQ(seen.size(), stages.size());
  }
  EXPECT_NE(biasforge::derive_seed(1, "train-skin"), biasforge::derive_seed(2, "train-skin"));
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(biasforge::exit_code_for(Errc::config_error), 1);
  EXPECT_EQ(biasforge::exit_code_for(Errc::missing_file), 2);
  EXPECT_EQ(biasforge::exit_code_for(Errc::hash_mismatch), 2);
  EXPECT_EQ(biasforge::exit_code_for(Errc::non_finite), 3);
}

TEST(Assembly, SyntheticNeededSolvesExactly) {
  EXPECT_EQ(biasforge::synthetic_needed(1, 10, 0.5), 8);
  EXPECT_EQ(biasforge::synthetic_needed(5, 10, 0.5), 0);
  EXPECT_EQ(biasforge::synthetic_needed(0, 3, 1.0), std::nullopt);
  EXPECT_EQ(biasforge::synthetic_needed(3, 3, 1.0), 0);
  for (long total = 1; total <= 40; ++total)
    for (long p = 0; p <= total; ++p)
      for (double rate : {0.05, 0.2, 1.0 / 3.0, 0.5, 0.9}) {
        const auto k = biasforge::synthetic_needed(p, total, rate);
        ASSERT_TRUE(k.has_value());
        long brute = 0;
        while (static_cast<double>(p + brute) < rate * static_cast<double>(total + brute)) ++brute;
        ASSERT_EQ(*k, brute) << p << "/" << total << " at " << rate;
      }
}

TEST(Assembly, AddsEightForTenPercentFixture) {
  const auto orig = ten_with_one_positive();
  const auto r = biasforge::assemble_balanced(orig, {"Eyeglasses"}, {{"Eyeglasses", synthetic_ids(20)}}, 0.5);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].added, 8);
  EXPECT_EQ(r.rows[0].available, 20);
  EXPECT_DOUBLE_EQ(r.rows[0].original_rate, 0.1);
  EXPECT_DOUBLE_EQ(r.rows[0].achieved_rate, 0.5);
  ASSERT_EQ(r.manifest.records.size(), 18u);
  for (std::size_t i = 0; i < orig.records.size(); ++i) EXPECT_EQ(r.manifest.records[i], orig.records[i]);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Assembly, EdgeCases) {
  const auto orig = ten_with_one_positive();
  EXPECT_EQ(biasforge::assemble_balanced(orig, {}, {{"Eyeglasses", synthetic_ids(5)}}, 0.5).manifest, orig);
  EXPECT_EQ(biasforge::assemble_balanced(orig, {"Eyeglasses"}, {}, 0.1).manifest, orig);
  const auto none = biasforge::assemble_balanced(orig, {"Eyeglasses"}, {}, 0.5);
  EXPECT_EQ(none.manifest, orig);
  EXPECT_EQ(none.warnings.size(), 1u);
  const auto few = biasforge::assemble_balanced(orig, {"Eyeglasses"}, {{"Eyeglasses", synthetic_ids(3)}}, 0.5);
  EXPECT_EQ(few.rows[0].added, 3);
  EXPECT_DOUBLE_EQ(few.rows[0].achieved_rate, 4.0 / 13.0);
  EXPECT_EQ(few.warnings.size(), 1u);
  EXPECT_THROW(biasforge::assemble_balanced(orig, {"Bald"}, {}, 0.5), biasforge::Error);
}

TEST(Assembly, NeverLowersPositiveCounts) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    AttributeManifest m;
    m.attribute_names = {"A", "B", "C"};
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i)
      m.records.push_back({"r" + std::to_string(i), {rng() % 5 ? -1 : 1, rng() % 2 ? -1 : 1, rng() % 3 ? -1 : 1}});
    std::map<std::string, std::vector<std::string>> pool;
    for (const char* a : {"A", "C"})
      for (int i = 0; i < static_cast<int>(rng() % 25); ++i) pool[a].push_back(std::string(a) + std::to_string(i));
    const auto r = biasforge::assemble_balanced(m, {"A", "C"}, pool, 0.4);
    ASSERT_GE(r.manifest.records.size(), m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) ASSERT_EQ(r.manifest.records[i], m.records[i]);
    for (int a = 0; a < 3; ++a) {
      long before = 0, after = 0;
      for (const auto& rec : m.records) before += rec.values[a] == 1;
      for (const auto& rec : r.manifest.records) after += rec.values[a] == 1;
      ASSERT_GE(after, before);
    }
  }
}

TEST(Config, ReorderingKeepsHash) {
  const auto a = biasforge::parse_config("run.seed = 3\nskin.z_dim = 8\nbias.threshold = 0.1\n");
  const auto b = biasforge::parse_config("# comment\nbias.threshold=0.1\n\nskin.z_dim = 8   \nrun.seed = 3\n");
  EXPECT_EQ(biasforge::config_hash(a), biasforge::config_hash(b));
  EXPECT_EQ(biasforge::canonical_config(a), biasforge::canonical_config(b));
  const auto c = biasforge::parse_config("run.seed = 4\nskin.z_dim = 8\nbias.threshold = 0.1\n");
  EXPECT_NE(biasforge::config_hash(a), biasforge::config_hash(c));
  EXPECT_EQ(biasforge::config_hash(a, "skin"), biasforge::config_hash(c, "skin"));
}

TEST(Config, TrainingLengthDoesNotChangeModelHash) {
  const auto a = biasforge::parse_config("skin.steps = 10\n");
  const auto b = biasforge::parse_config("skin.steps = 500\n");
  EXPECT_EQ(biasforge::config_hash(a, "skin"), biasforge::config_hash(b, "skin"));
  EXPECT_NE(biasforge::config_hash(a), biasforge::config_hash(b));
  EXPECT_NE(biasforge::config_hash(a, "skin"),
            biasforge::config_hash(biasforge::parse_config("skin.z_dim = 7\n"), "skin"));
}

TEST(Config, ErrorsCarryLineNumbers) {
  auto failure = [](const std::string& text) {
    try {
      biasforge::parse_config(text);
    } catch (const biasforge::ParseError& e) {
      return std::make_pair(e.line(), std::string(e.what()));
    }
    return std::make_pair(std::size_t{0}, std::string());
  };
  const auto unknown = failure("run.seed = 1\n\nskin.lamda_gp = 10\n");
  EXPECT_EQ(unknown.first, 3u);
  EXPECT_NE(unknown.second.find("skin.lamda_gp"), std::string::npos);
  EXPECT_EQ(failure("run.seed = 1\nrun.seed = 2\n").first, 2u);
  EXPECT_EQ(failure("skin.z_dim = eight\n").first, 1u);
  EXPECT_EQ(failure("just words\n").first, 1u);
  EXPECT_EQ(failure("skin.critic = mlp\n").first, 1u);
}

TEST(Config, EveryKeyRoundTripsThroughCanonicalText) {
  const auto keys = biasforge::config_keys();
  EXPECT_EQ(std::set<std::string>(keys.begin(), keys.end()).size(), keys.size());
  biasforge::PipelineConfig cfg;
  const auto text = biasforge::canonical_config(cfg);
  EXPECT_EQ(biasforge::canonical_config(biasforge::parse_config(text)), text);
}

TEST(Config, LoadResolvesPathsAgainstConfigDirectory) {
  const auto dir = testing_support::scratch_dir("config_paths");
  write(dir / "a.cfg", "data.manifest = list.txt\ndata.image_root = /abs/images\n");
  const auto cfg = biasforge::load_config(dir / "a.cfg");
  EXPECT_EQ(cfg.manifest, dir / "list.txt");
  EXPECT_EQ(cfg.image_root, fs::path("/abs/images"));
  write(dir / "b.cfg", "\nbogus.key = 1\n");
  try {
    biasforge::load_config(dir / "b.cfg");
    FAIL();
  } catch (const biasforge::Error& e) {
    EXPECT_EQ(e.code(), Errc::config_error);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus.key"), std::string::npos);
  }
}

TEST(Checkpoint, SerializeRoundTrip) {
  biasforge::Checkpoint c;
  c.put("w", std::vector<float>{1.5f, -2.0f, 3.25f});
  c.put("moments", std::vector<double>{0.1, 1e-300});
  c.put_text("note", "a = b\nmultiline");
  c.put("empty", std::vector<float>{});
  const auto back = biasforge::deserialize_checkpoint(biasforge::serialize_checkpoint(c));
  EXPECT_EQ(back, c);
  EXPECT_THROW(back.floats("moments"), biasforge::Error);
  EXPECT_THROW(back.text("absent"), biasforge::Error);
  const auto bytes = biasforge::serialize_checkpoint(c);
  EXPECT_THROW(biasforge::deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), biasforge::Error);
}

TEST(Checkpoint, ManifestRoundTrip) {
  const biasforge::CheckpointManifest m{"skin", 123, 40, "00ff00ff00ff00ff", 0.25, -1.5};
  EXPECT_EQ(biasforge::parse_checkpoint_manifest(biasforge::format_checkpoint_manifest(m)), m);
  const auto dir = testing_support::scratch_dir("ckpt_manifest");
  biasforge::Checkpoint c;
  c.put("x", std::vector<float>{1.0f});
  biasforge::save_checkpoint(c, m, dir / "skin.ckpt");
  EXPECT_EQ(biasforge::read_checkpoint_manifest(dir / "skin.ckpt"), m);
  EXPECT_EQ(biasforge::read_checkpoint(dir / "skin.ckpt"), c);
}

TEST(Checkpoint, ParameterLoadChecksSizes) {
  biasforge::nn::ParameterSet<float> a, b;
  biasforge::Rng rng(1);
  biasforge::nn::make_linear(a, "fc", 3, 2, rng);
  biasforge::nn::make_linear(b, "fc", 4, 2, rng);
  biasforge::Checkpoint c;
  biasforge::store_parameters(c, "m.", a);
  EXPECT_THROW(biasforge::load_parameters(c, "m.", b), biasforge::Error);
  EXPECT_THROW(biasforge::load_parameters(c, "other.", a), biasforge::Error);
}

TEST(Resume, SkinCheckpointReproducesUninterruptedRun) {
  auto cfg = small_skin();
  cfg.seed = 17;
  skin::ImagePoolSource source(faces(5), 16, true);
  skin::SkinTrainState straight(cfg);
  std::vector<skin::SkinDiagnostics> expected;
  for (int i = 0; i < 10; ++i) expected.push_back(skin::train_step(straight, source));

  skin::SkinTrainState first(cfg);
  for (int i = 0; i < 5; ++i) skin::train_step(first, source);
  const auto bytes = biasforge::serialize_checkpoint(biasforge::skin_checkpoint(first));
  skin::SkinGanConfig other = cfg;
  other.seed = 99;
  skin::SkinTrainState resumed(other);
  biasforge::restore_skin(resumed, biasforge::deserialize_checkpoint(bytes));
  for (int i = 5; i < 10; ++i) {
    const auto d = skin::train_step(resumed, source);
    EXPECT_EQ(d.iteration, expected[i].iteration);
    EXPECT_EQ(d.critic_loss, expected[i].critic_loss) << i;
    EXPECT_EQ(d.generator_loss, expected[i].generator_loss) << i;
    EXPECT_EQ(d.mean_grad_norm, expected[i].mean_grad_norm) << i;
  }
  EXPECT_EQ(biasforge::skin_checkpoint(resumed), biasforge::skin_checkpoint(straight));
}

TEST(Resume, ErganCheckpointReproducesUninterruptedRun) {
  biasforge::ergan::ErganConfig cfg;
  cfg.image_size = 16;
  cfg.encoder_channels = {2, 2, 2, 2};
  cfg.decoder_channels = 2;
  cfg.disc_channels = {2, 4};
  cfg.batch_size = 2;
  cfg.seed = 4;
  biasforge::ergan::CompositePairSource source(faces(4), 16);
  biasforge::ergan::ErganTrainState straight(cfg), first(cfg), resumed(cfg);
  std::vector<double> expected;
  for (int i = 0; i < 10; ++i) expected.push_back(biasforge::ergan::train_step(straight, source).generator_loss);
  for (int i = 0; i < 5; ++i) biasforge::ergan::train_step(first, source);
  biasforge::restore_ergan(resumed, biasforge::ergan_checkpoint(first));
  for (int i = 5; i < 10; ++i) EXPECT_EQ(biasforge::ergan::train_step(resumed, source).generator_loss, expected[i]);
}

TEST(PairsManifest, ParsesAndReportsLines) {
  const auto pairs = biasforge::parse_pairs_manifest("# header\n\na.png,/abs/b.png,skin\r\nc.png,d.png,enhanced\n",
                                                     "/base");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].generated, fs::path("/base/a.png"));
  EXPECT_EQ(pairs[0].reference, fs::path("/abs/b.png"));
  EXPECT_EQ(pairs[0].line, 3u);
  EXPECT_EQ(pairs[1].category, "enhanced");
  try {
    biasforge::parse_pairs_manifest("a.png,b.png,skin\na.png,b.png,hats\n", "/");
    FAIL();
  } catch (const biasforge::ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(biasforge::parse_pairs_manifest("a.png,b.png\n", "/"), biasforge::ParseError);
}

TEST(Cli, HelpForEverySubcommand) {
  for (const char* cmd : {"analyze", "train-skin", "train-ergan", "train-enhance", "generate", "enhance", "evaluate",
                          "assemble", "synth"}) {
    const auto r = cli({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.out.find("--out"), std::string::npos) << cmd;
  }
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({"analyze", "--config", "x.cfg", "--out", "o", "--frobnicate"}).code, 1);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"analyze", "--out", "o"}).code, 1);
  EXPECT_EQ(cli({"transmogrify"}).code, 1);
}

TEST(Cli, UnknownConfigKeyIsNamed) {
  const auto dir = testing_support::scratch_dir("cli_badkey");
  write(dir / "run.cfg", "run.seed = 1\nskin.lamda = 3\n");
  const auto r = cli({"analyze", "--config", (dir / "run.cfg").string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("skin.lamda"), std::string::npos);
}

TEST(Cli, EmptyManifestNamesThePath) {
  const auto dir = testing_support::scratch_dir("cli_empty");
  AttributeManifest empty;
  empty.attribute_names = {"Eyeglasses"};
  biasforge::write_attribute_manifest(empty, dir / "empty_attr.txt");
  write(dir / "run.cfg", "data.manifest = empty_attr.txt\ndata.image_root = .\n");
  const auto r = cli({"analyze", "--config", (dir / "run.cfg").string(), "--out", (dir / "out").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("empty_attr.txt"), std::string::npos);
}

TEST(Cli, AnalyzeFixtureIsDeterministic) {
  const auto dir = fixture_project("cli_analyze", 20);
  const auto cfg = (dir / "run.cfg").string();
  ASSERT_EQ(cli({"analyze", "--config", cfg, "--out", (dir / "a").string()}).code, 0);
  ASSERT_EQ(cli({"analyze", "--config", cfg, "--out", (dir / "b").string()}).code, 0);
  const auto text = slurp(dir / "a" / "bias_report.txt");
  EXPECT_EQ(text, slurp(dir / "b" / "bias_report.txt"));
  EXPECT_EQ(slurp(dir / "a" / "attribute_rates.csv"), slurp(dir / "b" / "attribute_rates.csv"));
  // lround(0.1 * 20) = 2 faces carry each of Eyeglasses and Pale_Skin
  const auto flagged = biasforge::read_flagged_attributes(dir / "a" / "bias_report.txt");
  EXPECT_NE(std::find(flagged.begin(), flagged.end(), "Eyeglasses"), flagged.end());
  EXPECT_NE(std::find(flagged.begin(), flagged.end(), "Pale_Skin"), flagged.end());
  EXPECT_TRUE(fs::exists(dir / "a" / "run_manifest.txt"));
}

TEST(Cli, EvaluateReportsAndNamesBadLines) {
  const auto dir = testing_support::scratch_dir("cli_evaluate");
  using biasforge::Image;
  using biasforge::RangeTag;
  biasforge::save_image(Image::filled(16, 16, 3, RangeTag::unit, 0.5), dir / "half.png");
  biasforge::save_image(Image::filled(16, 16, 3, RangeTag::unit, 0.25), dir / "quarter.png");
  write(dir / "pairs.csv", "half.png,quarter.png,skin\nhalf.png,half.png,enhanced\n");
  write(dir / "run.cfg", "evaluate.pairs = pairs.csv\n");
  const auto r = cli({"evaluate", "--config", (dir / "run.cfg").string(), "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = biasforge::read_report_csv(dir / "out" / "metrics_report.csv");
  for (const auto& row : report.rows) {
    if (row.category == "skin" && row.metric == biasforge::Metric::psnr) {
      // 0.5 and 0.25 survive 8-bit storage as 128/255 and 64/255
      const double d = 64.0 / 255.0;
      EXPECT_NEAR(row.mean, 10.0 * std::log10(1.0 / (d * d)), 1e-5);
    }
    if (row.category == "enhanced" && row.metric == biasforge::Metric::ssim) EXPECT_NEAR(row.mean, 1.0, 1e-9);
    if (row.category == "enhanced" && row.metric == biasforge::Metric::psnr) EXPECT_EQ(row.excluded_infinite, 1);
  }
  write(dir / "bad.csv", "half.png,quarter.png,skin\n\nhalf.png,missing.png,skin\n");
  const auto bad = cli({"evaluate", "--config", (dir / "run.cfg").string(), "--out", (dir / "out2").string(),
                        "--input", (dir / "bad.csv").string()});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("line 3"), std::string::npos);
}

TEST(Cli, TrainGenerateAndHashGuard) {
  const auto dir = fixture_project("cli_train", 12, "skin.steps = 3\nskin.checkpoint_interval = 2\nskin.augment = false\n");
  const auto cfg = (dir / "run.cfg").string();
  const auto train = cli({"train-skin", "--config", cfg, "--out", (dir / "train").string()});
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_TRUE(fs::exists(dir / "train" / "skin_step2.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "train" / "skin.ckpt"));
  EXPECT_NE(train.out.find("iteration=3"), std::string::npos);
  EXPECT_NE(train.out.find("L_D="), std::string::npos);

  const auto ckpt = (dir / "train" / "skin.ckpt").string();
  const auto gen = cli({"generate", "--config", cfg, "--out", (dir / "gen").string(), "--checkpoint", ckpt, "--input",
                        (dir / "images").string()});
  ASSERT_EQ(gen.code, 0) << gen.err;
  EXPECT_EQ(biasforge::list_images(dir / "gen").size(), 12u);
  const auto again = cli({"generate", "--config", cfg, "--out", (dir / "gen2").string(), "--checkpoint", ckpt,
                          "--input", (dir / "images").string()});
  ASSERT_EQ(again.code, 0);
  for (const auto& f : biasforge::list_images(dir / "gen")) EXPECT_EQ(slurp(f), slurp(dir / "gen2" / f.filename()));

  write(dir / "changed.cfg", slurp(dir / "run.cfg") + "skin.lambda_gp = 5\n");
  const auto changed = (dir / "changed.cfg").string();
  const auto refused = cli({"generate", "--config", changed, "--out", (dir / "gen3").string(), "--checkpoint", ckpt,
                            "--input", (dir / "images").string()});
  EXPECT_NE(refused.code, 0);
  EXPECT_NE(refused.err.find("hash"), std::string::npos);
  const auto forced = cli({"generate", "--config", changed, "--out", (dir / "gen3").string(), "--checkpoint", ckpt,
                           "--input", (dir / "images").string(), "--override-hash"});
  EXPECT_EQ(forced.code, 0) << forced.err;
  EXPECT_NE(forced.out.find("warning"), std::string::npos);
}

TEST(Cli, AssembleUsesTaggedSyntheticDirs) {
  const auto dir = fixture_project("cli_assemble", 10,
                                   "assemble.synthetic_dirs = synth\nassemble.bias_report = report.txt\n");
  write(dir / "report.txt", "flagged_attributes = Eyeglasses\n");
  ASSERT_EQ(biasforge::read_flagged_attributes(dir / "report.txt"), std::vector<std::string>{"Eyeglasses"});
  fs::create_directories(dir / "synth" / "Eyeglasses");
  for (int i = 0; i < 20; ++i)
    biasforge::save_image(biasforge::Image::filled(16, 16, 3, biasforge::RangeTag::unit, 0.5),
                          dir / "synth" / "Eyeglasses" / ("s" + std::to_string(100 + i) + ".png"));
  const auto r = cli({"assemble", "--config", (dir / "run.cfg").string(), "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = biasforge::read_attribute_manifest(dir / "out" / "balanced_manifest.txt");
  // 10 faces with lround(0.1 * 10) = 1 wearing glasses need 8 more
  EXPECT_EQ(m.records.size(), 18u);
  EXPECT_EQ(m.records.back().image_id, "../synth/Eyeglasses/s107.png");
  EXPECT_NE(slurp(dir / "out" / "assembly_report.txt").find("added 8"), std::string::npos);
}
