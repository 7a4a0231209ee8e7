#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "kinface/cli/commands.hpp"

namespace fs = std::filesystem;
using namespace kinface;
using namespace kinface::cli;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("kinface_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small networks so a full pipeline runs in seconds.
RunConfig tiny(const fs::path& out) {
  RunConfig c;
  c.feature_dim = c.gene_dim = 8;
  c.encoder_widths = {4, 4, 4, 4};
  c.dz_widths = {8, 8};
  c.dimg_widths = {4, 4, 4};
  c.dnanet_hidden = {16, 16};
  c.dh_widths = {8, 8};
  c.batch_size = 4;
  c.caae_epochs = 2;
  c.dnanet_epochs = 3;
  c.train_families = 16;
  c.test_families = 4;
  c.output_dir = out.string();
  return c;
}

// Every file under `root` except the manifest, mapped to its bytes.
std::map<std::string, std::string> tree_without_manifest(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

void expect_config_error(const RunConfig& c, const std::string& field) {
  try {
    validate(c);
    ADD_FAILURE() << "expected a config error for " << field;
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
  }
}

// A trained tiny pipeline shared by the generate and evaluate tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("kinface_cli_pipeline_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    auto c = tiny(root_ / "data");
    cmd_synth_data(c);
    c.faces_dir = (root_ / "data" / "faces").string();
    c.output_dir = (root_ / "caae").string();
    cmd_train_caae(c);
    c.caae_checkpoint = (root_ / "caae" / "caae.ksnc").string();
    c.triplets = (root_ / "data" / "triplets.csv").string();
    c.output_dir = (root_ / "dna").string();
    cmd_train_dnanet(c);
    c.dnanet_checkpoint = (root_ / "dna" / "dnanet.ksnc").string();
    c.father_image = (root_ / "data" / "images" / "fam00000_father.png").string();
    c.mother_image = (root_ / "data" / "images" / "fam00000_mother.png").string();
    base_ = c;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static inline fs::path root_;
  static inline RunConfig base_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, DefaultsValidateAndRoundTrip) {
  const RunConfig c;
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(to_json(apply_json(RunConfig{}, to_json(c))), to_json(c));
  EXPECT_EQ(to_json(c)["config_version"], 1);
  EXPECT_EQ(to_json(c)["learning_rate"], 1e-4);
  EXPECT_EQ(to_json(c)["norm"], "L2");
}

TEST(Config, OverridesApplyFieldByField) {
  const auto c = apply_json(RunConfig{}, nlohmann::json::parse(R"({"batch_size": 8, "encoder_widths": [2,3,4,5], "norm": "L1"})"));
  EXPECT_EQ(c.batch_size, 8u);
  EXPECT_EQ(c.encoder_widths, (std::vector<std::size_t>{2, 3, 4, 5}));
  EXPECT_EQ(c.norm, "L1");
  EXPECT_EQ(c.feature_dim, 100u);
}

TEST(Config, TypeErrorsNameTheField) {
  auto expect_field = [](const char* doc, const std::string& field) {
    try {
      apply_json(RunConfig{}, nlohmann::json::parse(doc));
      ADD_FAILURE() << doc;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("'" + field + "'"), std::string::npos) << e.what();
    }
  };
  expect_field(R"({"batch_sise": 3})", "batch_sise");
  expect_field(R"({"batch_size": -3})", "batch_size");
  expect_field(R"({"batch_size": 2.5})", "batch_size");
  expect_field(R"({"norm": 2})", "norm");
  expect_field(R"({"encoder_widths": [4, 0, 4, 4]})", "encoder_widths");
}

TEST(Config, ValidationMessagesNameTheField) {
  RunConfig c;
  c.gene_dim = 50;
  expect_config_error(c, "gene_dim");
  c.allow_gene_dim_mismatch = true;
  EXPECT_NO_THROW(validate(c));

  c = RunConfig{};
  c.learning_rate = 0;
  expect_config_error(c, "learning_rate");
  c = RunConfig{};
  c.batch_size = 1;
  expect_config_error(c, "batch_size");
  c = RunConfig{};
  c.norm = "L3";
  expect_config_error(c, "norm");
  c = RunConfig{};
  c.siblings = 4;
  expect_config_error(c, "siblings");
  c.selection_mode = "mask";
  EXPECT_NO_THROW(validate(c));
  c = RunConfig{};
  c.child_gender = 2;
  expect_config_error(c, "child_gender");
  c = RunConfig{};
  c.config_version = 7;
  expect_config_error(c, "config_version");
}

TEST(Config, FlagValuesParse) {
  const auto& fields = config_fields();
  auto spec = [&](const std::string& n) {
    return *std::find_if(fields.begin(), fields.end(), [&](const FieldSpec& f) { return f.name == n; });
  };
  EXPECT_EQ(parse_flag_value(spec("age_sweep"), "10,20,30"), nlohmann::json::parse("[10,20,30]"));
  EXPECT_EQ(parse_flag_value(spec("allow_gene_dim_mismatch"), "true"), true);
  EXPECT_EQ(parse_flag_value(spec("learning_rate"), "0.001"), 0.001);
  EXPECT_EQ(parse_flag_value(spec("output_dir"), "a b"), "a b");
  try {
    parse_flag_value(spec("batch_size"), "-1");
    ADD_FAILURE();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("--batch-size"), std::string::npos);
  }
  EXPECT_THROW(parse_flag_value(spec("learning_rate"), "fast"), ConfigError);
  EXPECT_THROW(parse_flag_value(spec("allow_gene_dim_mismatch"), "maybe"), ConfigError);
}

TEST(Config, LoadsFromFile) {
  TempDir tmp;
  std::ofstream(tmp.path / "c.json") << R"({"config_version": 1, "caae_epochs": 3})";
  EXPECT_EQ(load_config(tmp.path / "c.json").caae_epochs, 3u);
  std::ofstream(tmp.path / "bad.json") << "{not json";
  EXPECT_THROW(load_config(tmp.path / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(tmp.path / "missing.json"), ConfigError);
}

// ---------------------------------------------------------------------------
// Manifest

TEST(Manifest, GitBlobHashMatchesGit) {
  EXPECT_EQ(git_blob_hash({}), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  const std::string hello = "hello world\n";
  EXPECT_EQ(git_blob_hash(std::span(reinterpret_cast<const std::uint8_t*>(hello.data()), hello.size())),
            "3b18e512dba79e4c8300dd08aeb37f8e728b8dad");
}

TEST(Manifest, ListsEveryArtifactWithChecksum) {
  TempDir tmp;
  RunConfig c;
  c.output_dir = (tmp.path / "run").string();
  auto run = open_run("test", c);
  write_text_file(tmp.path / "run" / "a.txt", "abc");
  run.add_artifact(tmp.path / "run" / "a.txt");
  write_text_file(tmp.path / "run" / "a.txt", "abcd");
  run.add_artifact(tmp.path / "run" / "a.txt");
  run.add_loss_row({{"epoch", 0}});
  run.write();

  const auto m = read_json(tmp.path / "run" / "manifest.json");
  EXPECT_EQ(m["command"], "test");
  ASSERT_EQ(m["artifacts"].size(), 2u);
  EXPECT_EQ(m["artifacts"][0]["path"], "config.json");
  EXPECT_EQ(m["artifacts"][1]["path"], "a.txt");
  EXPECT_EQ(m["artifacts"][1]["sha1"], git_blob_hash_file(tmp.path / "run" / "a.txt"));
  EXPECT_EQ(m["config"], to_json(c));
  EXPECT_EQ(read_json(tmp.path / "run" / "config.json"), to_json(c));
  EXPECT_TRUE(m.contains("started_utc") && m.contains("wall_seconds"));
}

// ---------------------------------------------------------------------------
// synth-data

TEST(SynthData, WritesRequestedFamiliesDeterministically) {
  TempDir tmp;
  auto c = tiny(tmp.path / "a");
  c.train_families = 8;
  c.test_families = 2;
  ASSERT_EQ(cmd_synth_data(c), 0);
  c.output_dir = (tmp.path / "b").string();
  ASSERT_EQ(cmd_synth_data(c), 0);

  const auto rows = lines_of(tmp.path / "a" / "triplets.csv");
  EXPECT_EQ(rows.size(), 11u);
  auto a = tree_without_manifest(tmp.path / "a");
  auto b = tree_without_manifest(tmp.path / "b");
  a.erase("config.json");
  b.erase("config.json");
  EXPECT_EQ(a, b);

  // Faces only for training families, named age_gender_race_rest.
  std::size_t faces = 0;
  for (const auto& e : fs::directory_iterator(tmp.path / "a" / "faces")) {
    ++faces;
    const auto id = e.path().filename().string();
    EXPECT_FALSE(data::is_test_family(id.substr(id.find("fam"), 8))) << id;
  }
  EXPECT_EQ(faces, 3u * 8u);

  const auto split = data::split_triplets(data::load_triplets(tmp.path / "a" / "triplets.csv"));
  EXPECT_EQ(split.train.size(), 8u);
  EXPECT_EQ(split.test.size(), 2u);
}

TEST(SynthData, ChildGenesComeFromAParent) {
  TempDir tmp;
  auto c = tiny(tmp.path);
  c.train_families = 5;
  c.test_families = 1;
  cmd_synth_data(c);
  const auto rows = lines_of(tmp.path / "genes.csv");
  ASSERT_EQ(rows.size(), 1u + 3u * 6u);
  for (std::size_t f = 0; f < 6; ++f) {
    auto fields = [&](std::size_t r) { return data::split(rows[1 + 3 * f + r], ','); };
    const auto fa = fields(0), mo = fields(1), ch = fields(2);
    ASSERT_EQ(ch[1], "child");
    const std::string mask = ch.back();
    ASSERT_EQ(mask.size(), c.true_gene_dim);
    for (std::size_t j = 0; j < c.true_gene_dim; ++j)
      EXPECT_EQ(ch[2 + j], mask[j] == '1' ? fa[2 + j] : mo[2 + j]);
  }
}

TEST(SynthData, InvalidConfigLeavesFilesystemAlone) {
  TempDir tmp;
  auto c = tiny(tmp.path / "never");
  c.batch_size = 1;
  EXPECT_THROW(cmd_synth_data(c), ConfigError);
  EXPECT_FALSE(fs::exists(tmp.path / "never"));
}

// ---------------------------------------------------------------------------
// Training commands

TEST(TrainCaae, RecordsBaselineAndIsDeterministic) {
  TempDir tmp;
  auto c = tiny(tmp.path / "data");
  c.train_families = 6;
  c.test_families = 1;
  cmd_synth_data(c);
  c.faces_dir = (tmp.path / "data" / "faces").string();
  c.output_dir = (tmp.path / "r1").string();
  cmd_train_caae(c);
  c.output_dir = (tmp.path / "r2").string();
  cmd_train_caae(c);

  EXPECT_EQ(slurp(tmp.path / "r1" / "caae.ksnc"), slurp(tmp.path / "r2" / "caae.ksnc"));
  const auto m = read_json(tmp.path / "r1" / "manifest.json");
  ASSERT_EQ(m["loss_table"].size(), c.caae_epochs + 1);
  EXPECT_EQ(m["loss_table"][0]["epoch"], 0);
  EXPECT_GT(m["loss_table"][0]["reconstruction"].get<double>(), 0.0);
  EXPECT_TRUE(m["loss_table"][1].contains("dz_prior"));
}

TEST(TrainCaae, EmptyDatasetIsAnError) {
  TempDir tmp;
  fs::create_directories(tmp.path / "faces");
  auto c = tiny(tmp.path / "out");
  c.faces_dir = (tmp.path / "faces").string();
  EXPECT_THROW(cmd_train_caae(c), std::runtime_error);
  c.faces_dir.clear();
  EXPECT_THROW(cmd_train_caae(c), ConfigError);
}

TEST_F(Pipeline, DnaNetRunKeepsEncoderFrozenAndCachesFeatures) {
  const auto m = read_json(root_ / "dna" / "manifest.json");
  const std::string before = m["inputs"][0]["sha1"];
  EXPECT_EQ(m["caae_checkpoint_sha1_after"], before);
  EXPECT_EQ(git_blob_hash_file(base_.caae_checkpoint), before);
  EXPECT_EQ(m["norm"]["default"], "L2");
  EXPECT_EQ(m["norm"]["configured"], base_.norm);

  const fs::path cache = root_ / "dna" / ("features_" + before.substr(0, 12) + ".ksnc");
  const auto ck = data::load_checkpoint(cache);
  for (const char* role : {"father", "mother", "child"}) {
    const auto* e = ck.find(role);
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->shape[1], base_.feature_dim);
    EXPECT_EQ(e->shape[0], base_.train_families);
  }
}

TEST_F(Pipeline, DnaNetRejectsMismatchedCheckpoint) {
  auto c = base_;
  c.encoder_widths = {4, 4, 4, 8};
  c.output_dir = (root_ / "mismatch").string();
  EXPECT_THROW(cmd_train_dnanet(c), data::CheckpointError);
}

// ---------------------------------------------------------------------------
// generate / evaluate / heritmap

TEST_F(Pipeline, GenerateIsByteIdenticalForFixedSeed) {
  auto c = base_;
  c.sampling_seed = 11;
  c.output_dir = (root_ / "g1").string();
  cmd_generate(c);
  c.output_dir = (root_ / "g2").string();
  cmd_generate(c);
  auto a = tree_without_manifest(root_ / "g1");
  auto b = tree_without_manifest(root_ / "g2");
  a.erase("config.json");
  b.erase("config.json");
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.count("child_seed11_age20_group3_g0_max.png")) << a.begin()->first;
}

TEST_F(Pipeline, SiblingsUseDistinctMasks) {
  auto c = base_;
  c.selection_mode = "mask";
  c.siblings = 4;
  c.output_dir = (root_ / "sib").string();
  cmd_generate(c);
  const auto out = read_json(root_ / "sib" / "outputs.json");
  ASSERT_EQ(out.size(), 4u);
  std::set<std::string> masks, files;
  for (const auto& o : out) {
    masks.insert(o["mask"].get<std::string>());
    files.insert(o["file"].get<std::string>());
  }
  EXPECT_EQ(masks.size(), 4u);
  EXPECT_EQ(files.size(), 4u);
}

TEST_F(Pipeline, AgeSweepWritesOneImagePerAge) {
  auto c = base_;
  c.age_sweep = {10, 20, 30};
  c.output_dir = (root_ / "sweep").string();
  cmd_generate(c);
  EXPECT_EQ(read_json(root_ / "sweep" / "outputs.json").size(), 3u);
}

TEST_F(Pipeline, GenerateRejectsBadInputs) {
  auto c = base_;
  c.child_age = -1;
  c.output_dir = (root_ / "bad").string();
  EXPECT_THROW(cmd_generate(c), ConfigError);
  c = base_;
  c.father_image = (root_ / "nope.png").string();
  c.output_dir = (root_ / "bad").string();
  EXPECT_THROW(cmd_generate(c), std::runtime_error);
}

TEST_F(Pipeline, EvaluateReportsFourPairTypesReproducibly) {
  auto c = base_;
  c.output_dir = (root_ / "e1").string();
  cmd_evaluate(c);
  c.output_dir = (root_ / "e2").string();
  cmd_evaluate(c);
  EXPECT_EQ(slurp(root_ / "e1" / "metrics.json"), slurp(root_ / "e2" / "metrics.json"));
  EXPECT_EQ(slurp(root_ / "e1" / "projection.csv"), slurp(root_ / "e2" / "projection.csv"));

  const auto m = read_json(root_ / "e1" / "metrics.json");
  for (const char* t : {"father-real", "mother-real", "father-generated", "mother-generated"}) {
    ASSERT_TRUE(m["verification"].contains(t)) << t;
    EXPECT_EQ(m["verification"][t]["pairs"], 2 * base_.test_families);
  }
  EXPECT_EQ(lines_of(root_ / "e1" / "metrics.csv").size(), 5u);
  EXPECT_EQ(lines_of(root_ / "e1" / "projection.csv").size(), 1 + 2 * base_.test_families);
}

TEST_F(Pipeline, EvaluateNeedsHeldOutFamilies) {
  const auto train_id = data::split_triplets(data::load_triplets(base_.triplets)).train.front().family_id;
  std::ofstream(root_ / "train_only.csv") << "family_id,father,mother,child,child_age,child_gender\n"
                                          << train_id << ",data/images/" << train_id << "_father.png,data/images/"
                                          << train_id << "_mother.png,data/images/" << train_id << "_child.png,5,1\n";
  auto c = base_;
  c.triplets = (root_ / "train_only.csv").string();
  c.output_dir = (root_ / "empty").string();
  try {
    cmd_evaluate(c);
    ADD_FAILURE();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("empty test set"), std::string::npos) << e.what();
  }
}

namespace {

const char* kFace = R"({"regions": {
  "eyes": [[10,10],[30,8],[50,12],[30,16]],
  "nose": [[30,20],[28,35],[33,40]],
  "mouth": [[18,50],[30,46],[42,50],[30,55]],
  "chin": [[5,40],[15,70],[30,78],[45,70],[55,40]]}})";

}  // namespace

TEST(Heritmap, IdenticalFilesGiveZeroReport) {
  TempDir tmp;
  std::ofstream(tmp.path / "face.json") << kFace;
  RunConfig c;
  c.father_landmarks = c.mother_landmarks = c.child_landmarks = (tmp.path / "face.json").string();
  c.output_dir = (tmp.path / "out").string();
  ASSERT_EQ(cmd_heritmap(c), 0);
  const auto rows = lines_of(tmp.path / "out" / "heritability.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "triplet,eyes,nose,mouth,chin");
  EXPECT_EQ(rows[1], "0,0,0,0,0");
  EXPECT_EQ(rows[2], "mean,0,0,0,0");
  const auto j = read_json(tmp.path / "out" / "heritability.json");
  EXPECT_EQ(j["mean"].size(), 4u);
}

TEST(Heritmap, ListInputAndStableOutput) {
  TempDir tmp;
  auto doc = nlohmann::json::parse(kFace);
  std::ofstream(tmp.path / "a.json") << doc;
  doc["regions"]["nose"] = nlohmann::json::parse("[[30,20],[20,35],[36,42]]");
  std::ofstream(tmp.path / "b.json") << doc;
  std::ofstream(tmp.path / "list.csv") << "father,mother,child\na.json,b.json,a.json\nb.json,b.json,a.json\n";
  RunConfig c;
  c.landmark_list = (tmp.path / "list.csv").string();
  c.output_dir = (tmp.path / "o1").string();
  cmd_heritmap(c);
  c.output_dir = (tmp.path / "o2").string();
  cmd_heritmap(c);
  EXPECT_EQ(slurp(tmp.path / "o1" / "heritability.csv"), slurp(tmp.path / "o2" / "heritability.csv"));
  const auto j = read_json(tmp.path / "o1" / "heritability.json");
  ASSERT_EQ(j["triplets"].size(), 2u);
  EXPECT_EQ(j["triplets"][0]["map"]["eyes"], 0.0);
  EXPECT_GT(j["triplets"][1]["map"]["nose"].get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(j["mean"]["nose"].get<double>(),
                   0.5 * (j["triplets"][0]["map"]["nose"].get<double>() + j["triplets"][1]["map"]["nose"].get<double>()));
}

TEST(Heritmap, RegionMismatchIsAnError) {
  TempDir tmp;
  std::ofstream(tmp.path / "a.json") << kFace;
  auto doc = nlohmann::json::parse(kFace);
  doc["regions"]["ear"] = doc["regions"]["nose"];
  std::ofstream(tmp.path / "b.json") << doc;
  RunConfig c;
  c.father_landmarks = c.child_landmarks = (tmp.path / "a.json").string();
  c.mother_landmarks = (tmp.path / "b.json").string();
  c.output_dir = (tmp.path / "out").string();
  EXPECT_THROW(cmd_heritmap(c), eval::LandmarkError);
}

// ---------------------------------------------------------------------------
// Binary exit codes

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KINFACE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Binary, ExitCodes) {
  TempDir tmp;
  const std::string out = (tmp.path / "out").string();
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("synth-data --out " + out + " --batch-size 1"), 2);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run_cli("synth-data --out " + out + " --no-such-flag 3"), 2);
  EXPECT_EQ(run_cli("generate --out " + out + " --caae missing.ksnc --dnanet missing.ksnc --father a.png --mother b.png"), 1);

  std::ofstream(tmp.path / "c.json") << R"({"train_families": 3, "test_families": 1, "feature_dim": 8, "gene_dim": 8})";
  EXPECT_EQ(run_cli("synth-data --config " + (tmp.path / "c.json").string() + " --out " + out), 0);
  EXPECT_EQ(lines_of(tmp.path / "out" / "triplets.csv").size(), 5u);
  EXPECT_EQ(read_json(tmp.path / "out" / "config.json")["train_families"], 3);
}
