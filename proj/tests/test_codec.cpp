#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "latcomp/codec.hpp"
#include "test_util.hpp"

using namespace latcomp;

namespace {

CodecConfig tiny_config() {
  CodecConfig cfg;
  cfg.in_channels = 1;
  cfg.base_channels = 8;
  cfg.stage_channels = {8, 8, 8};
  cfg.res_blocks_per_stage = 1;
  cfg.latent_channels = 2;
  cfg.downsample_stages = 2;
  cfg.norm_groups = 4;
  return cfg;
}

CodecModel untrained_model(const CodecConfig& cfg, uint64_t seed,
                           const std::vector<std::string>& variables) {
  CodecModel model;
  model.config = cfg;
  model.net = nn::VaeNet<float>(cfg, seed);
  for (const auto& v : variables) model.stats.by_variable[v] = {0.25, 2.0, 1};
  return model;
}

}  // namespace

TEST_CASE("latent grid dims follow ceil halving per downsampling stage") {
  CodecConfig cfg;  // defaults: 3 downsampling stages
  auto [lh, lw] = latent_dims(cfg, 4384, 6880);
  CHECK(lh == 548);
  CHECK(lw == 860);

  // Odd sizes round up at every stage.
  auto [oh, ow] = latent_dims(cfg, 65, 33);
  CHECK(oh == 9);
  CHECK(ow == 5);

  cfg.downsample_stages = 0;
  auto [sh, sw] = latent_dims(cfg, 17, 19);
  CHECK(sh == 17);
  CHECK(sw == 19);

  CHECK_THROWS_AS(latent_dims(cfg, 0, 8), DataError);
}

TEST_CASE("encode and decode preserve shape and field identity") {
  CodecConfig cfg = tiny_config();
  CodecModel model = untrained_model(cfg, 11, {"T2M"});
  GridField field = testutil::random_field(1, 16, 20, 3, {"T2M"});

  LatentRepr latent = encode(model, field);
  CHECK(latent.mu.shape == std::vector<int>{2, 4, 5});
  CHECK(latent.logvar.shape == std::vector<int>{2, 4, 5});
  CHECK(latent.source_height == 16);
  CHECK(latent.source_width == 20);
  CHECK(latent.variables == field.variables);
  CHECK(latent.lat_range == field.lat_range);
  CHECK(latent.lon_range == field.lon_range);
  CHECK(latent.timestamp == field.timestamp);
  CHECK(latent.codec_fingerprint == model.fingerprint());
  for (float v : latent.logvar.data) {
    CHECK(v >= -30.0f);
    CHECK(v <= 20.0f);
  }

  GridField out = decode(model, latent);
  CHECK(out.values.shape == field.values.shape);
  CHECK(out.variables == field.variables);
  CHECK(out.timestamp == field.timestamp);
  for (float v : out.values.data) CHECK(std::isfinite(v));

  // Decoding twice is deterministic.
  GridField again = decode(model, latent);
  CHECK(testutil::bitwise_equal(out.values, again.values));

  // Sampled decode with the same seed reproduces itself but differs from the
  // mean decode.
  GridField s1 = decode_sampled(model, latent, 77);
  GridField s2 = decode_sampled(model, latent, 77);
  CHECK(testutil::bitwise_equal(s1.values, s2.values));
  CHECK(!testutil::bitwise_equal(s1.values, out.values));
}

TEST_CASE("encode refuses wrong channel counts and indivisible dims") {
  CodecConfig cfg = tiny_config();
  CodecModel model = untrained_model(cfg, 11, {"T2M", "U10"});
  model.config.in_channels = 1;

  GridField two = testutil::random_field(2, 16, 16, 4, {"T2M", "U10"});
  CHECK_THROWS_AS(encode(model, two), DataError);

  GridField odd = testutil::random_field(1, 18, 16, 5, {"T2M"});
  CHECK_THROWS_AS(encode(model, odd), DataError);  // 18 % 4 != 0
}

TEST_CASE("decode rejects latents from a different codec configuration") {
  CodecConfig cfg = tiny_config();
  CodecModel model = untrained_model(cfg, 11, {"T2M"});
  GridField field = testutil::random_field(1, 16, 16, 6, {"T2M"});
  LatentRepr latent = encode(model, field);

  latent.codec_fingerprint ^= 0x1;
  CHECK_THROWS_AS(decode(model, latent), IntegrityError);
  CHECK_THROWS_AS(decode_sampled(model, latent, 1), IntegrityError);

  // Fingerprint zero means "unknown provenance" and is accepted.
  latent.codec_fingerprint = 0;
  CHECK_NOTHROW(decode(model, latent));
}

TEST_CASE("decode rejects latents from a retrained model with the same config") {
  CodecConfig cfg = tiny_config();
  CodecModel a = untrained_model(cfg, 11, {"T2M"});
  CodecModel b = untrained_model(cfg, 12, {"T2M"});
  // Same architecture, different weights: distinct identities.
  CHECK(a.fingerprint() != b.fingerprint());
  CHECK(a.config.fingerprint() == b.config.fingerprint());

  GridField field = testutil::random_field(1, 16, 16, 6, {"T2M"});
  LatentRepr latent = encode(a, field);
  CHECK_NOTHROW(decode(a, latent));
  CHECK_THROWS_AS(decode(b, latent), IntegrityError);
}

TEST_CASE("reconstruct handles indivisible dims by patching") {
  CodecConfig cfg = tiny_config();
  CodecModel model = untrained_model(cfg, 13, {"T2M"});

  // 37x41 is not divisible by 4; the round trip must still return the
  // original geometry.
  GridField odd = testutil::random_field(1, 37, 41, 7, {"T2M"});
  GridField out = reconstruct(model, odd, 16);
  CHECK(out.values.shape == odd.values.shape);
  CHECK(out.variables == odd.variables);
  for (float v : out.values.data) CHECK(std::isfinite(v));

  // Divisible and small enough: the direct path equals encode+decode.
  GridField even = testutil::random_field(1, 16, 16, 8, {"T2M"});
  GridField direct = reconstruct(model, even, 64);
  GridField manual = decode(model, encode(model, even));
  CHECK(testutil::bitwise_equal(direct.values, manual.values));

  CHECK_THROWS_AS(reconstruct(model, even, 2), ConfigError);  // max_patch < 4

  // A field shorter than one downsampling block cannot be patched.
  GridField sliver = testutil::random_field(1, 3, 41, 9, {"T2M"});
  CHECK_THROWS_AS(reconstruct(model, sliver, 16), DataError);
}

TEST_CASE("training runs two phases and records provenance") {
  CodecConfig cfg = tiny_config();
  TrainSchedule sched;
  sched.pretrain = {8, 2};
  sched.finetune = {16, 1};
  sched.batch_size = 2;
  sched.learning_rate = 1e-3;
  sched.seed = 42;

  std::vector<GridField> fields;
  for (int i = 0; i < 4; ++i) fields.push_back(testutil::random_field(1, 16, 16, 100 + i, {"T2M"}));

  int callbacks = 0;
  CodecModel model = train_vae(cfg, sched, fields, [&](const TrainRecord& r) {
    ++callbacks;
    CHECK(std::isfinite(r.loss));
  });

  REQUIRE(model.history.size() == 3);
  CHECK(callbacks == 3);
  CHECK(model.history[0].phase == 1);
  CHECK(model.history[1].phase == 1);
  CHECK(model.history[2].phase == 2);
  CHECK(model.history[0].epoch == 0);
  CHECK(model.history[1].epoch == 1);
  CHECK(model.history[2].epoch == 0);
  for (const auto& r : model.history) {
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(r.recon + cfg.kl_weight * r.kl).epsilon(1e-9));
  }

  CHECK(model.provenance.at("seed") == "42");
  CHECK(model.provenance.at("config_fingerprint").size() == 16);
  // The fine-tune phase must have continued from the pretrained weights.
  CHECK(model.provenance.at("phase1_final_params") ==
        model.provenance.at("phase2_initial_params"));

  // Normalization stats were fit on the data.
  CHECK(model.stats.by_variable.at("T2M").count == 4 * 16 * 16);

  // A subsequent encode of a training-sized field works.
  LatentRepr latent = encode(model, fields[0]);
  CHECK(latent.mu.channels() == cfg.latent_channels);
}

TEST_CASE("training is bitwise deterministic in the seed") {
  CodecConfig cfg = tiny_config();
  TrainSchedule sched;
  sched.pretrain = {8, 2};
  sched.finetune = {8, 1};
  sched.batch_size = 2;
  sched.learning_rate = 1e-3;
  sched.seed = 7;

  std::vector<GridField> fields;
  for (int i = 0; i < 3; ++i) fields.push_back(testutil::random_field(1, 8, 8, 200 + i, {"T2M"}));

  CodecModel a = train_vae(cfg, sched, fields);
  CodecModel b = train_vae(cfg, sched, fields);
  auto pa = a.net.params();
  auto pb = b.net.params();
  CHECK(nn::params_hash(pa) == nn::params_hash(pb));
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    // Bitwise, not approximately: the training loop must be fully
    // reproducible.
    CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(a.history[i].recon == b.history[i].recon);
    CHECK(a.history[i].kl == b.history[i].kl);
  }

  sched.seed = 8;
  CodecModel c = train_vae(cfg, sched, fields);
  CHECK(nn::params_hash(pa) != nn::params_hash(c.net.params()));
}

TEST_CASE("training writes checkpoints at the configured cadence") {
  testutil::TempDir dir("ckpt_cadence");
  CodecConfig cfg = tiny_config();
  TrainSchedule sched;
  sched.pretrain = {8, 2};
  sched.finetune = {8, 2};
  sched.batch_size = 2;
  sched.learning_rate = 1e-3;
  sched.seed = 1;
  sched.checkpoint_every = 2;
  sched.checkpoint_dir = dir.path.string();

  std::vector<GridField> fields{testutil::random_field(1, 8, 8, 300, {"T2M"})};
  train_vae(cfg, sched, fields);

  // Every second epoch within each phase: epoch index 1 of both phases.
  CHECK(std::filesystem::exists(dir.file("codec_p1_e1.ckpt")));
  CHECK(std::filesystem::exists(dir.file("codec_p2_e1.ckpt")));
  CHECK(!std::filesystem::exists(dir.file("codec_p1_e0.ckpt")));
}

TEST_CASE("non-finite loss aborts training") {
  CodecConfig cfg = tiny_config();
  TrainSchedule sched;
  sched.pretrain = {8, 1};
  sched.finetune = {8, 0};
  sched.batch_size = 1;
  sched.seed = 3;

  GridField bad = testutil::random_field(1, 8, 8, 400, {"T2M"});
  bad.values.data[10] = std::nanf("");
  CHECK_THROWS_AS(train_vae(cfg, sched, {bad}), TrainAbort);
  try {
    train_vae(cfg, sched, {bad});
  } catch (const TrainAbort& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    CHECK(e.last_checkpoint.empty());  // aborted before any checkpoint
  }
}

TEST_CASE("training validates schedule and data up front") {
  CodecConfig cfg = tiny_config();
  TrainSchedule sched;
  sched.pretrain = {8, 1};
  sched.finetune = {8, 0};

  CHECK_THROWS_AS(train_vae(cfg, sched, {}), DataError);

  // Patch not divisible by the downsampling factor.
  TrainSchedule bad_patch = sched;
  bad_patch.pretrain = {10, 1};
  std::vector<GridField> fields{testutil::random_field(1, 16, 16, 500, {"T2M"})};
  CHECK_THROWS_AS(train_vae(cfg, bad_patch, fields), ConfigError);

  // Patch larger than the training fields.
  TrainSchedule big_patch = sched;
  big_patch.pretrain = {32, 1};
  CHECK_THROWS_AS(train_vae(cfg, big_patch, fields), ConfigError);

  // Channel mismatch.
  std::vector<GridField> two{testutil::random_field(2, 16, 16, 501, {"A", "B"})};
  CHECK_THROWS_AS(train_vae(cfg, sched, two), DataError);
}

TEST_CASE("history csv round trips at full precision") {
  std::vector<TrainRecord> history{
      {1, 0, 0.123456789012345678, 0.1, 1e-17},
      {2, 3, 1.0 / 3.0, 2.0 / 7.0, 0.0},
  };
  std::string csv = history_to_csv(history);
  CHECK(csv.rfind("phase,epoch,loss,recon,kl\n", 0) == 0);

  auto parsed = history_from_csv(csv);
  REQUIRE(parsed.size() == 2);
  for (size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].phase == history[i].phase);
    CHECK(parsed[i].epoch == history[i].epoch);
    CHECK(parsed[i].loss == history[i].loss);  // bitwise via %.17g
    CHECK(parsed[i].recon == history[i].recon);
    CHECK(parsed[i].kl == history[i].kl);
  }

  CHECK_THROWS_AS(history_from_csv("no newline"), IoError);
  CHECK_THROWS_AS(history_from_csv("phase,epoch,loss,recon,kl\ngarbage row\n"), IoError);
}

TEST_CASE("config serialization round trips and validates") {
  CodecConfig cfg = tiny_config();
  cfg.recon_loss = "charbonnier_global";
  cfg.kl_weight = 3e-5;
  CodecConfig back = CodecConfig::from_json(cfg.to_json());
  CHECK(back.stage_channels == cfg.stage_channels);
  CHECK(back.recon_loss == cfg.recon_loss);
  CHECK(back.kl_weight == cfg.kl_weight);
  CHECK(back.fingerprint() == cfg.fingerprint());

  CodecConfig other = tiny_config();
  other.latent_channels = 3;
  CHECK(other.fingerprint() != cfg.fingerprint());

  CodecConfig bad = tiny_config();
  bad.stage_channels = {8, 8};  // must have downsample_stages + 1 entries
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = tiny_config();
  bad.recon_loss = "huber";
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = tiny_config();
  bad.norm_groups = 3;  // widths 8 not divisible by 3
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  CHECK_THROWS_AS(CodecConfig::from_json("{not json"), ConfigError);
}
