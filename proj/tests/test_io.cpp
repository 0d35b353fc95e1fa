#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <limits>
#include <random>

#include "eqface/checkpoint.hpp"
#include "eqface/config.hpp"
#include "eqface/csv_io.hpp"
#include "eqface/errors.hpp"
#include "oracles.hpp"

using namespace eqface;

TEST_CASE("doubles round-trip through text") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int i = 0; i < 2000; ++i) {
    double v;
    const std::uint64_t b = bits(rng);
    std::memcpy(&v, &b, sizeof v);
    if (!std::isfinite(v)) continue;
    CHECK(parse_double(format_double(v), "t") == v);
  }
  CHECK(parse_double(format_double(0.1), "t") == 0.1);
  CHECK(parse_double(" 2.5", "t") == 2.5);
  CHECK_THROWS_AS(parse_double("abc", "t"), FormatError);
  CHECK_THROWS_AS(parse_double("1.5x", "t"), FormatError);
  CHECK_THROWS_AS(parse_double("", "t"), FormatError);
}

TEST_CASE("dataset csv round trip") {
  GenConfig g;
  g.n_classes = 3;
  g.samples_per_class = 4;
  g.d_in = 5;
  g.d = 3;
  const Dataset d = generate(g);
  const std::string text = dataset_to_csv(d.samples);
  CHECK(text.rfind("sample_id,label,sigma_gt,x_0,x_1,x_2,x_3,x_4\n", 0) == 0);
  const auto back = dataset_from_csv(text);
  REQUIRE(back.size() == d.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].x == d.samples[i].x);
    CHECK(back[i].label == d.samples[i].label);
    CHECK(back[i].sigma_gt == d.samples[i].sigma_gt);
    CHECK(back[i].sample_id == d.samples[i].sample_id);
  }
  CHECK(dataset_to_csv(back) == text);
}

TEST_CASE("csv errors") {
  CHECK_THROWS_AS(dataset_from_csv("id,label,sigma_gt,x_0\n1,0,0.1,2\n"), FormatError);
  CHECK_THROWS_AS(dataset_from_csv("sample_id,label,sigma_gt,x_0\n1,0,0.1\n"), FormatError);
  CHECK_THROWS_AS(dataset_from_csv("sample_id,label,sigma_gt,x_0\n1,zero,0.1,2\n"),
                  FormatError);
  CHECK_THROWS_AS(features_from_csv("identity,order,q,f_0\n1,0,0.5,1\n"), FormatError);
  CHECK(features_from_csv("identity,order,s,f_0\n").empty());
  CHECK_THROWS_AS(read_text_file("/nonexistent/path/x.csv"), Error);
}

TEST_CASE("feature csv round trip") {
  std::mt19937_64 rng(2);
  std::vector<FeatureRecord> recs;
  for (int i = 0; i < 10; ++i) {
    recs.push_back({oracle::random_unit(rng, 4), 0.05 * (i + 1), i % 3, 10 - i});
  }
  const auto back = features_from_csv(features_to_csv(recs));
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].f == recs[i].f);
    CHECK(back[i].s == recs[i].s);
    CHECK(back[i].identity == recs[i].identity);
    CHECK(back[i].order == recs[i].order);
  }
  // CRLF line endings and blank lines are tolerated.
  const auto crlf = features_from_csv("identity,order,s,f_0,f_1\r\n\r\n1,2,0.5,0.6,0.8\r\n");
  REQUIRE(crlf.size() == 1);
  CHECK(crlf[0].f(1) == 0.8);
}

TEST_CASE("quality table and log csv") {
  const QualityTable t{{3, 0.25}, {1, 0.75}};
  const std::string text = quality_table_to_csv(t);
  CHECK(text == "sample_id,s\n1,0.75\n3,0.25\n");
  CHECK(quality_table_from_csv(text) == t);

  const std::vector<EpochLog> log{{"step1", 1, 0, 1.5, 0.1, 10, 2}};
  CHECK(training_log_to_csv(log) == "step,iteration,epoch,mean_loss,lr\nstep1,1,0,1.5,0.10000000000000001\n");
}

TEST_CASE("checkpoint round trip is bit-exact") {
  ModelDims d;
  d.d_in = 7;
  d.hidden = 5;
  d.d = 4;
  d.q = 2;
  d.n_classes = 3;
  Model m = init_model(d, 9);
  m.bn.running_mean << 0.1, -1e-300;
  m.bn.running_var << 3.0000000000000004, 1e10;
  m.freeze(Component::quality);
  const std::string text = checkpoint_to_string(m);
  CHECK(text.rfind("EQFACE-CKPT v1\n", 0) == 0);
  CHECK(text.find("tensor backbone.w1 shape=5x7 role=backbone frozen=0") != std::string::npos);
  CHECK(text.find("tensor quality.gamma shape=2x1 role=quality frozen=1") != std::string::npos);
  const Model back = checkpoint_from_string(text);
  CHECK(back == m);
  CHECK(back.frozen.quality);
  CHECK(checkpoint_to_string(back) == text);
}

TEST_CASE("checkpoint parsing is strict") {
  ModelDims d;
  d.d_in = 3;
  d.hidden = 2;
  d.d = 2;
  d.q = 1;
  d.n_classes = 2;
  const std::string good = checkpoint_to_string(init_model(d, 1));
  CHECK_THROWS_AS(checkpoint_from_string("EQFACE-CKPT v2\n" + good.substr(good.find('\n') + 1)),
                  FormatError);
  // Drop the last tensor block.
  const auto last = good.rfind("tensor ");
  CHECK_THROWS_AS(checkpoint_from_string(good.substr(0, last)), FormatError);
  // Duplicate a block, and trailing content after the end marker.
  const std::string block = good.substr(last, good.rfind("end\n") - last);
  CHECK_THROWS_AS(checkpoint_from_string(good.substr(0, last) + block + good.substr(last)),
                  FormatError);
  CHECK_THROWS_AS(checkpoint_from_string(good + block), FormatError);
  // Wrong shape.
  std::string bad = good;
  bad.replace(bad.find("shape=2x3"), 9, "shape=3x2");
  CHECK_THROWS_AS(checkpoint_from_string(bad), FormatError);
}

TEST_CASE("key-value parsing") {
  const auto kv = parse_key_values("# comment\nseed = 4\n\n  data.d = 8  # trailing\n");
  CHECK(kv.at("seed") == "4");
  CHECK(kv.at("data.d") == "8");
  CHECK_THROWS_AS(parse_key_values("seed = 1\nseed = 2\n"), InvalidConfig);
  CHECK_THROWS_AS(parse_key_values("nonsense.key = 1\n"), InvalidConfig);
  CHECK_THROWS_AS(parse_key_values("seed 1\n"), InvalidConfig);
}

TEST_CASE("typed run config") {
  const auto kv = parse_key_values(
      "seed = 7\n"
      "data.n_classes = 10\n"
      "data.noise_levels = 0.1:0.6, 0.5:0.2, 1.0:0.2\n"
      "model.d = 8\n"
      "loss.scale = 32\n"
      "step2.decay_epochs = 3, 6\n"
      "step2.epochs = 9\n"
      "train.qwdf_threshold = 0.2\n"
      "train.step3_restart = scratch\n"
      "eval.mode = progressive\n");
  const RunConfig rc = build_run_config(kv, {"seed"});
  CHECK(*rc.seed == 7);
  CHECK(rc.gen.n_classes == 10);
  REQUIRE(rc.gen.noise_levels.size() == 3);
  CHECK(rc.gen.noise_levels[1].sigma == 0.5);
  CHECK(rc.dims.d == 8);
  CHECK(rc.dims.q == 2);
  CHECK(rc.pipeline.loss.scale == 32);
  CHECK(rc.pipeline.step2.decay_epochs == std::vector<int>{3, 6});
  CHECK(rc.pipeline.step2.total_epochs == 9);
  CHECK(*rc.pipeline.qwdf_threshold == 0.2);
  CHECK(rc.pipeline.step3_restart == Step3Restart::scratch);
  CHECK(rc.eval.mode == "progressive");
  CHECK_FALSE(rc.split.has_value());
  // The master seed reaches every optimizer.
  CHECK(rc.pipeline.seed == 7);
  CHECK(rc.pipeline.step1.seed == 7);
  CHECK(rc.pipeline.step2.seed == 7);
  CHECK(rc.pipeline.step3.seed == 7);
}

TEST_CASE("run config errors name the key") {
  try {
    build_run_config(parse_key_values("seed = 1\n"), gen_required_keys());
    FAIL("expected InvalidConfig");
  } catch (const InvalidConfig& e) {
    CHECK(std::string(e.what()).find("data.n_classes") != std::string::npos);
  }
  CHECK_THROWS_AS(build_run_config(parse_key_values("data.d = x\n"), {}), InvalidConfig);
  CHECK_THROWS_AS(build_run_config(parse_key_values("train.step3_restart = maybe\n"), {}),
                  InvalidConfig);
  CHECK_THROWS_AS(build_run_config(parse_key_values("eval.fusion = blend\n"), {}),
                  InvalidConfig);
  CHECK_THROWS_AS(load_run_config("/nonexistent/c.cfg", {}), InvalidConfig);
}

TEST_CASE("seed falls back to the environment") {
  ::setenv("EQFACE_SEED", "31", 1);
  const RunConfig rc = build_run_config(parse_key_values(""), {"seed"});
  CHECK(*rc.seed == 31);
  ::unsetenv("EQFACE_SEED");
  CHECK_THROWS_AS(build_run_config(parse_key_values(""), {"seed"}), InvalidConfig);
}
