#include <doctest.h>

#include <fstream>

#include "graphclip/config.hpp"

using namespace graphclip;

TEST_CASE("defaults build valid module configs") {
  const Json cfg = default_config();
  const auto p = pretrain_config(cfg);
  CHECK(p.optimizer.lr == 1e-5);
  CHECK(p.optimizer.weight_decay == 1e-5);
  CHECK(p.perturbation.epsilon == 1e-2);
  CHECK(p.perturbation.steps == 3);
  CHECK(encoder_config(cfg).layers == 2);
  CHECK(prompt_tune_config(cfg).optimizer.lr == 1e-4);
  CHECK(theorem_config(cfg).samples == 100000);
  CHECK(llm_config(cfg).max_tokens == 500);
  CHECK(make_text_encoder(cfg)->dim() == 16);
  CHECK_FALSE(gradcheck_options(cfg).corrupt_tensor.has_value());
}

TEST_CASE("presets replace the custom sizes") {
  Json cfg = default_config();
  apply_override(cfg, "encoder.preset", "base");
  const auto e = encoder_config(cfg);
  CHECK(e.layers == 12);
  CHECK(e.hidden == 1024);
}

TEST_CASE("overrides are typed by the existing value") {
  Json cfg = default_config();
  apply_override(cfg, "pretrain.epochs", "7");
  apply_override(cfg, "pretrain.lr", "2e-3");
  apply_override(cfg, "pretrain.adversary", "false");
  apply_override(cfg, "paths.graph", "g.tsv");
  CHECK(cfg["pretrain"]["epochs"] == 7);
  CHECK(cfg["pretrain"]["lr"] == 2e-3);
  CHECK(cfg["pretrain"]["adversary"] == false);
  CHECK(cfg["paths"]["graph"] == "g.tsv");
  CHECK_THROWS_AS(apply_override(cfg, "pretrain.nope", "1"), UsageError);
  CHECK_THROWS_AS(apply_override(cfg, "pretrain", "1"), UsageError);
  CHECK_THROWS_AS(apply_override(cfg, "pretrain.epochs", "7x"), UsageError);
  CHECK_THROWS_AS(apply_override(cfg, "pretrain.adversary", "maybe"), UsageError);
}

TEST_CASE("config files reject unknown keys and type changes") {
  const auto path = std::filesystem::temp_directory_path() / "graphclip_cfg.json";
  std::ofstream(path) << R"({"pretrain": {"epochs": 3, "lr": 1}, "theory": {"zeta": 1}})";
  const Json cfg = load_config(path, {{"pretrain.epochs", "4"}});
  CHECK(cfg["pretrain"]["epochs"] == 4);  // command line wins
  CHECK(cfg["pretrain"]["lr"].is_number_float());
  CHECK(cfg["theory"]["zeta"] == 1.0);

  std::ofstream(path) << R"({"pretrain": {"epoch": 3}})";
  CHECK_THROWS_AS(load_config(path, {}), ValidationError);
  std::ofstream(path) << R"({"pretrain": {"epochs": "three"}})";
  CHECK_THROWS_AS(load_config(path, {}), ValidationError);
  std::ofstream(path) << R"({"pretrain": {"epochs": 2.5}})";
  CHECK_THROWS_AS(load_config(path, {}), ValidationError);
  std::ofstream(path) << "{not json";
  CHECK_THROWS_AS(load_config(path, {}), ParseError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path, {}), UsageError);
}

TEST_CASE("invalid values surface as validation errors") {
  Json cfg = default_config();
  apply_override(cfg, "pretrain.norm", "l1");
  CHECK_THROWS_AS(pretrain_config(cfg), ValidationError);
  cfg = default_config();
  apply_override(cfg, "text.kind", "table");
  CHECK_THROWS_AS(make_text_encoder(cfg), UsageError);
  cfg = default_config();
  apply_override(cfg, "sampler.restart_prob", "0");
  CHECK_THROWS_AS(sampler_config(cfg), ValidationError);
}
