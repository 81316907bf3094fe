#include "gesturerep/run_config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace gesturerep;

namespace {

std::filesystem::path write_cfg(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_CASE("profile defaults") {
  const auto paper = make_run_config(Profile::Paper);
  CHECK(paper.train.batch_size == 128);
  CHECK(paper.train.max_epochs == 200);
  CHECK(paper.train.learning_rate == 1e-3);
  CHECK(paper.train.temperature == 0.1);
  CHECK(paper.probe.seeds == 100);

  const auto desk = make_run_config(Profile::Desk);
  CHECK(desk.train.batch_size == 32);
  CHECK(desk.train.max_epochs == 30);
  CHECK(desk.train.windows_per_gesture == 1);
  CHECK(desk.probe.seeds == 20);
  CHECK(parse_profile(to_string(Profile::Desk)) == Profile::Desk);
}

TEST_CASE("unknown keys and bad values are config errors") {
  auto cfg = make_run_config(Profile::Paper);
  CHECK_THROWS_AS(set_config_value(cfg, "train.learning_rte", "0.1"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "train.batch_size", "many"), ConfigError);
  set_config_value(cfg, "train.lr", "0.002");
  CHECK(cfg.train.learning_rate == 0.002);

  const auto bad = write_cfg("gesturerep_bad.cfg", "train.epochs = 3\nbogus.key = 1\n");
  CHECK_THROWS_AS(load_run_config(bad, std::nullopt), ConfigError);
  std::filesystem::remove(bad);
}

TEST_CASE("file values override the profile and the profile key is read first") {
  const auto p = write_cfg("gesturerep_good.cfg", "train.epochs = 7\nrun.profile = desk\n");
  CHECK(profile_in_file(p) == Profile::Desk);
  const auto cfg = load_run_config(p, std::nullopt);
  CHECK(cfg.profile == Profile::Desk);
  CHECK(cfg.train.max_epochs == 7);
  CHECK(cfg.train.batch_size == 32);
  const auto forced = load_run_config(p, Profile::Paper);
  CHECK(forced.train.batch_size == 128);
  std::filesystem::remove(p);
}

TEST_CASE("rendered config reloads to the same text") {
  auto cfg = make_run_config(Profile::Desk);
  cfg.propagate_seed(42);
  const auto text = render_run_config(cfg);
  CHECK(text.find("run.profile") != std::string::npos);
  const auto p = write_cfg("gesturerep_render.cfg", text);
  CHECK(render_run_config(load_run_config(p, std::nullopt)) == text);
  std::filesystem::remove(p);
  CHECK(documented_keys().size() > 20);
}
