#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fixture.hpp"
#include "graphclip/pretrain.hpp"

using namespace graphclip;

namespace {

const fixture::Transfer& transfer() {
  static const fixture::Transfer t = fixture::make_transfer();
  return t;
}

std::vector<TrainingExample> head(std::size_t n) {
  const auto& d = transfer().data;
  return {d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n)};
}

Matrix summaries_of(std::span<const TrainingExample> batch) {
  Matrix u(batch.size(), batch.front().summary.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    std::copy(batch[i].summary.begin(), batch[i].summary.end(), u.row_span(i).begin());
  return u;
}

std::vector<EgoSubgraph> subgraphs_of(std::span<const TrainingExample> batch) {
  std::vector<EgoSubgraph> out;
  for (const auto& e : batch) out.push_back(e.subgraph);
  return out;
}

}  // namespace

TEST_CASE("L2 ascent steps are normalized and projected onto the ball") {
  PerturbationState st;
  st.config.epsilon = 0.01;
  st.config.steps = 3;
  st.blocks = {Matrix(2, 2)};
  const Matrix g{{3.0, 0.0}, {0.0, 4.0}};
  REQUIRE(st.ascend(0, g));
  // One step of size ε/3 along g/‖g‖.
  CHECK(st.blocks[0](0, 0) == doctest::Approx(0.01 / 3 * 0.6));
  CHECK(st.blocks[0](1, 1) == doctest::Approx(0.01 / 3 * 0.8));
  for (int i = 0; i < 10; ++i) st.ascend(0, g);
  CHECK(st.block_norm(0) <= 0.01 + 1e-12);
  CHECK(st.block_norm(0) == doctest::Approx(0.01));
  const Matrix before = st.blocks[0];
  CHECK_FALSE(st.ascend(0, Matrix(2, 2)));
  CHECK(st.blocks[0] == before);
  CHECK_THROWS_AS(st.ascend(0, Matrix(3, 2)), ShapeError);
}

TEST_CASE("Linf ascent takes sign steps and clamps") {
  PerturbationState st;
  st.config.epsilon = 0.01;
  st.config.steps = 2;
  st.config.norm = PerturbationNorm::Linf;
  st.blocks = {Matrix(1, 3)};
  const Matrix g{{2.0, -0.5, 0.0}};
  st.ascend(0, g);
  CHECK(st.blocks[0](0, 0) == doctest::Approx(0.005));
  CHECK(st.blocks[0](0, 1) == doctest::Approx(-0.005));
  CHECK(st.blocks[0](0, 2) == 0.0);
  for (int i = 0; i < 5; ++i) st.ascend(0, g);
  CHECK(st.block_norm(0) == doctest::Approx(0.01));
}

TEST_CASE("perturbation config validation") {
  PerturbationConfig c;
  CHECK(c.effective_step_size() == doctest::Approx(c.epsilon / 3));
  c.step_size = 0.5;
  CHECK(c.effective_step_size() == 0.5);
  c.epsilon = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.epsilon = 0.01;
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("AdamW matches a hand-computed first and second step") {
  OptimizerConfig cfg{0.1, 0.01, 0.9, 0.999, 1e-8};
  AdamW opt(std::vector<std::pair<std::size_t, std::size_t>>{{1, 2}}, cfg);
  Matrix w{{1.0, -2.0}};
  const Matrix g{{0.5, -0.25}};
  opt.step(w, g);
  // Step 1: decay by (1 − lr·wd), then m̂ = g and v̂ = g², so the update is lr·g/(|g| + eps).
  const double d1 = 1.0 - 0.1 * 0.01;
  const double w0 = 1.0 * d1 - 0.1 * 0.5 / (0.5 + 1e-8);
  const double w1 = -2.0 * d1 + 0.1 * 0.25 / (0.25 + 1e-8);
  CHECK(w(0, 0) == doctest::Approx(w0).epsilon(1e-14));
  CHECK(w(0, 1) == doctest::Approx(w1).epsilon(1e-14));

  // Step 2 with the same gradient: m̂ = g and v̂ = g² again.
  opt.step(w, g);
  CHECK(w(0, 0) == doctest::Approx(w0 * d1 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(opt.steps() == 2);
  CHECK_THROWS_AS(opt.step(w, Matrix(2, 2)), ShapeError);
}

TEST_CASE("inner maximization raises the loss and stays in the ball") {
  const auto& t = transfer();
  const ParamStore params(t.encoder);
  PerturbationConfig pert;
  pert.epsilon = 1e-2;
  pert.steps = 3;
  std::size_t raised = 0, batches = 0;
  for (std::size_t start = 0; start + 8 <= t.data.size(); start += 8, ++batches) {
    const std::span<const TrainingExample> batch(t.data.data() + start, 8);
    const auto subs = subgraphs_of(batch);
    const auto r = inner_maximize(params, subs, summaries_of(batch), pert, 0.1);
    if (r.final_loss >= r.initial_loss) ++raised;
    REQUIRE(r.delta_norms.size() == 3);
    for (const auto& step : r.delta_norms)
      for (double n : step) CHECK(n <= pert.epsilon + 1e-12);
    CHECK(r.param_grads.size() == params.tensors().size());
  }
  CHECK(batches == 25);
  CHECK(static_cast<double>(raised) >= 0.95 * static_cast<double>(batches));
}

TEST_CASE("zero radius is a single clean evaluation") {
  const auto& t = transfer();
  const ParamStore params(t.encoder);
  const auto batch = head(8);
  const auto subs = subgraphs_of(batch);
  PerturbationConfig pert;
  pert.epsilon = 0.0;
  const auto r = inner_maximize(params, subs, summaries_of(batch), pert, 0.1);
  CHECK(r.initial_loss == r.final_loss);
  for (const auto& d : r.delta) CHECK(frobenius_norm(d) == 0.0);
}

TEST_CASE("pretraining is deterministic and eps = 0 equals the plain objective") {
  const auto& t = transfer();
  const auto data = head(64);
  auto cfg = fixture::toy_pretrain(2);
  const auto a = pretrain(data, t.encoder, cfg);
  const auto b = pretrain(data, t.encoder, cfg);
  CHECK(a.params.checksum() == b.params.checksum());
  CHECK(a.final_eval_loss < a.initial_eval_loss);
  for (double n : a.delta_norms) CHECK(n <= cfg.perturbation.epsilon + 1e-12);
  CHECK(a.metrics.size() == 4);  // 2 epochs of 2 batches

  auto zero = cfg;
  zero.perturbation.epsilon = 0.0;
  auto plain = cfg;
  plain.adversary = false;
  CHECK(pretrain(data, t.encoder, zero).params.checksum() == pretrain(data, t.encoder, plain).params.checksum());
}

TEST_CASE("pretraining writes checkpoints and metrics") {
  const auto dir = std::filesystem::temp_directory_path() / "graphclip_pretrain_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto& t = transfer();
  auto cfg = fixture::toy_pretrain(2);
  cfg.output_dir = dir;
  const auto res = pretrain(head(32), t.encoder, cfg);
  CHECK(std::filesystem::exists(dir / "checkpoint_epoch1.bin"));
  CHECK(std::filesystem::exists(dir / "checkpoint_epoch2.bin"));
  CHECK(ParamStore::load(dir / "checkpoint.bin").checksum() == res.params.checksum());
  std::ifstream csv(dir / "metrics.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.find("loss") != std::string::npos);
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == res.metrics.size());
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite inputs abort with a numeric error and a dump") {
  const auto dir = std::filesystem::temp_directory_path() / "graphclip_nonfinite_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto data = head(8);
  data[3].subgraph.features(0, 0) = std::nan("");
  auto cfg = fixture::toy_pretrain(1);
  cfg.output_dir = dir;
  CHECK_THROWS_AS(pretrain(data, transfer().encoder, cfg), NumericError);
  bool dumped = false;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    dumped |= e.path().filename().string().starts_with("nonfinite_step");
  CHECK(dumped);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training set rebuilds subgraphs from their source graph") {
  const auto& t = transfer();
  CHECK(t.data.size() == 200);
  const auto sub = make_ego_subgraph(t.source, 17, t.sampler, t.encoder.pe_dim);
  CHECK(t.data[17].subgraph.global_ids == sub.global_ids);
  CHECK(l2_norm(t.data[17].summary) == doctest::Approx(1.0));
  const std::vector<GraphSummaryPair> bad{{"elsewhere", 0, 0, Domain::Academic, "s", 1}};
  std::map<std::string, const TextAttributedGraph*> graphs{{"source", &t.source}};
  CHECK_THROWS_AS(build_training_set(bad, graphs, t.sampler, t.text, 16), ValidationError);
}
