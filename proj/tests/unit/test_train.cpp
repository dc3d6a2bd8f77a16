#include <doctest.h>

#include "stepalign/checkpoint.hpp"
#include "stepalign/synth.hpp"
#include "stepalign/train.hpp"
#include "support.hpp"

using namespace stepalign;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.model.dim = 8;
  c.model.num_slots = 4;
  c.model.num_layers = 1;
  c.model.num_heads = 2;
  c.epochs = 4;
  c.warmup_epochs = 1;
  c.batch_size = 4;
  return c;
}

std::vector<DatasetSample> tiny_data() {
  SynthConfig s;
  s.dim = 8;
  s.num_tasks = 2;
  s.steps_per_task = 3;
  s.videos_per_task = 6;
  s.frames_range = {15, 25};
  return generate(s).samples;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  const TrainConfig c = TrainConfig::full_scale_defaults(32);
  const std::int64_t spe = 10;
  CHECK(lr_at(0, spe, c) == 0.0);
  CHECK(lr_at(3 * spe, spe, c) == doctest::Approx(3e-4).epsilon(1e-12));
  CHECK(lr_at(60 * spe - 1, spe, c) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(lr_at(15, spe, c) == doctest::Approx(3e-4 * 15.0 / 30.0));
  double prev = lr_at(3 * spe, spe, c);
  for (std::int64_t s = 3 * spe + 1; s < 60 * spe; ++s) {
    const double lr = lr_at(s, spe, c);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("AdamW single step") {
  ModelConfig mc;
  mc.dim = 2;
  mc.num_slots = 1;
  mc.num_layers = 1;
  mc.num_heads = 1;
  mc.ff_multiplier = 1;
  ModelParams p = ModelParams::zeros(mc);
  for (auto& t : p.tensors()) t.value.setOnes();
  std::vector<Matrix> g;
  for (const auto& t : p.tensors()) g.push_back(Matrix::Constant(t.value.rows(), t.value.cols(), 0.5));
  AdamW opt(p, 0.01);
  opt.step(p, g, 0.1);
  // m_hat = 0.5, v_hat = 0.25 after bias correction.
  const double want = 1.0 * (1.0 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
  CHECK(p.queries()(0, 0) == doctest::Approx(want).epsilon(1e-14));
  CHECK(opt.steps() == 1);
}

TEST_CASE("two samples, one epoch, batch one gives two steps") {
  auto data = tiny_data();
  data.erase(data.begin() + 2, data.end());
  TrainConfig c = tiny_config();
  c.epochs = 1;
  c.warmup_epochs = 0;
  c.batch_size = 1;
  const auto r = train(data, c);
  CHECK(r.log.size() == 2);
  CHECK(r.log[1].step == 1);
}

TEST_CASE("training is deterministic") {
  const auto data = tiny_data();
  const TrainConfig c = tiny_config();
  const auto a = train(data, c);
  const auto b = train(data, c);
  CHECK(encode_checkpoint({a.params, 1, c.seed}) == encode_checkpoint({b.params, 1, c.seed}));
  TrainConfig other = c;
  other.seed = 1;
  CHECK_FALSE(train(data, other).params == a.params);
}

TEST_CASE("training lowers the objective") {
  const auto data = tiny_data();
  TrainConfig c = tiny_config();
  c.epochs = 15;
  const LossBreakdown before = evaluate_objective(ModelParams::initialize(c.model, c.seed), data, c, 0);
  const auto r = train(data, c);
  const LossBreakdown after = evaluate_objective(r.params, data, c, 0);
  CHECK(after.total < before.total);
}

TEST_CASE("epoch callback and validation") {
  const auto data = tiny_data();
  TrainConfig c = tiny_config();
  std::vector<int> epochs;
  train(data, c, [&](int e, const ModelParams&, std::int64_t) { epochs.push_back(e); });
  CHECK(epochs == std::vector<int>{1, 2, 3, 4});
  c.warmup_epochs = c.epochs;
  CHECK_THROWS_AS(train(data, c), InvariantError);
  TrainConfig wrong_dim = tiny_config();
  wrong_dim.model.dim = 16;
  CHECK_THROWS_AS(train(data, wrong_dim), DataError);
  TrainConfig nothing = tiny_config();
  nothing.terms = {false, false, false, false};
  CHECK_THROWS_AS(train(data, nothing), InvariantError);
}

TEST_CASE("loss log lines are JSON objects with every term") {
  const std::string line = to_json_line({3, {1.0, 2.0, 0.5, 4.0, 3.23, 7}, 0.01});
  for (const char* key : {"\"seq\"", "\"glob\"", "\"div\"", "\"smooth\"", "\"total\"", "\"matched_pairs\"", "\"lr\"", "\"step\""})
    CHECK(line.find(key) != std::string::npos);
}
