// Train a small class-conditional model on the procedural dataset with
// bitwise self-correction, then sample one pyramid per class.

#include <cstdio>
#include <cstdlib>

#include "bitar/bitar.hpp"

int main(int argc, char** argv) {
  using namespace bitar;

  const int steps = argc > 1 ? std::atoi(argv[1]) : 300;
  ToySetup setup = toy_setup();
  setup.train.mode = TrainMode::bsc;
  setup.train.steps = steps;

  Transformer model(setup.model);
  const ToyDataset data(setup.data);
  Trainer trainer(model, setup.schedule, setup.quantizer, setup.train);
  for (int s = 0; s < steps; ++s) {
    const StepResult r = trainer.train_step(toy_batch(data, s, setup.train.batch_size));
    if (s % 100 == 0 || s + 1 == steps) std::printf("step %4d  loss %.4f  bit accuracy %.3f\n", s, r.loss, r.accuracy());
  }

  SamplerConfig sampler;
  sampler.cfg_mode = CfgMode::pyramid_logits;
  sampler.cfg_value = 3.0;
  for (int cls = 1; cls <= ToyPrompts::kNumClasses; ++cls) {
    sampler.seed = static_cast<std::uint64_t>(cls);
    const Generation g = generate(model, cls, setup.schedule, sampler, setup.quantizer);
    std::printf("class %d  feature MSE to class field %.4f\n", cls,
                mean_squared_error(g.features, data.class_field(cls)));
  }
  return 0;
}
