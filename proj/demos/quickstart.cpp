// Encode a smooth feature map into a bit pyramid, inspect the error curve,
// pack it into a container and read it back.

#include <cstdio>

#include "bitar/bitar.hpp"

int main() {
  using namespace bitar;

  const ScaleSchedule schedule = square_schedule(7);
  const QuantizerConfig quantizer{QuantizerKind::BSQ, 16, 1.0};

  Rng rng(42);
  const FeatureMap features = smooth_random_field(16, 16, 16, rng, 0.6, 2.5);

  const TokenPyramid pyramid = encode(features, schedule, quantizer).pyramid;
  std::printf("schedule  %s\n", format_schedule(schedule).c_str());
  std::printf("tokens    %zu\n", schedule.token_count());
  const std::vector<double> curve = error_curve(features, pyramid);
  for (std::size_t k = 0; k < curve.size(); ++k)
    std::printf("scale %zu   %s  relative error %.4f\n", k + 1, format_scale(schedule[static_cast<int>(k)]).c_str(),
                curve[k]);

  const Bytes container = serialize(pyramid);
  const ContainerContents back = deserialize(container);
  std::printf("container %zu bytes, round trip %s\n", container.size(),
              back.pyramid == pyramid ? "exact" : "MISMATCH");

  std::printf("classifier parameters at h=2048, d=16: conventional %s, bitwise %s\n",
              group_digits(conventional_param_count(2048, 16)).c_str(),
              group_digits(ivc_param_count(2048, 16)).c_str());
  return back.pyramid == pyramid ? 0 : 1;
}
