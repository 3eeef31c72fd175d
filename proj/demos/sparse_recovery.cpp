// Fit a linear order-4 tensor kernel model to synthetic sparse data and
// report which features survive the 2-sigma threshold.

#include <iostream>

#include "tensorkernel/tensorkernel.hpp"

int main() {
  tk::SyntheticSpec spec;
  spec.n = 120;
  spec.d = 40;
  spec.sparsity = 4;
  const tk::Dataset ds = tk::gen_synthetic(spec);

  tk::TrainConfig cfg;
  cfg.gamma = 1.0;
  cfg.max_iters = 200;
  const auto plan = tk::nystrom_sample(ds.size(), 60, 7);
  const auto model = tk::fit(ds.x, ds.y, tk::TensorKernelSpec::linear(4), cfg, plan);

  const auto sel = tk::select_features(model, ds.truth->support);
  std::cout << "train mse " << tk::mse(tk::predict_batch(model, ds.x), ds.y) << '\n';
  std::cout << "true support:";
  for (auto j : ds.truth->support) std::cout << ' ' << j;
  std::cout << "\nselected:";
  for (auto j : sel.selected) std::cout << ' ' << j;
  std::cout << "\ntp " << *sel.true_positive << " fp " << *sel.false_positive << '\n';
}
