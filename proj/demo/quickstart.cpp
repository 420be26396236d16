// Synthesizes a handful of composites, trains a reduced model for a few
// hundred iterations and reports test metrics.
//
//   quickstart [iterations] [output dir]

#include <cstdlib>
#include <iostream>

#include "ppmatte/ppmatte.hpp"

int main(int argc, char** argv) {
  using namespace ppmatte;
  const int iters = argc > 1 ? std::atoi(argv[1]) : 200;
  const std::string out = argc > 2 ? argv[2] : "quickstart_out";

  SynthConfig sc;
  sc.image_size = 64;
  sc.num_fg_train = 4;
  sc.bg_per_fg_train = 1;
  sc.num_fg_test = 2;
  sc.bg_per_fg_test = 1;
  const Dataset ds = assemble_dataset(sc);
  write_dataset(ds, out + "/dataset");

  TrainConfig tc;
  tc.max_iters = iters;
  tc.augmentation = false;
  tc.loss.normalize = true;
  tc.base_lr = 0.005;
  tc.model.encoder_widths = {8, 16, 32, 64, 128};
  tc.model.scb_channels = 32;
  tc.model.hrdb_channels = 16;

  try {
    TrainResult r = train(tc, ds.train.samples, out + "/run", &std::cout);
    const Evaluation ev = evaluate_model(r.model, ds.test.samples);
    std::cout << "test SAD " << ev.mean.sad << "  MSE " << ev.mean.mse << "  Grad " << ev.mean.grad << "  Conn "
              << ev.mean.conn << '\n';
    io::save(out + "/test0_alpha.png", predict(r.model, ds.test.samples[0].image).alpha);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
