// Copyright 2026 The cnnd Authors
// SPDX-License-Identifier: Apache-2.0

// Library usage: load a model, classify a batch, print the top class per image.
//
//   cnnd synth models/lenet.netfile /tmp/lenet --input /tmp/digits.tensor --batch 4
//   classify_batch models/lenet.netfile /tmp/lenet /tmp/digits.tensor

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cnnd/engine.hpp"
#include "cnnd/tensor_io.hpp"

int main(int argc, char** argv) {
  if (argc != 4) {
    std::cerr << "usage: classify_batch NETFILE MODEL_DIR INPUT_TENSOR\n";
    return 2;
  }
  try {
    std::ifstream f(argv[1]);
    std::stringstream text;
    text << f.rdbuf();
    const cnnd::NetConfig cfg = cnnd::parse_netfile(text.str());
    const cnnd::Tensor batch = cnnd::read_tensor_file(argv[3]);
    const cnnd::Network net = cnnd::build_network(cfg, argv[2], batch.shape());
    const cnnd::Tensor scores = cnnd::compute(net, batch);

    const std::size_t classes = scores.shape().per_image();
    for (std::size_t n = 0; n < scores.shape().n; ++n) {
      const float* s = scores.data().data() + n * classes;
      const auto best = std::max_element(s, s + classes) - s;
      std::cout << "image " << n << ": class " << best << " score " << s[best] << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
