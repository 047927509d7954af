#pragma once

#include <cstddef>
#include <cstdint>

#include "ncevo/data.hpp"
#include "ncevo/descriptor.hpp"
#include "ncevo/nn.hpp"

namespace testdata {

// Two Gaussian clusters in `dim` dimensions centred at -/+ separation/2 along
// the first axis. Points closer than `margin` to the plane x0 = 0, or on the
// wrong side of it, are redrawn, so the classes are linearly separable.
ncevo::Dataset blobs(std::size_t per_class, std::size_t dim, double separation, double margin, std::uint64_t seed);

// Training settings that go with the blob problem: 50 epochs of SGD with
// batch 10 at learning rate 0.1. The library default of 1e-3 moves the
// weights too little in 50 epochs over a few hundred rows to separate the
// clusters reliably.
ncevo::TrainConfig blob_train_config();

// Features and labels drawn independently: there is nothing to learn, so a
// lightly trained small network stays close to p = 0.5 everywhere.
ncevo::Dataset noise(std::size_t per_class, std::size_t dim, std::uint64_t seed);

// A split on noise data and a near-linear candidate whose first-stage
// predictions on the unlabeled rows all fall strictly inside (0.4, 0.6).
// min_p and max_p report that range so callers can assert the precondition.
struct RetNoopCase {
  ncevo::DatasetSplit split;
  ncevo::NetworkDescriptor candidate;
  ncevo::TrainConfig train;
  std::uint64_t seed = 0;
  double min_p = 0.0, max_p = 0.0;
};
RetNoopCase ret_noop_case();

}  // namespace testdata
