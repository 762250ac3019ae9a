#include <gtest/gtest.h>

#include <omp.h>

#include <random>

#include "ktune/batch.hpp"
#include "ktune/error.hpp"
#include "test_support.hpp"

using namespace ktune;
using namespace ktune::testing;

namespace {

struct Fixture {
  Model model = Model::two_layer_tanh(5);
  Readout readout = Readout::canonical(1, 5);
  Ensemble ensemble;
  ControlSignal u;
  std::vector<Index> indices;

  Fixture()
      : ensemble([] {
          std::mt19937_64 rng(3);
          return random_ensemble(37, 2, 1, rng);
        }()),
        u(ControlSignal::gaussian(6, Model::two_layer_tanh(5).p(), 0.4, 12)) {
    for (Index i = 37; i >= 1; i -= 2) indices.push_back(i);
  }
};

}  // namespace

TEST(Batch, ParallelEqualsSerialBitwise) {
  Fixture f;
  for (int threads : {1, 2, 4, 7}) {
    omp_set_num_threads(threads);
    const auto sl = serial::linearize_samples(f.model, f.u, f.ensemble, f.indices, f.readout);
    const auto pl = parallel::linearize_samples(f.model, f.u, f.ensemble, f.indices, f.readout);
    ASSERT_EQ(sl.size(), pl.size());
    for (std::size_t k = 0; k < sl.size(); ++k) {
      EXPECT_EQ(sl[k].jacobian.L, pl[k].jacobian.L);
      EXPECT_EQ(sl[k].cost.value, pl[k].cost.value);
      EXPECT_EQ(sl[k].jacobian.sample_index, f.indices[k]);
    }
    const auto sc = serial::sample_costs(f.model, f.u, f.ensemble, f.indices, f.readout);
    const auto pc = parallel::sample_costs(f.model, f.u, f.ensemble, f.indices, f.readout);
    for (std::size_t k = 0; k < sc.size(); ++k) EXPECT_EQ(sc[k].residual, pc[k].residual);
    const auto sg = serial::gradient_sum(f.model, f.u, f.ensemble, f.indices, f.readout);
    const auto pg = parallel::gradient_sum(f.model, f.u, f.ensemble, f.indices, f.readout);
    EXPECT_EQ(sg.gradient, pg.gradient);
    EXPECT_EQ(sg.cost, pg.cost);
  }
}

TEST(Batch, GradientSumIsSumOfPerSampleGradients) {
  Fixture f;
  const auto lin = serial::linearize_samples(f.model, f.u, f.ensemble, f.indices, f.readout);
  Vector total = Vector::Zero(f.u.size());
  double cost = 0.0;
  for (const auto& l : lin) {
    total += cost_gradient(l.jacobian, l.cost);
    cost += l.cost.value;
  }
  const auto sum = parallel::gradient_sum(f.model, f.u, f.ensemble, f.indices, f.readout);
  EXPECT_LE((sum.gradient - total).norm(), 1e-13 * total.norm());
  EXPECT_NEAR(sum.cost, cost, 1e-13 * cost);
}

TEST(Batch, ErrorsPropagateFromWorkers) {
  Fixture f;
  const std::vector<Index> bad{1, 2, 99};
  EXPECT_THROW(parallel::sample_costs(f.model, f.u, f.ensemble, bad, f.readout), std::exception);
  EXPECT_THROW(serial::sample_costs(f.model, f.u, f.ensemble, bad, f.readout), std::exception);
}
