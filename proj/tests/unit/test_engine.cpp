#include <doctest.h>

#include <cmath>
#include <set>

#include "fedef/errors.hpp"
#include "fedef/federation_engine.hpp"
#include "fedef/metrics.hpp"

using namespace fedef;

namespace {

RunConfig base_config(std::size_t n) {
  RunConfig rc;
  rc.n = n;
  rc.m = 0;
  rc.rounds = 10;
  rc.hp.eta = 0.5;
  rc.hp.eta_l = 0.5;
  rc.hp.local_steps = 1;
  rc.upload = CompressorSpec::identity();
  rc.ef_enabled = true;
  rc.master_seed = 2024;
  return rc;
}

}  // namespace

TEST_CASE("participant sampling") {
  RngStream rng(1);
  // m = n returns the full set
  auto all = sample_participants(4, 4, rng);
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3});

  // indices distinct and in range
  for (int t = 0; t < 200; ++t) {
    auto picks = sample_participants(10, 3, rng);
    std::set<std::size_t> s(picks.begin(), picks.end());
    CHECK(s.size() == 3);
    CHECK(*s.rbegin() < 10);
  }

  // m = 1, n = 2: both clients near 50% over many draws
  int count0 = 0;
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    if (sample_participants(2, 1, rng)[0] == 0) ++count0;
  }
  double frac = static_cast<double>(count0) / trials;
  CHECK(frac == doctest::Approx(0.5).epsilon(0.02));

  CHECK_THROWS_AS(sample_participants(3, 4, rng), config_error);
}

TEST_CASE("one-round trajectory matches the hand recurrence") {
  // Two clients at c = 0 and c = 2, K = 1, eta = eta_l = 0.5, identity
  // channel: plain local SGD. By hand: theta_1 = 0.25, theta_2 = 0.4375.
  Problem p = Problem::quadratic({{0.0}, {2.0}});
  RunConfig rc = base_config(2);
  rc.rounds = 2;
  FederationEngine engine(p, rc);

  RoundRecord r1 = engine.run_round();
  CHECK(engine.server().theta[0] == 0.25);
  CHECK(r1.grad_norm_sq == 0.5625);            // (0.25 - 1)^2
  CHECK(r1.train_loss == 0.78125);             // mean of 1/2 (theta - c)^2
  CHECK(r1.bits_up_cum == 64);                 // two dense uploads of d = 1
  CHECK(r1.bits_down_cum == 32);
  REQUIRE(r1.q_a_sq.has_value());
  CHECK(*r1.q_a_sq == 0.0);

  engine.run_round();
  CHECK(engine.server().theta[0] == 0.4375);
}

TEST_CASE("identity channel with EF keeps every accumulator at zero") {
  RngStream prng(5);
  Problem p = Problem::make_quadratic(4, 8, 1.0, 0.0, prng);
  RunConfig rc = base_config(4);
  rc.rounds = 20;
  FederationEngine engine(std::move(p), rc);
  engine.run_all();
  for (const ClientState& c : engine.clients()) {
    CHECK(sq_norm(c.error_acc) == 0.0);
  }
}

TEST_CASE("sign aggregation averages the materialized updates") {
  // One deterministic round with the grouped-sign compressor; aggregation is
  // the arithmetic mean of the per-client sign reconstructions.
  Problem p = Problem::quadratic({{1.0, -2.0, 3.0}, {-1.0, 2.0, -3.0}});
  RunConfig rc = base_config(2);
  rc.rounds = 1;
  rc.hp.eta = 1.0;
  rc.hp.eta_l = 1.0;
  rc.upload = CompressorSpec::grouped_sign();
  FederationEngine engine(p, rc);
  engine.run_round();
  // update_i = theta_0 - local = gradient at 0 = -c_i, sign-compressed to
  // (|c| mean) * sign(-c_i) = 2 * sign(-c_i); the two clients cancel exactly.
  CHECK(engine.server().theta[0] == 0.0);
  CHECK(engine.server().theta[1] == 0.0);
  CHECK(engine.server().theta[2] == 0.0);
}

TEST_CASE("identity reduction: EF run is bitwise equal to the uncompressed run") {
  RngStream prng(9);
  Problem p = Problem::make_quadratic(4, 6, 1.5, 0.2, prng);
  RunConfig rc = base_config(4);
  rc.rounds = 100;
  rc.hp.eta_l = 0.1;
  rc.hp.local_steps = 2;
  rc.hp.batch_size = 1;  // engage the noise path

  RunConfig rc_plain = rc;
  rc_plain.ef_enabled = false;

  auto ef_records = run_experiment(p, rc);
  auto plain_records = run_experiment(p, rc_plain);
  CHECK(render_csv(ef_records) == render_csv(plain_records));
}

TEST_CASE("reruns with one seed are bitwise identical") {
  RngStream prng(11);
  Problem p = Problem::make_quadratic(6, 5, 1.0, 0.5, prng);
  RunConfig rc = base_config(6);
  rc.m = 3;
  rc.rounds = 50;
  rc.hp.batch_size = 1;
  rc.upload = CompressorSpec::stoc_quant(2);
  auto a = run_experiment(p, rc);
  auto b = run_experiment(p, rc);
  CHECK(render_csv(a) == render_csv(b));
}

TEST_CASE("round-one step is predictable from the derived streams") {
  RngStream prng(13);
  Problem p = Problem::make_quadratic(4, 5, 1.0, 0.3, prng);
  RunConfig rc = base_config(4);
  rc.rounds = 1;
  rc.hp.batch_size = 1;
  rc.hp.local_steps = 2;

  // Predict each client's round-1 update with the engine's stream recipe.
  ParamVector theta0(p.layout());
  std::vector<ParamVector> updates;
  for (std::size_t i = 0; i < 4; ++i) {
    RngStream rng = derive_stream(rc.master_seed, stream_tag::kClient, i, 1);
    updates.push_back(
        scaled(-1.0, run_local_round(p, i, theta0, rc.hp, rng, 1)));
  }

  // Full participation: theta_1 = -eta * mean(updates).
  {
    FederationEngine engine(p, rc);
    engine.run_round();
    ParamVector mean(p.layout());
    for (const auto& u : updates) mean = add_scaled(0.25, u, mean);
    ParamVector expected = add_scaled(-rc.hp.eta, mean, theta0);
    for (std::size_t j = 0; j < expected.dim(); ++j) {
      CHECK(engine.server().theta[j] == expected[j]);
    }
  }

  // Partial participation reuses the same per-client draws.
  {
    RunConfig rc2 = rc;
    rc2.m = 2;
    FederationEngine engine(p, rc2);
    engine.run_round();
    RngStream sampler = derive_stream(rc.master_seed, stream_tag::kSampler, 0, 1);
    auto picks = sample_participants(4, 2, sampler);
    ParamVector mean(p.layout());
    for (std::size_t i : picks) mean = add_scaled(0.5, updates[i], mean);
    ParamVector expected = add_scaled(-rc.hp.eta, mean, theta0);
    for (std::size_t j = 0; j < expected.dim(); ++j) {
      CHECK(engine.server().theta[j] == expected[j]);
    }
  }
}

TEST_CASE("inactive clients keep their error accumulators frozen") {
  RngStream prng(15);
  Problem p = Problem::make_quadratic(8, 6, 2.0, 0.0, prng);
  RunConfig rc = base_config(8);
  rc.m = 2;
  rc.rounds = 40;
  rc.upload = CompressorSpec::grouped_sign();
  FederationEngine engine(p, rc);

  std::vector<ParamVector> before;
  for (const auto& c : engine.clients()) before.push_back(c.error_acc);

  for (int t = 1; t <= rc.rounds; ++t) {
    engine.run_round();
    RngStream sampler = derive_stream(rc.master_seed, stream_tag::kSampler, 0,
                                      static_cast<std::uint64_t>(t));
    auto picks = sample_participants(8, 2, sampler);
    std::set<std::size_t> active(picks.begin(), picks.end());
    for (std::size_t i = 0; i < 8; ++i) {
      const ParamVector& now = engine.clients()[i].error_acc;
      if (!active.count(i)) {
        for (std::size_t j = 0; j < now.dim(); ++j) CHECK(now[j] == before[i][j]);
      }
    }
    before.clear();
    for (const auto& c : engine.clients()) before.push_back(c.error_acc);
  }
}

TEST_CASE("error restart boundary") {
  auto layout = make_layout({2});
  std::vector<ClientState> clients;
  clients.emplace_back(0, layout);
  clients.emplace_back(1, layout);
  clients[0].error_acc = ParamVector(layout, {1.0, 0.0});
  clients[0].last_error_update_round = 5;
  clients[1].error_acc = ParamVector(layout, {0.0, 2.0});
  clients[1].last_error_update_round = 6;

  // t = 16, S = 10: staleness 11 restarts, staleness 10 does not
  int restarted = maybe_restart_errors(clients, 16, 10, layout);
  CHECK(restarted == 1);
  CHECK(sq_norm(clients[0].error_acc) == 0.0);
  CHECK(clients[0].last_error_update_round == 16);
  CHECK(sq_norm(clients[1].error_acc) == 4.0);
  CHECK(clients[1].last_error_update_round == 6);
}

TEST_CASE("full participation never triggers restarts") {
  RngStream prng(17);
  Problem p = Problem::make_quadratic(4, 4, 1.0, 0.0, prng);
  RunConfig rc = base_config(4);
  rc.rounds = 30;
  rc.upload = CompressorSpec::grouped_sign();
  rc.restart_threshold = 2;
  rc.restart_start_round = 1;
  FederationEngine engine(p, rc);
  engine.run_all();
  CHECK(engine.summary().restarts_total == 0);
}

TEST_CASE("virtual iterate tracks the uncompressed recursion") {
  RngStream prng(19);
  Problem p = Problem::make_quadratic(6, 10, 2.0, 0.0, prng);
  RunConfig rc = base_config(6);
  rc.rounds = 200;
  rc.hp.eta = 1.0;
  rc.hp.eta_l = 0.05;
  rc.hp.local_steps = 5;
  rc.upload = CompressorSpec::grouped_sign();
  FederationEngine engine(p, rc);
  engine.run_all();
  CHECK(engine.virtual_iterate_monitored());
  CHECK(engine.max_virtual_iterate_rel_err() <= 1e-10);
}

TEST_CASE("two-way identity download reproduces the one-way run bitwise") {
  RngStream prng(21);
  Problem p = Problem::make_quadratic(4, 8, 1.0, 0.1, prng);
  for (GlobalOptimizer opt : {GlobalOptimizer::Sgd, GlobalOptimizer::Ams}) {
    RunConfig rc = base_config(4);
    rc.rounds = 100;
    rc.optimizer = opt;
    rc.hp.eta = opt == GlobalOptimizer::Ams ? 0.05 : 0.5;
    rc.hp.batch_size = 1;
    rc.upload = CompressorSpec::topk(0.5);

    RunConfig rc_two = rc;
    rc_two.download = CompressorSpec::identity();

    auto one_way = run_experiment(p, rc);
    auto two_way = run_experiment(p, rc_two);
    CHECK(render_csv(one_way) == render_csv(two_way));
  }
}

TEST_CASE("two-way compressed download converges on a quadratic") {
  RngStream prng(23);
  Problem p = Problem::make_quadratic(4, 8, 1.0, 0.0, prng);
  RunConfig rc = base_config(4);
  rc.rounds = 300;
  rc.hp.eta = 1.0;
  rc.hp.eta_l = 0.05;
  rc.hp.local_steps = 3;
  rc.upload = CompressorSpec::topk(0.5);
  rc.download = CompressorSpec::topk(0.5);
  RunSummary summary;
  auto records = run_experiment(p, rc, &summary);
  // Constant rates leave a small feedback limit cycle; the run must settle
  // far below the initial gradient scale (~2e-1 here).
  CHECK(summary.final_grad_norm_sq < 5e-3);
  CHECK(summary.bits_down_cum < 300 * 32 * 8);  // cheaper than dense broadcast
}

TEST_CASE("divergent runs abort with round context") {
  Problem p = Problem::quadratic({{1.0}});
  RunConfig rc = base_config(1);
  rc.rounds = 2000;
  rc.hp.eta = 1000.0;
  rc.hp.eta_l = 1000.0;
  rc.hp.local_steps = 5;
  FederationEngine engine(p, rc);
  CHECK_THROWS_AS(engine.run_all(), divergence_error);
}

TEST_CASE("config is rejected before any round runs") {
  Problem p = Problem::quadratic({{1.0}, {2.0}});
  RunConfig rc = base_config(2);
  rc.m = 3;  // m > n
  CHECK_THROWS_AS(FederationEngine(p, rc), config_error);

  RunConfig rc2 = base_config(2);
  rc2.hp.eta_l = -1.0;
  CHECK_THROWS_AS(FederationEngine(p, rc2), config_error);
}

TEST_CASE("bit totals are exact message sums") {
  RngStream prng(25);
  Problem p = Problem::make_quadratic(3, 7, 1.0, 0.0, prng);
  RunConfig rc = base_config(3);
  rc.rounds = 12;
  FederationEngine engine(p, rc);
  auto records = engine.run_all();
  // identity channel: 3 dense uploads and one dense broadcast per round
  CHECK(records.back().bits_up_cum == 12 * 3 * 32 * 7);
  CHECK(records.back().bits_down_cum == 12 * 32 * 7);
}

TEST_CASE("single-round run yields a summary with positive bit counts") {
  Problem p = Problem::quadratic({{1.0}});
  RunConfig rc = base_config(1);
  rc.rounds = 1;
  RunSummary summary;
  auto records = run_experiment(p, rc, &summary);
  REQUIRE(records.size() == 1);
  CHECK(summary.rounds == 1);
  CHECK(summary.bits_up_cum > 0);
  CHECK(summary.bits_down_cum > 0);
}

TEST_CASE("unbiased quantization without error feedback still converges") {
  // Homogeneous quadratic with gradient noise: the quantizer is unbiased, so
  // the no-feedback baseline has no compression floor to get stuck on.
  RngStream prng(33);
  Problem p = Problem::make_quadratic(8, 16, 0.0, 0.5, prng);
  RunConfig rc = base_config(8);
  rc.rounds = 400;
  rc.hp.eta = 0.2;
  rc.hp.eta_l = 0.1;
  rc.hp.local_steps = 2;
  rc.hp.batch_size = 1;
  rc.upload = CompressorSpec::stoc_quant(2);
  rc.ef_enabled = false;
  RunSummary summary;
  run_experiment(p, rc, &summary);
  CHECK(summary.final_grad_norm_sq < 2e-3);
}

TEST_CASE("adaptive optimizer under partial participation makes progress") {
  RngStream prng(35);
  Problem p = Problem::make_quadratic(16, 8, 2.0, 0.5, prng);
  RunConfig rc = base_config(16);
  rc.m = 4;
  rc.rounds = 300;
  rc.optimizer = GlobalOptimizer::Ams;
  rc.hp.eta = 0.01;
  rc.hp.eta_l = 0.1;
  rc.hp.local_steps = 3;
  rc.hp.batch_size = 1;
  rc.upload = CompressorSpec::heavy_sign(0.25);
  FederationEngine engine(p, rc);
  auto records = engine.run_all();
  CHECK(all_finite(engine.server().theta));
  CHECK(records.back().grad_norm_sq < records.front().grad_norm_sq);
}

TEST_CASE("metrics cadence records every k-th round plus the last") {
  RngStream prng(29);
  Problem p = Problem::make_quadratic(2, 3, 1.0, 0.0, prng);
  RunConfig rc = base_config(2);
  rc.rounds = 25;
  rc.metrics_every = 10;
  FederationEngine engine(p, rc);
  auto records = engine.run_all();
  REQUIRE(records.size() == 3);
  CHECK(records[0].round == 10);
  CHECK(records[1].round == 20);
  CHECK(records[2].round == 25);
}

TEST_CASE("running past the configured horizon is rejected") {
  Problem p = Problem::quadratic({{1.0}});
  RunConfig rc = base_config(1);
  rc.rounds = 2;
  FederationEngine engine(p, rc);
  engine.run_all();
  CHECK_THROWS_AS(engine.run_round(), config_error);
}

TEST_CASE("staleness histogram is all ones under full participation") {
  RngStream prng(27);
  Problem p = Problem::make_quadratic(3, 4, 1.0, 0.0, prng);
  RunConfig rc = base_config(3);
  rc.rounds = 15;
  rc.upload = CompressorSpec::grouped_sign();
  FederationEngine engine(p, rc);
  engine.run_all();
  const auto& hist = engine.staleness_histogram();
  REQUIRE(hist.size() == 1);
  CHECK(hist.begin()->first == 1);
  CHECK(hist.begin()->second == 45);
}

TEST_CASE("staleness histogram spreads out under partial participation") {
  RngStream prng(37);
  Problem p = Problem::make_quadratic(8, 4, 1.0, 0.0, prng);
  RunConfig rc = base_config(8);
  rc.m = 2;
  rc.rounds = 60;
  rc.upload = CompressorSpec::grouped_sign();
  FederationEngine engine(p, rc);
  engine.run_all();
  RunSummary summary = engine.summary();
  REQUIRE(summary.staleness_histogram.size() > 1);
  std::int64_t total = 0;
  double lag_sum = 0.0;
  for (const auto& [lag, count] : summary.staleness_histogram) {
    CHECK(lag >= 1);
    total += count;
    lag_sum += static_cast<double>(lag) * static_cast<double>(count);
  }
  CHECK(total == 60 * 2);  // one entry per upload
  // mean lag is around n/m = 4 (boundary effects pull it slightly down)
  CHECK(lag_sum / static_cast<double>(total) == doctest::Approx(4.0).epsilon(0.35));
}
