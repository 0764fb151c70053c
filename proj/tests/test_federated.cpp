#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fclg/federated.hpp"
#include "fclg/rng.hpp"
#include "test_support.hpp"

using namespace fclg;

namespace {

GraphSet synthetic_set(int num_graphs, double alpha, std::uint64_t seed = 7) {
  auto rng = make_rng(seed);
  GraphSet set = fclg::test::random_graphset(num_graphs, 8, 0.4, 3, 2, rng);
  set.precompute_diffusion(alpha);
  return set;
}

FLConfig small_config(Variant variant) {
  FLConfig config;
  config.variant = variant;
  config.rounds = 2;
  config.local_epochs = 2;
  config.clients = 3;
  config.gamma = 1.0;
  config.tau = 1.0;
  config.tau_prime = 0.5;
  config.alpha = 0.2;
  config.lr = 1e-3;
  config.batch_size = 8;
  config.layers = 2;
  config.hidden = 6;
  config.kmeans_restarts = 2;
  config.seed = 17;
  return config;
}

Partition even_partition(const GraphSet& set, int clients) {
  Partition p;
  p.client_shards.assign(clients, {});
  for (int i = 0; i < set.size(); ++i) p.client_shards[i % clients].push_back(i);
  p.num_classes = set.num_classes;
  p.class_histograms.assign(clients, Vector::Zero(set.num_classes));
  p.population = Vector::Zero(set.num_classes);
  for (int i = 0; i < clients; ++i) {
    for (int id : p.client_shards[i]) p.class_histograms[i](set.graphs[id].label) += 1;
    p.class_histograms[i] /= static_cast<double>(p.client_shards[i].size());
  }
  for (const auto& g : set.graphs) p.population(g.label) += 1;
  p.population /= static_cast<double>(set.size());
  p.emd = compute_emd(p);
  return p;
}

}  // namespace

TEST_CASE("fedavg of two clients weights by shard size") {
  const Vector zeros = Vector::Zero(4);
  const Vector fours = Vector::Constant(4, 4.0);
  const Vector avg = fedavg_aggregate({{zeros, 1}, {fours, 3}});
  CHECK((avg.array() == 3.0).all());
}

TEST_CASE("fedavg of equal sizes is the plain mean") {
  Vector a(2), b(2);
  a << 1.0, 3.0;
  b << 3.0, 5.0;
  const Vector avg = fedavg_aggregate({{a, 5}, {b, 5}});
  CHECK(avg(0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(avg(1) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("fedavg of a single client is the identity") {
  Vector a(3);
  a << 0.5, -1.5, 2.25;
  const Vector avg = fedavg_aggregate({{a, 7}});
  CHECK((avg - a).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fedavg rejects empty input and bad sizes") {
  CHECK_THROWS_AS(fedavg_aggregate({}), std::invalid_argument);
  CHECK_THROWS_AS(fedavg_aggregate({{Vector::Zero(2), 0}}), std::invalid_argument);
  CHECK_THROWS_AS(fedavg_aggregate({{Vector::Zero(2), 1}, {Vector::Zero(3), 1}}),
                  std::invalid_argument);
}

TEST_CASE("variant dispatch composes the documented objectives") {
  auto rng = make_rng(23);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix u(1, 4), v(1, 4), h(2, 4);
  for (long i = 0; i < u.size(); ++i) u.data()[i] = gauss(rng);
  for (long i = 0; i < v.size(); ++i) v.data()[i] = gauss(rng);
  for (long i = 0; i < h.size(); ++i) h.data()[i] = gauss(rng);
  FLConfig config = small_config(Variant::fclg);

  SUBCASE("fclg at the symmetric point adds exactly log 2") {
    const VariantLoss loss = variant_dispatch(Variant::fclg, u, v, h, u, u, h, h, {}, {}, config);
    CHECK(loss.intra == doctest::Approx(0.0).epsilon(1e-12));  // B = 1
    CHECK(loss.inter == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("intra_fedavg is the bare intra objective") {
    const VariantLoss loss =
        variant_dispatch(Variant::intra_fedavg, u, v, h, {}, {}, {}, {}, {}, {}, config);
    CHECK(loss.inter == 0.0);
    CHECK(loss.grad_params.size() == 0);
  }
  SUBCASE("intra_kl and intra_mse vanish on identical representations") {
    const VariantLoss kl =
        variant_dispatch(Variant::intra_kl, u, v, h, u, {}, {}, {}, {}, {}, config);
    CHECK(kl.inter == doctest::Approx(0.0).epsilon(1e-12));
    const VariantLoss mse =
        variant_dispatch(Variant::intra_mse, u, v, h, u, {}, {}, {}, {}, {}, config);
    CHECK(mse.inter == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("fedprox adds the proximal value and parameter gradient") {
    Vector theta(2), global(2);
    theta << 3.0, 4.0;
    global << 0.0, 0.0;
    config.mu = 2.0;
    const VariantLoss loss =
        variant_dispatch(Variant::intra_fedprox, u, v, h, {}, {}, {}, {}, theta, global, config);
    CHECK(loss.inter == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(loss.grad_params(0) == doctest::Approx(6.0).epsilon(1e-12));
  }
  SUBCASE("fclg_h routes the inter gradient to the node level") {
    const VariantLoss loss = variant_dispatch(Variant::fclg_h, u, v, h, u, u, h, h, {}, {}, config);
    CHECK(loss.inter == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(loss.grad_h.rows() == h.rows());
  }
}

TEST_CASE("T = 0 returns the untouched initialization and no metrics") {
  const GraphSet set = synthetic_set(12, 0.2);
  const Partition partition = even_partition(set, 3);
  FLConfig config = small_config(Variant::fclg);
  config.rounds = 0;
  const FederatedResult result = run_federated(config, partition, set);
  CHECK(result.rounds.empty());

  auto rng = make_rng(config.seed, 0x11);  // the init stream tag
  const EncoderParams expected = init_params(config.layers, set.feature_dim, config.hidden, rng);
  CHECK((result.model.to_flat() - expected.to_flat()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero learning rate keeps the global model constant") {
  const GraphSet set = synthetic_set(12, 0.2);
  const Partition partition = even_partition(set, 3);
  FLConfig config = small_config(Variant::fclg);
  config.lr = 0.0;
  const FederatedResult trained = run_federated(config, partition, set);

  config.rounds = 0;
  const FederatedResult fresh = run_federated(config, partition, set);
  CHECK((trained.model.to_flat() - fresh.model.to_flat()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("K = 1 federated run equals the centralized loop bitwise per round") {
  const GraphSet set = synthetic_set(14, 0.2);
  Partition whole;
  whole.client_shards.assign(1, std::vector<int>(set.size()));
  std::iota(whole.client_shards[0].begin(), whole.client_shards[0].end(), 0);
  whole.num_classes = set.num_classes;
  whole.class_histograms.assign(1, Vector::Zero(set.num_classes));
  whole.population = Vector::Zero(set.num_classes);
  for (const auto& g : set.graphs) whole.population(g.label) += 1;
  whole.population /= static_cast<double>(set.size());
  whole.class_histograms[0] = whole.population;

  fclg::test::TempDir fed_dir("fed"), central_dir("central");
  FLConfig config = small_config(Variant::intra_fedavg);
  config.clients = 1;
  config.rounds = 3;
  config.checkpoint_dir = fed_dir.path.string();
  const FederatedResult fed = run_federated(config, whole, set);

  config.checkpoint_dir = central_dir.path.string();
  const FederatedResult central = run_intra_central(config, set);

  CHECK((fed.model.to_flat() - central.model.to_flat()).cwiseAbs().maxCoeff() == 0.0);
  for (int round = 0; round < config.rounds; ++round) {
    const auto name = "round_" + std::to_string(round) + ".bin";
    const Vector a = load_params(fed_dir.path / name).to_flat();
    const Vector b = load_params(central_dir.path / name).to_flat();
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
  REQUIRE(fed.rounds.size() == central.rounds.size());
  for (size_t i = 0; i < fed.rounds.size(); ++i) {
    CHECK(fed.rounds[i].accuracy == central.rounds[i].accuracy);
  }
}

TEST_CASE("sequential and concurrent client execution agree bitwise") {
  const GraphSet set = synthetic_set(18, 0.2);
  const Partition partition = even_partition(set, 3);
  for (Variant variant : {Variant::fclg, Variant::intra_kl}) {
    FLConfig config = small_config(variant);
    config.concurrent_clients = false;
    const FederatedResult seq = run_federated(config, partition, set);
    config.concurrent_clients = true;
    const FederatedResult con = run_federated(config, partition, set);
    CHECK((seq.model.to_flat() - con.model.to_flat()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("with E = 1 inter-contrast is inert at exactly log 2") {
  // The snapshot never refreshes inside a single epoch, so U_prev == U_s
  // and every batch contributes log 2 regardless of the current model.
  const GraphSet set = synthetic_set(12, 0.2);
  const Partition partition = even_partition(set, 3);
  FLConfig config = small_config(Variant::fclg);
  config.local_epochs = 1;
  config.rounds = 2;
  const FederatedResult result = run_federated(config, partition, set);
  for (const RoundMetrics& m : result.rounds) {
    CHECK(m.inter_loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("snapshot lands on the final local parameters") {
  const GraphSet set = synthetic_set(9, 0.2);
  ClientState client;
  client.id = 0;
  client.shard = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  client.rng = make_rng(3);
  FLConfig config = small_config(Variant::fclg);
  auto rng = make_rng(1);
  const EncoderParams global = init_params(config.layers, set.feature_dim, config.hidden, rng);
  local_train(client, global, config, set);
  CHECK((client.snapshot.to_flat() - client.params.to_flat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((client.params.to_flat() - global.to_flat()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("client sampling honors gamma and stays deterministic") {
  const GraphSet set = synthetic_set(24, 0.2);
  const Partition partition = even_partition(set, 6);
  FLConfig config = small_config(Variant::intra_fedavg);
  config.clients = 6;
  config.gamma = 0.5;
  config.rounds = 1;
  const FederatedResult a = run_federated(config, partition, set);
  const FederatedResult b = run_federated(config, partition, set);
  CHECK((a.model.to_flat() - b.model.to_flat()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vanilla ensembling needs a server shard and reduces cleanly") {
  const GraphSet set = synthetic_set(16, 0.2);
  Partition no_server = even_partition(set, 3);
  FLConfig config = small_config(Variant::vanilla_ensemble);
  CHECK_THROWS_AS(run_vanilla_ensemble(config, no_server, set), std::invalid_argument);

  auto rng = make_rng(31);
  const Partition with_server = partition_iid(set, 3, rng, 0.25);
  config.server_epochs = 0;  // no server pass: must match plain intra_fedavg
  const FederatedResult vanilla = run_vanilla_ensemble(config, with_server, set);
  FLConfig plain = config;
  plain.variant = Variant::intra_fedavg;
  const FederatedResult fedavg = run_federated(plain, with_server, set);
  CHECK((vanilla.model.to_flat() - fedavg.model.to_flat()).cwiseAbs().maxCoeff() == 0.0);

  config.server_epochs = 1;  // a real server pass must change the model
  const FederatedResult active = run_vanilla_ensemble(config, with_server, set);
  CHECK((active.model.to_flat() - fedavg.model.to_flat()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("resume from a checkpoint continues the same trajectory") {
  const GraphSet set = synthetic_set(12, 0.2);
  const Partition partition = even_partition(set, 3);
  fclg::test::TempDir dir("resume");
  FLConfig config = small_config(Variant::intra_fedavg);
  config.rounds = 3;
  config.checkpoint_dir = dir.path.string();
  const FederatedResult full = run_federated(config, partition, set);

  FLConfig resumed = config;
  resumed.resume_round = 1;  // restart after round 1's checkpoint
  const FederatedResult tail = run_federated(resumed, partition, set);
  CHECK((tail.model.to_flat() - full.model.to_flat()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("config validation catches range violations") {
  FLConfig config = small_config(Variant::fclg);
  config.gamma = 0.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = small_config(Variant::fclg);
  config.tau = 0.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = small_config(Variant::fclg);
  config.alpha = 1.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = small_config(Variant::fclg);
  config.local_epochs = 0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_CASE("variant names round-trip") {
  for (const char* name : {"fclg", "fclg_h", "intra_fedavg", "intra_fedprox", "intra_kl",
                           "intra_mse", "intra_central", "vanilla_ensemble"}) {
    CHECK(variant_name(parse_variant(name)) == name);
  }
  CHECK_THROWS_AS(parse_variant("nope"), std::invalid_argument);
}
