#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "stockode/hhcn.hpp"
#include "stockode/optimizer.hpp"

using namespace stockode;

namespace {

RelationSet make_relations(
    const std::vector<std::vector<std::size_t>>& edges) {
  RelationSet rel;
  for (std::size_t j = 0; j < edges.size(); ++j) {
    rel.edges.push_back({"test:e" + std::to_string(j), edges[j]});
  }
  return rel;
}

StockUniverse make_universe(std::size_t n) {
  std::vector<std::string> tickers;
  for (std::size_t i = 0; i < n; ++i)
    tickers.push_back("T" + std::to_string(i));
  return StockUniverse::from_tickers(std::move(tickers));
}

RelationSet random_relations(std::size_t n, std::size_t m, Rng& rng) {
  RelationSet rel;
  for (std::size_t j = 0; j < m; ++j) {
    std::set<std::size_t> members;
    const std::size_t size = 2 + rng.uniform_index(n - 1);
    while (members.size() < size) members.insert(rng.uniform_index(n));
    rel.edges.push_back(
        {"rand:e" + std::to_string(j),
         std::vector<std::size_t>(members.begin(), members.end())});
  }
  return rel;
}

// literal evaluation of D^-1 M Psi O^-1 M^T U W with explicit loops
Tensor dense_hyperconv_oracle(const Hypergraph& g, const Tensor& u,
                              const Tensor& w) {
  const std::size_t n = g.n_stocks(), m = g.n_edges();
  Tensor edge_mean({m, u.dim(1)});
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < u.dim(1); ++k) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i)
        acc += g.incidence.at(i, j) * u.at(i, k);
      edge_mean.at(j, k) = acc / g.edge_degree[j];
    }
  Tensor gathered({n, u.dim(1)});
  for (std::size_t i = 0; i < n; ++i) {
    if (g.stock_degree[i] == 0.0) continue;
    for (std::size_t k = 0; k < u.dim(1); ++k) {
      double acc = 0;
      for (std::size_t j = 0; j < m; ++j)
        acc += g.incidence.at(i, j) * g.edge_weights[j] * edge_mean.at(j, k);
      gathered.at(i, k) = acc / g.stock_degree[i];
    }
  }
  return matmul(gathered, w);
}

}  // namespace

TEST_CASE("build_hypergraph degrees match hand counts") {
  auto u = make_universe(3);
  auto g = build_hypergraph(make_relations({{0, 1}, {1, 2}}), u);
  const double m_expect[3][2] = {{1, 0}, {1, 1}, {0, 1}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(g.incidence.at(i, j) == m_expect[i][j]);
  CHECK(g.stock_degree[0] == 1.0);
  CHECK(g.stock_degree[1] == 2.0);
  CHECK(g.stock_degree[2] == 1.0);
  CHECK(g.edge_degree[0] == 2.0);
  CHECK(g.edge_degree[1] == 2.0);
}

TEST_CASE("complete hyperedge and isolated stock") {
  auto u = make_universe(4);
  auto g = build_hypergraph(make_relations({{0, 1, 2, 3}}), u);
  CHECK(g.edge_degree[0] == 4.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(g.stock_degree[i] == 1.0);

  auto g2 = build_hypergraph(make_relations({{0, 1}}), make_universe(3));
  CHECK(g2.stock_degree[2] == 0.0);

  CHECK_THROWS_AS(build_hypergraph(RelationSet{}, u), ConfigError);
}

TEST_CASE("hyperconv averages over a single edge") {
  auto u = make_universe(2);
  auto g = build_hypergraph(make_relations({{0, 1}}), u);
  Rng rng(3);
  Tensor u_in = rng.normal_tensor({2, 3});
  Tape tape;
  Var out = hyperconv(tape, tape.constant(u_in),
                      g, tape.constant(Tensor::identity(3)));
  for (std::size_t k = 0; k < 3; ++k) {
    const double mean = 0.5 * (u_in.at(0, k) + u_in.at(1, k));
    CHECK(out.value().at(0, k) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(out.value().at(1, k) == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("hyperconv zeroes isolated stocks") {
  auto g = build_hypergraph(make_relations({{0, 1}}), make_universe(3));
  Rng rng(5);
  Tape tape;
  Var out = hyperconv(tape, tape.constant(rng.normal_tensor({3, 2})), g,
                      tape.constant(rng.normal_tensor({2, 2})));
  CHECK(out.value().at(2, 0) == 0.0);
  CHECK(out.value().at(2, 1) == 0.0);
}

TEST_CASE("hyperconv preserves constant rows on covered stocks") {
  Rng rng(7);
  auto g = build_hypergraph(
      make_relations({{0, 1, 2}, {2, 3}, {1, 3, 4}}), make_universe(5));
  Tensor row = rng.normal_tensor({1, 4});
  Tensor u_in({5, 4});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 4; ++k) u_in.at(i, k) = row[k];
  Tape tape;
  Var out = hyperconv(tape, tape.constant(u_in), g,
                      tape.constant(Tensor::identity(4)));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 4; ++k)
      CHECK(out.value().at(i, k) == doctest::Approx(row[k]).epsilon(1e-12));
}

TEST_CASE("meta hypergraph jaccard weights") {
  // e0 = {A,B,C}, e1 = {B,C,D} -> 2/4
  auto g = build_hypergraph(make_relations({{0, 1, 2}, {1, 2, 3}}),
                            make_universe(4));
  auto meta = build_meta(g);
  CHECK(meta.omega.at(0, 1) == doctest::Approx(0.5));
  CHECK(meta.omega.at(1, 0) == doctest::Approx(0.5));
  CHECK(meta.omega.at(0, 0) == 0.0);

  SUBCASE("disjoint edges share no weight") {
    auto g2 = build_hypergraph(make_relations({{0, 1}, {2, 3}}),
                               make_universe(4));
    auto m2 = build_meta(g2);
    CHECK(m2.omega.at(0, 1) == 0.0);
    // omega + I with unit degrees: mixer is the identity
    CHECK(m2.mixer.at(0, 0) == 1.0);
    CHECK(m2.mixer.at(0, 1) == 0.0);
  }
}

TEST_CASE("meta weights match a set-based brute force") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto rel = random_relations(8, 5, rng);
    auto g = build_hypergraph(rel, make_universe(8));
    auto meta = build_meta(g);
    for (std::size_t a = 0; a < 5; ++a) {
      std::set<std::size_t> sa(rel.edges[a].members.begin(),
                               rel.edges[a].members.end());
      double row_sum = 0.0;
      for (std::size_t b = 0; b < 5; ++b) {
        std::set<std::size_t> sb(rel.edges[b].members.begin(),
                                 rel.edges[b].members.end());
        std::set<std::size_t> inter, uni;
        for (auto v : sa)
          if (sb.count(v)) inter.insert(v);
        uni = sa;
        uni.insert(sb.begin(), sb.end());
        const double expect =
            (a == b || inter.empty())
                ? 0.0
                : double(inter.size()) / double(uni.size());
        CHECK(meta.omega.at(a, b) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(meta.omega.at(a, b) == meta.omega.at(b, a));
        CHECK(meta.omega.at(a, b) >= 0.0);
        CHECK(meta.omega.at(a, b) <= 1.0);
        row_sum += meta.mixer.at(a, b);
      }
      CHECK(std::abs(row_sum - 1.0) < 1e-12);  // row-stochastic mixer
    }
  }
}

TEST_CASE("metaconv on two fully overlapping edges averages rows") {
  // identical member sets give jaccard 1
  auto g = build_hypergraph(make_relations({{0, 1, 2}, {0, 1, 2}}),
                            make_universe(3));
  auto meta = build_meta(g);
  REQUIRE(meta.omega.at(0, 1) == 1.0);
  Rng rng(13);
  Tensor b_in = rng.normal_tensor({2, 3});
  Tensor w = rng.normal_tensor({3, 3});
  Tape tape;
  Var out = metaconv(tape, tape.constant(b_in), meta, tape.constant(w));
  Tensor mean_rows({2, 3});
  for (std::size_t k = 0; k < 3; ++k) {
    const double mean = 0.5 * (b_in.at(0, k) + b_in.at(1, k));
    mean_rows.at(0, k) = mean_rows.at(1, k) = mean;
  }
  Tensor expect = matmul(mean_rows, w);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(out.value()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("fuse zero and selector behavior") {
  Rng rng(17);
  Tape tape;
  Var u = tape.constant(rng.normal_tensor({4, 3}));
  Var b0 = tape.constant(Tensor({2, 3}));
  Var wf = tape.constant(rng.normal_tensor({2, 5}));
  Var f = fuse(tape, u, b0, wf);
  for (std::size_t i = 0; i < f.value().size(); ++i)
    CHECK(f.value()[i] == 0.0);

  // u as a row selector pulls out rows of B^T W_F
  Tensor sel({2, 3});
  sel.at(0, 1) = 1.0;
  sel.at(1, 2) = 1.0;
  Tensor b_val = rng.normal_tensor({2, 3});
  Tape t2;
  Var f2 = fuse(t2, t2.constant(sel), t2.constant(b_val),
                t2.constant(Tensor::identity(2)));
  Tensor bt = transpose(b_val);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(f2.value().at(0, j) == doctest::Approx(bt.at(1, j)));
    CHECK(f2.value().at(1, j) == doctest::Approx(bt.at(2, j)));
  }
}

TEST_CASE("random instances match dense oracles") {
  Rng rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng.uniform_index(10);   // <= 12
    const std::size_t m = 1 + rng.uniform_index(6);    // <= 6
    auto rel = random_relations(n, m, rng);
    auto g = build_hypergraph(rel, make_universe(n));
    auto meta = build_meta(g);

    Tensor u_in = rng.normal_tensor({n, 4});
    Tensor w_u = rng.normal_tensor({4, 4});
    Tensor b_in = rng.normal_tensor({m, 4});
    Tensor w_b = rng.normal_tensor({4, 4});
    Tensor w_f = rng.normal_tensor({m, 3});

    Tape tape;
    Var u_out = hyperconv(tape, tape.constant(u_in), g, tape.constant(w_u));
    Tensor u_expect = dense_hyperconv_oracle(g, u_in, w_u);
    for (std::size_t i = 0; i < u_expect.size(); ++i)
      CHECK(std::abs(u_out.value()[i] - u_expect[i]) < 1e-10);

    Var b_out = metaconv(tape, tape.constant(b_in), meta, tape.constant(w_b));
    Tensor b_expect = matmul(matmul(meta.mixer, b_in), w_b);
    for (std::size_t i = 0; i < b_expect.size(); ++i)
      CHECK(std::abs(b_out.value()[i] - b_expect[i]) < 1e-10);

    Var f_out = fuse(tape, tape.constant(u_in), tape.constant(b_in),
                     tape.constant(w_f));
    Tensor f_expect = matmul(matmul(u_in, transpose(b_in)), w_f);
    for (std::size_t i = 0; i < f_expect.size(); ++i)
      CHECK(std::abs(f_out.value()[i] - f_expect[i]) < 1e-10);
  }
}

TEST_CASE("hhcn_forward composes the three stages") {
  Rng rng(23);
  auto g = build_hypergraph(make_relations({{0, 1}, {1, 2, 3}}),
                            make_universe(4));
  auto meta = build_meta(g);
  HhcnWeights weights(5, 3, 6, 1, 2, true, rng);
  Tensor features = rng.normal_tensor({4, 5});

  Tape tape;
  DomainKnowledge dk =
      hhcn_forward(tape, tape.constant(features), g, meta, weights);
  CHECK(dk.f.value().dim(0) == 4);
  CHECK(dk.f.value().dim(1) == 6);

  // manual composition
  Tensor u0 = matmul(features, weights.w_proj.value);
  Tensor u1 = dense_hyperconv_oracle(g, u0, weights.w_stock[0].value);
  Tensor b0 = matmul(g.edge_pool, u0);
  Tensor b1 = matmul(matmul(meta.mixer, b0), weights.w_edge[0].value);
  Tensor f = matmul(matmul(u1, transpose(b1)), weights.w_fuse.value);
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK(dk.f.value()[i] == doctest::Approx(f[i]).epsilon(1e-10));
}

TEST_CASE("removing half the hyperedges changes the fused knowledge") {
  Rng rng(29);
  auto rel = random_relations(8, 4, rng);
  auto universe = make_universe(8);
  auto g = build_hypergraph(rel, universe);
  auto meta = build_meta(g);
  HhcnWeights weights(5, 3, 4, 1, 4, true, rng);
  Tensor features = rng.normal_tensor({8, 5});

  Tape t1;
  Tensor f_full =
      hhcn_forward(t1, t1.constant(features), g, meta, weights).f.value();

  RelationSet half;
  half.edges.assign(rel.edges.begin(), rel.edges.begin() + 2);
  auto g2 = build_hypergraph(half, universe);
  auto meta2 = build_meta(g2);
  HhcnWeights w2(5, 3, 4, 1, 2, true, rng);
  w2.w_proj.value = weights.w_proj.value;
  w2.w_stock[0].value = weights.w_stock[0].value;
  w2.w_edge[0].value = weights.w_edge[0].value;
  Tape t2;
  Tensor f_half =
      hhcn_forward(t2, t2.constant(features), g2, meta2, w2).f.value();

  double diff = 0.0;
  for (std::size_t i = 0; i < f_full.size(); ++i)
    diff = std::max(diff, std::abs(f_full[i] - f_half[i]));
  CHECK(diff > 1e-6);
}

TEST_CASE("hyperedge relabeling with permuted fusion weights is neutral") {
  Rng rng(31);
  auto rel = random_relations(6, 4, rng);
  auto universe = make_universe(6);
  const std::size_t perm[4] = {2, 0, 3, 1};
  RelationSet relabeled;
  for (std::size_t j = 0; j < 4; ++j)
    relabeled.edges.push_back(rel.edges[perm[j]]);

  auto g1 = build_hypergraph(rel, universe);
  auto g2 = build_hypergraph(relabeled, universe);
  auto m1 = build_meta(g1);
  auto m2 = build_meta(g2);

  HhcnWeights w1(5, 3, 4, 1, 4, true, rng);
  HhcnWeights w2(5, 3, 4, 1, 4, true, rng);
  w2.w_proj.value = w1.w_proj.value;
  w2.w_stock[0].value = w1.w_stock[0].value;
  w2.w_edge[0].value = w1.w_edge[0].value;
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t k = 0; k < 4; ++k)
      w2.w_fuse.value.at(j, k) = w1.w_fuse.value.at(perm[j], k);

  Tensor features = rng.normal_tensor({6, 5});
  Tape t1, t2;
  Tensor f1 = hhcn_forward(t1, t1.constant(features), g1, m1, w1).f.value();
  Tensor f2 = hhcn_forward(t2, t2.constant(features), g2, m2, w2).f.value();
  for (std::size_t i = 0; i < f1.size(); ++i)
    CHECK(std::abs(f1[i] - f2[i]) < 1e-10);
}

TEST_CASE("hhcn gradients match finite differences") {
  Rng rng(37);
  auto g = build_hypergraph(make_relations({{0, 1, 2}, {2, 3}}),
                            make_universe(4));
  auto meta = build_meta(g);
  HhcnWeights weights(4, 3, 3, 2, 2, true, rng);
  std::vector<Parameter*> params;
  weights.collect(params);
  Tensor features = rng.normal_tensor({4, 4});
  Tensor probe = rng.normal_tensor({4, 3});

  auto model = [&](Tape& t) {
    DomainKnowledge dk =
        hhcn_forward(t, t.constant(features), g, meta, weights);
    return t.sum(t.mul(dk.f, t.constant(probe)));
  };
  CHECK(gradcheck(model, params, 1e-6) < 1e-5);
}
