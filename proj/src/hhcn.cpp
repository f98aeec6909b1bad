#include "stockode/hhcn.hpp"

#include "stockode/errors.hpp"
#include "stockode/trend.hpp"  // init_weight

namespace stockode {

Hypergraph build_hypergraph(const RelationSet& relations,
                            const StockUniverse& universe) {
  const std::size_t n = universe.size();
  const std::size_t m = relations.edges.size();
  if (m == 0) {
    throw ConfigError("build_hypergraph: relation set has no hyperedges");
  }

  Hypergraph g;
  g.incidence = Tensor({n, m});
  g.edge_weights = Tensor::full({m}, 1.0);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& edge = relations.edges[j];
    if (edge.members.size() < 2) {
      throw ContractError("build_hypergraph: hyperedge '" + edge.label +
                          "' has fewer than 2 members");
    }
    for (std::size_t i : edge.members) {
      if (i >= n) {
        throw ContractError("build_hypergraph: member index out of range in '" +
                            edge.label + "'");
      }
      g.incidence.at(i, j) = 1.0;
    }
  }

  g.stock_degree = Tensor({n});
  g.edge_degree = Tensor({m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      g.stock_degree[i] += g.edge_weights[j] * g.incidence.at(i, j);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < n; ++i)
      g.edge_degree[j] += g.incidence.at(i, j);

  g.edge_pool = Tensor({m, n});
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < n; ++i)
      g.edge_pool.at(j, i) = g.incidence.at(i, j) / g.edge_degree[j];

  // D^-1 M Psi O^-1 M^T with the zero-degree rows dropped
  g.stock_mixer = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    if (g.stock_degree[i] == 0.0) continue;
    const double inv_d = 1.0 / g.stock_degree[i];
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        acc += g.incidence.at(i, j) * g.edge_weights[j] *
               g.edge_pool.at(j, k);
      }
      g.stock_mixer.at(i, k) = inv_d * acc;
    }
  }
  return g;
}

MetaHypergraph build_meta(const Hypergraph& g) {
  const std::size_t m = g.n_edges();
  if (m < 1) throw ContractError("build_meta: need at least one hyperedge");

  MetaHypergraph meta;
  meta.omega = Tensor({m, m});
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      double inter = 0.0;
      for (std::size_t i = 0; i < g.n_stocks(); ++i)
        inter += g.incidence.at(i, a) * g.incidence.at(i, b);
      if (inter > 0.0) {
        const double uni = g.edge_degree[a] + g.edge_degree[b] - inter;
        meta.omega.at(a, b) = meta.omega.at(b, a) = inter / uni;
      }
    }
  }

  meta.mixer = Tensor({m, m});
  for (std::size_t a = 0; a < m; ++a) {
    double deg = 0.0;
    for (std::size_t b = 0; b < m; ++b)
      deg += meta.omega.at(a, b) + (a == b ? 1.0 : 0.0);
    for (std::size_t b = 0; b < m; ++b)
      meta.mixer.at(a, b) =
          (meta.omega.at(a, b) + (a == b ? 1.0 : 0.0)) / deg;
  }
  return meta;
}

Var hyperconv(Tape& tape, Var u_in, const Hypergraph& g, Var w) {
  return tape.matmul(tape.matmul(tape.constant(g.stock_mixer), u_in), w);
}

Var metaconv(Tape& tape, Var b_in, const MetaHypergraph& m, Var w) {
  return tape.matmul(tape.matmul(tape.constant(m.mixer), b_in), w);
}

Var fuse(Tape& tape, Var u, Var b, Var w_fuse) {
  return tape.matmul(tape.matmul(u, tape.transpose(b)), w_fuse);
}

HhcnWeights::HhcnWeights(std::size_t d_in, std::size_t d_prime,
                         std::size_t d_out, std::size_t layers,
                         std::size_t n_edges, bool use_meta, Rng& rng)
    : d_prime(d_prime),
      layers(layers),
      use_meta(use_meta),
      w_proj("hhcn.w_proj", init_weight(rng, d_in, d_prime)),
      w_fuse("hhcn.w_fuse", init_weight(rng, n_edges, d_out)) {
  if (layers < 1) throw ConfigError("hhcn: need at least one graph layer");
  w_stock.reserve(layers);
  w_edge.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    w_stock.emplace_back("hhcn.stock" + std::to_string(l),
                         init_weight(rng, d_prime, d_prime));
    if (use_meta) {
      w_edge.emplace_back("hhcn.edge" + std::to_string(l),
                          init_weight(rng, d_prime, d_prime));
    }
  }
}

void HhcnWeights::collect(std::vector<Parameter*>& out) {
  out.push_back(&w_proj);
  for (auto& p : w_stock) out.push_back(&p);
  for (auto& p : w_edge) out.push_back(&p);
  out.push_back(&w_fuse);
}

DomainKnowledge hhcn_forward(Tape& tape, Var stock_features,
                             const Hypergraph& g, const MetaHypergraph& meta,
                             HhcnWeights& weights) {
  DomainKnowledge out;
  Var u0 = tape.matmul(stock_features, tape.param(weights.w_proj));
  out.u = u0;
  for (std::size_t l = 0; l < weights.layers; ++l) {
    out.u = hyperconv(tape, out.u, g, tape.param(weights.w_stock[l]));
    if (l + 1 < weights.layers) out.u = tape.tanh(out.u);
  }
  out.b = tape.matmul(tape.constant(g.edge_pool), u0);
  if (weights.use_meta) {
    for (std::size_t l = 0; l < weights.layers; ++l) {
      out.b = metaconv(tape, out.b, meta, tape.param(weights.w_edge[l]));
      if (l + 1 < weights.layers) out.b = tape.tanh(out.b);
    }
  }
  out.f = fuse(tape, out.u, out.b, tape.param(weights.w_fuse));
  return out;
}

}  // namespace stockode
