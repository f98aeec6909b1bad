#pragma once

#include <vector>

#include "stockode/autodiff.hpp"
#include "stockode/market_data.hpp"
#include "stockode/rng.hpp"

namespace stockode {

/// Stock/hyperedge incidence plus the degree-normalized propagation
/// operators, precomputed once. Stocks in no hyperedge get a zero row in the
/// stock mixer rather than an error.
struct Hypergraph {
  Tensor incidence;     // M (N x |E|), entries {0, 1}
  Tensor edge_weights;  // diagonal of Psi, identity by default (|E|)
  Tensor stock_degree;  // diagonal of D: D_ii = sum_j Psi_jj M_ij
  Tensor edge_degree;   // diagonal of O: O_jj = sum_i M_ij
  Tensor stock_mixer;   // D^-1 M Psi O^-1 M^T (N x N)
  Tensor edge_pool;     // O^-1 M^T (|E| x N), the hyperedge-mean operator

  std::size_t n_stocks() const { return incidence.dim(0); }
  std::size_t n_edges() const { return incidence.dim(1); }
};

Hypergraph build_hypergraph(const RelationSet& relations,
                            const StockUniverse& universe);

/// Graph over hyperedges: Jaccard-weighted connectivity of member sets.
struct MetaHypergraph {
  Tensor omega;  // (|E| x |E|), symmetric, zero diagonal
  Tensor mixer;  // Dhat^-1 (omega + I), row-stochastic
};

MetaHypergraph build_meta(const Hypergraph& g);

/// U_out = D^-1 M Psi O^-1 M^T U_in W.
Var hyperconv(Tape& tape, Var u_in, const Hypergraph& g, Var w);

/// B_out = Dhat^-1 (omega + I) B_in W.
Var metaconv(Tape& tape, Var b_in, const MetaHypergraph& m, Var w);

/// F = U B^T W_F.
Var fuse(Tape& tape, Var u, Var b, Var w_fuse);

struct HhcnWeights {
  std::size_t d_prime;
  std::size_t layers;
  bool use_meta;  // false = skip the inter-domain convolutions
  Parameter w_proj;                  // input projection d -> d'
  std::vector<Parameter> w_stock;    // per intra-domain layer (d' x d')
  std::vector<Parameter> w_edge;     // per inter-domain layer (d' x d')
  Parameter w_fuse;                  // (|E| x d_out)

  HhcnWeights(std::size_t d_in, std::size_t d_prime, std::size_t d_out,
              std::size_t layers, std::size_t n_edges, bool use_meta,
              Rng& rng);
  void collect(std::vector<Parameter*>& out);
};

struct DomainKnowledge {
  Var u;  // stock-level (N x d')
  Var b;  // hyperedge-level (|E| x d')
  Var f;  // fused (N x d_out)
};

/// Projected input, L intra-domain layers (tanh between layers), hyperedge
/// means as B^(0), L inter-domain layers, bilinear fusion.
DomainKnowledge hhcn_forward(Tape& tape, Var stock_features,
                             const Hypergraph& g, const MetaHypergraph& meta,
                             HhcnWeights& weights);

}  // namespace stockode
