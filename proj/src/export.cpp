#include "stockode/export.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "stockode/errors.hpp"

namespace stockode {

std::vector<TrajectoryRow> export_trajectories(
    StockOde& model, const std::vector<WindowSample>& windows,
    const std::vector<double>& fractions,
    const std::vector<std::string>& tickers) {
  if (fractions.empty()) {
    throw ContractError("export_trajectories: no fractions requested");
  }
  for (double f : fractions) {
    if (!(f > 0.0) || f > 1.0) {
      throw RangeError("export_trajectories: fraction " + std::to_string(f) +
                       " outside (0, 1]");
    }
  }
  DerivFn deriv = model.ode_deriv();
  const SolverConfig solver{model.config().substeps};

  std::vector<TrajectoryRow> rows;
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    ForwardArtifacts art = model.evaluate(windows[wi]);
    for (std::size_t day = 0; day < art.trajectory.size(); ++day) {
      for (double f : fractions) {
        const Tensor h = query_trajectory(art.trajectory[day], deriv, solver, f);
        const bool at_endpoint = std::abs(f - 1.0) < 1e-12;
        const Tensor& z = at_endpoint ? art.z_days[day] : h;
        const Tensor decoded =
            model.decode_state(art.p_days[day], z, art.fused);
        for (std::size_t s = 0; s < decoded.size(); ++s) {
          double norm = 0.0;
          for (std::size_t k = 0; k < h.dim(1); ++k)
            norm += h.at(s, k) * h.at(s, k);
          rows.push_back({wi, day, f, tickers.at(s), std::sqrt(norm),
                          decoded[s]});
        }
      }
    }
  }
  return rows;
}

void write_trajectories_csv(const std::filesystem::path& path,
                            const std::vector<TrajectoryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trajectories " + path.string());
  out << "window_index,day,fraction,stock,hidden_norm,decoded_return\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%s,%.17g,%.17g",
                  r.window_index, r.day, r.fraction, r.stock.c_str(),
                  r.hidden_norm, r.decoded_return);
    out << buf << '\n';
  }
}

}  // namespace stockode
