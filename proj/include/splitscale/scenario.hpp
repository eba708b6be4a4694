#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "splitscale/netsim.hpp"

namespace splitscale::scenario {

/// 1-based position of a problem in a scenario file. Line 0 means the file
/// as a whole.
struct Diagnostic {
  std::size_t line = 0;
  std::size_t column = 0;
  std::string message;

  [[nodiscard]] std::string str() const;
};

inline const std::set<std::string>& all_metric_groups() {
  static const std::set<std::string> groups{"confirmed", "blocks", "bytes", "fees", "reorgs", "stats"};
  return groups;
}

struct Scenario {
  netsim::SimConfig config;
  std::set<std::string> metrics = all_metric_groups();
};

/// Parses the line-oriented scenario format. Every problem found is
/// reported; the result holds a scenario only when there are none.
Result<Scenario, std::vector<Diagnostic>> parse_scenario(std::string_view text);
Result<Scenario, std::vector<Diagnostic>> load_scenario(const std::filesystem::path& file);

struct Summary {
  double tx_per_interval = 0;
  std::optional<double> baseline_tx_per_interval;
  std::optional<double> scale_factor;
  std::optional<std::uint64_t> full_block_bytes;  ///< reference node, second half
  std::optional<std::uint64_t> half_block_bytes;  ///< first half node, second half
  std::optional<double> bandwidth_ratio;
};

/// Scale factor against the same scenario with its splits removed, and the
/// half/full block byte ratio.
Summary summarize(const Scenario& s, const netsim::SimReport& report);

std::string metrics_csv(const Scenario& s, const netsim::SimReport& report);
std::string summary_text(const Scenario& s, const netsim::SimReport& report, const Summary& summary);

inline constexpr std::string_view kMetricsHeader = "record,height,node,subchain,kind,value";

struct RunResult {
  netsim::SimReport report;
  Summary summary;
};

/// Runs the simulation and writes metrics.csv, summary.txt, trace.log,
/// chainstate.export and blocks.bin into `out`.
RunResult run_scenario(const Scenario& s, const std::filesystem::path& out);

}  // namespace splitscale::scenario
