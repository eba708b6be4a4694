#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "splitscale/ledger.hpp"

namespace splitscale::ledger {

/// Sorted flat-file snapshot of a node's chainstates.
///
///   splitscale-chainstate v1
///   depth <k>
///   mode <logical|economic>
///   boundaries <hex> ...                  (economic mode only)
///   height <tip height>
///   subsidy genesis=<sat> initial=<sat> halving=<blocks>
///   scope <full|half>
///   chainstate <subchain> <entry count>
///   <txid hex> <index> <value> <script hex> <height> <flags>
///   ...
///   end
///
/// Entries are sorted by outpoint (txid bytes, then index). flags is `-` or
/// any of `c` (coinbase) and `p` (pinned), in that order.
struct ExportHeader {
  Partition partition;
  Height height = 0;
  SubsidySchedule subsidy;
  bool full = true;
};

void write_export(std::ostream& os, const ExportHeader& header, const ChainStateSet& states);
std::string export_string(const ExportHeader& header, const ChainStateSet& states);
Digest256 export_digest(const ExportHeader& header, const ChainStateSet& states);

struct ParsedExport {
  ExportHeader header;
  ChainStateSet states;
};

/// Throws DecodeError naming the offending line.
ParsedExport read_export(std::istream& is);

struct AuditReport {
  std::vector<std::string> problems;
  Amount total_value = 0;
  Amount expected_value = 0;

  [[nodiscard]] bool ok() const { return problems.empty(); }
};

/// Partition audit plus, for full-scope exports, exact supply conservation:
/// total UTXO value must equal the subsidy issued through the tip height.
AuditReport audit_export(const ParsedExport& exported);

}  // namespace splitscale::ledger
