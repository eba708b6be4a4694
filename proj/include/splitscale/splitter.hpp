#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "splitscale/ledger.hpp"

namespace splitscale::splitter {

using crypto::AddressHash;
using crypto::Digest256;
using crypto::SubchainId;
using ledger::ChainState;
using ledger::ChainStateSet;
using ledger::Height;
using ledger::Mempool;
using ledger::Partition;
using ledger::PartitionMode;

struct SplitDirective {
  Height activation_height = 0;
  PartitionMode mode = PartitionMode::Logical;
  unsigned new_depth = 1;
};

enum class SplitError { EmptyState };

/// Smallest b with (value of entries hashing below b) * 2 >= total value.
/// Pinned entries are ignored.
Result<Digest256, SplitError> compute_economic_cut(const ChainState& state);

/// Child index (0 or 1) of an entry of a sub-chain being split. Logical mode
/// reads bit `old_depth` of the script hash; economic mode compares with `cut`.
unsigned child_side(const Digest256& script_hash, PartitionMode mode, unsigned old_depth, const Digest256& cut);

/// Divides sub-chain s into 2s and 2s+1. Pinned entries follow the same rule.
std::pair<ChainState, ChainState> split_chainstate(const ChainState& state, PartitionMode mode, unsigned old_depth,
                                                   const Digest256& cut = {});

/// Partition after one split. Economic mode takes one cut per sub-chain.
Partition split_partition(const Partition& old, PartitionMode mode, const std::vector<Digest256>& cuts = {});

/// Cut for sub-chain s of an economic partition: the supply median clamped
/// into s's hash interval, or the interval midpoint when s holds nothing.
Digest256 economic_cut_for(const Partition& old, SubchainId s, const ChainState& state);

/// Re-validates every pending transaction against the two children; keeps
/// those valid on exactly one. Returns the txids of flushed transactions.
std::vector<Digest256> split_mempool(const Mempool& pool, const ChainState& child0, const ChainState& child1,
                                     const Partition& partition, Height next_height, Mempool& out0, Mempool& out1,
                                     ledger::SigCache* sig_cache = nullptr);

struct SplitUndo {
  Partition old_partition;
  /// Children a half node stopped tracking; needed to undo the split.
  std::vector<ChainState> discarded;
};

struct SplitOutcome {
  SplitUndo undo;
  std::vector<Digest256> flushed;
};

/// Which children a node keeps at a split.
struct SplitScope {
  bool all = true;
  std::optional<AddressHash> follow;  ///< used when !all
};

/// Splits every tracked chainstate and mempool. With scope.all every child is
/// kept; otherwise the child `follow` routes to, else the even child.
/// `mempools` are parallel to the tracked stores.
SplitOutcome apply_split(ChainStateSet& states, std::vector<Mempool>& mempools, const SplitDirective& directive,
                         Height tip_height, const SplitScope& scope, ledger::SigCache* sig_cache = nullptr);

/// Reverses apply_split on the stores. Mempools are rebuilt by the caller.
void unsplit(ChainStateSet& states, const SplitUndo& undo);

}  // namespace splitscale::splitter
