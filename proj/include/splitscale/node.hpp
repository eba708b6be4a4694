#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "splitscale/chain.hpp"
#include "splitscale/chainstate_export.hpp"
#include "splitscale/splitter.hpp"
#include "splitscale/xfer.hpp"

namespace splitscale::node {

using chain::CompositeBlock;
using chain::EigenBlock;
using chain::SubchainBlock;
using crypto::AddressHash;
using crypto::Digest256;
using crypto::SubchainId;
using crypto::U256;
using ledger::Height;
using ledger::OutPoint;

enum class Role { Miner, Full, Half };

std::string_view to_string(Role r);
std::optional<Role> parse_role(std::string_view s);

/// Sub-chain a half node tracks at `depth` under the logical partition: at
/// each split it keeps the child its follow address routes to, else the even
/// child.
SubchainId half_tracked_subchain(const std::optional<AddressHash>& follow, unsigned depth);

/// Block body as held by a node. Full nodes keep the composite; half nodes
/// keep the eigen block and their one subblock (possibly aliasing a composite).
struct BlockPayload {
  std::shared_ptr<const CompositeBlock> composite;
  std::shared_ptr<const EigenBlock> eigen;
  std::shared_ptr<const SubchainBlock> sub;

  static BlockPayload full(std::shared_ptr<const CompositeBlock> cb);
  static BlockPayload partial(std::shared_ptr<const EigenBlock> eigen, std::shared_ptr<const SubchainBlock> sub);
  /// Eigen block plus subblock `index` of a shared composite, without copying.
  static BlockPayload slice(const std::shared_ptr<const CompositeBlock>& cb, std::size_t index);

  [[nodiscard]] const EigenBlock& eigen_block() const { return *eigen; }
};

struct BlockEntry {
  Digest256 hash;
  Digest256 parent;
  Height height = 0;
  BlockPayload payload;
  chain::Targets targets;  ///< targets this block had to meet
  U256 work;               ///< cumulative eigen work
  std::uint64_t arrival = 0;
  bool invalid = false;

  [[nodiscard]] const EigenBlock& eigen() const { return payload.eigen_block(); }
  [[nodiscard]] std::uint64_t timestamp() const { return payload.eigen ? eigen().header.timestamp : 0; }
};

/// A coin appearing in or leaving a tracked chainstate.
struct CoinDelta {
  SubchainId subchain = 0;
  OutPoint outpoint;
  ledger::Coin coin;
};

struct ChainDelta {
  Height height = 0;  ///< active height after the change
  std::vector<CoinDelta> added;
  std::vector<OutPoint> removed;
};

struct NodeStats {
  std::uint64_t blocks_connected = 0;
  std::uint64_t blocks_disconnected = 0;
  std::uint64_t blocks_rejected = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t orphans = 0;
  std::uint64_t reorgs = 0;
  std::uint64_t max_reorg_depth = 0;
  std::uint64_t last_reorg_depth = 0;
  std::uint64_t txs_accepted = 0;
  std::uint64_t txs_rejected = 0;
  std::uint64_t eigentxs_accepted = 0;
  std::uint64_t eigentxs_rejected = 0;
};

enum class BlockStatus { Connected, Stored, Duplicate, Orphan, Invalid };

std::string_view to_string(BlockStatus s);

struct ReceiveResult {
  BlockStatus status = BlockStatus::Invalid;
  Digest256 hash;
  std::optional<chain::BlockError> error;
  std::optional<Digest256> missing_parent;
  /// Blocks newly on the active chain, oldest first (relay candidates).
  std::vector<Digest256> connected;
};

struct NodeConfig {
  std::string name;
  Role role = Role::Full;
  std::optional<AddressHash> follow;  ///< half-node child selection at splits
};

class Node {
 public:
  Node(NodeConfig config, const chain::ConsensusParams& params, const chain::Genesis& genesis);

  [[nodiscard]] const NodeConfig& config() const { return config_; }
  [[nodiscard]] Role role() const { return config_.role; }
  [[nodiscard]] bool is_half() const { return config_.role == Role::Half; }
  [[nodiscard]] const chain::ConsensusParams& params() const { return params_; }

  ReceiveResult receive_block(std::shared_ptr<const CompositeBlock> cb);
  ReceiveResult receive_block_n(std::shared_ptr<const EigenBlock> eigen, std::shared_ptr<const SubchainBlock> sub);
  ReceiveResult receive(BlockPayload payload);

  /// Returns the sub-chain the transaction was accepted on.
  Result<SubchainId, ledger::TxError> submit_tx(const ledger::Transaction& tx);
  Status<xfer::EigenError> submit_eigentx(const xfer::Eigentransaction& etx);

  /// Miners only: a composite extending the active tip.
  std::shared_ptr<const CompositeBlock> mine(std::uint64_t timestamp, const ledger::Script& payout,
                                             std::uint64_t nonce_seed) const;

  [[nodiscard]] Height tip_height() const { return static_cast<Height>(active_.size() - 1); }
  [[nodiscard]] const BlockEntry& tip() const { return *active_.back(); }
  [[nodiscard]] const BlockEntry* find(const Digest256& hash) const;
  [[nodiscard]] const std::vector<const BlockEntry*>& active_chain() const { return active_; }
  [[nodiscard]] const ledger::ChainStateSet& states() const { return states_; }
  [[nodiscard]] const ledger::Partition& partition() const { return states_.partition(); }
  [[nodiscard]] const ledger::Mempool* mempool(SubchainId id) const;
  [[nodiscard]] const std::vector<ledger::Mempool>& mempools() const { return mempools_; }
  [[nodiscard]] const xfer::Eigenpool& eigenpool() const { return eigenpool_; }
  [[nodiscard]] bool tracks(SubchainId id) const { return states_.find(id) != nullptr; }
  [[nodiscard]] const NodeStats& stats() const { return stats_; }
  /// Sub-chain whose subblock this node needs at the next height.
  [[nodiscard]] std::optional<SubchainId> tracked_subchain() const;

  [[nodiscard]] ledger::ExportHeader export_header() const;
  [[nodiscard]] std::string export_chainstate() const;
  [[nodiscard]] Digest256 export_digest() const;

  /// Rules the next block on the active tip must satisfy.
  [[nodiscard]] chain::BlockRules next_rules() const;

  /// Every tracked sub-chain's tip height equals the eigen tip height.
  /// Throws InvariantViolation.
  void check_tip_heights() const;

  std::function<void(const ChainDelta&)> on_delta;
  std::function<void(const Digest256&)> on_evict;

 private:
  struct HeightUndo {
    chain::CompositeUndo block;
    std::optional<splitter::SplitUndo> split;
  };

  BlockEntry* lookup(const Digest256& hash);
  chain::Targets targets_after(const BlockEntry& parent) const;
  chain::ParentInfo parent_info(const BlockEntry& parent) const;
  ReceiveResult admit(BlockPayload payload);
  void mark_invalid(BlockEntry& entry);
  bool activate(BlockEntry& candidate, ReceiveResult& result);
  std::optional<chain::BlockError> connect_entry(const BlockEntry& entry, bool maintain_pools);
  void disconnect_tip();
  void rebuild_pools(std::vector<ledger::Transaction> txs, std::vector<xfer::Eigentransaction> etxs,
                     const std::set<Digest256>& previously_pending);
  void emit_connect_delta(const BlockEntry& entry, const chain::CompositeUndo& undo);
  void emit_disconnect_delta(const chain::CompositeUndo& undo);
  void evict(const Digest256& id);
  std::vector<const SubchainBlock*> subblocks_of(const BlockEntry& entry) const;

  NodeConfig config_;
  chain::ConsensusParams params_;
  chain::Genesis genesis_;
  std::unordered_map<Digest256, std::unique_ptr<BlockEntry>> index_;
  std::unordered_map<Digest256, std::vector<BlockPayload>> orphans_;
  std::vector<const BlockEntry*> active_;
  std::vector<HeightUndo> undo_;
  std::vector<Height> subchain_tip_heights_;  ///< parallel to states_.states()
  ledger::ChainStateSet states_;
  std::vector<ledger::Mempool> mempools_;
  xfer::Eigenpool eigenpool_;
  ledger::SigCache sig_cache_;
  NodeStats stats_;
  std::uint64_t arrivals_ = 0;
};

}  // namespace splitscale::node
