#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splitscale/ledger.hpp"
#include "splitscale/xfer.hpp"

namespace splitscale::chain {

using crypto::Digest256;
using crypto::SubchainId;
using crypto::U256;
using ledger::Amount;
using ledger::Height;
using ledger::OutPoint;
using ledger::Script;
using ledger::Transaction;

/// Fixed 116-byte layout: prev_hash, payload_root, height (u32), target,
/// nonce (u64), timestamp (u64, simulated ms). Integers are little-endian.
struct BlockHeader {
  Digest256 prev_hash;
  Digest256 payload_root;
  Height height = 0;
  Digest256 target;
  std::uint64_t nonce = 0;
  std::uint64_t timestamp = 0;

  [[nodiscard]] Digest256 hash() const;
  [[nodiscard]] bool meets_target() const { return hash() <= target; }

  bool operator==(const BlockHeader&) const = default;
};

inline constexpr std::size_t kHeaderSize = 116;

void write_header(ByteWriter& w, const BlockHeader& h);
BlockHeader read_header(ByteReader& r);

/// An output created in one subblock whose script routes to another sub-chain.
/// The destination subblock lists it so nodes that only see that subblock
/// still learn about it.
struct ImportedOutput {
  OutPoint outpoint;
  ledger::TxOut out;
  bool coinbase = false;

  bool operator==(const ImportedOutput&) const = default;
};

struct SubchainBlock {
  BlockHeader header;
  SubchainId subchain = 0;
  std::vector<Transaction> txs;  ///< coinbase first
  std::vector<ImportedOutput> imports;

  bool operator==(const SubchainBlock&) const = default;
};

/// Block subsidy plus eigen fees, claimed by the composite's miner.
struct RewardRecord {
  Script payout;
  Amount amount = 0;

  bool operator==(const RewardRecord&) const = default;
};

struct EigenBlock {
  BlockHeader header;
  std::vector<Digest256> subchain_header_hashes;
  std::vector<xfer::Eigentransaction> eigentxs;
  RewardRecord reward;

  bool operator==(const EigenBlock&) const = default;
};

struct CompositeBlock {
  EigenBlock eigen;
  std::vector<SubchainBlock> subblocks;

  [[nodiscard]] Digest256 hash() const { return eigen.header.hash(); }
  [[nodiscard]] Height height() const { return eigen.header.height; }

  bool operator==(const CompositeBlock&) const = default;
};

void write_subblock(ByteWriter& w, const SubchainBlock& b);
SubchainBlock read_subblock(ByteReader& r);
void write_eigen(ByteWriter& w, const EigenBlock& b);
EigenBlock read_eigen(ByteReader& r);

/// u32-length-prefixed eigen block, then a u32 count and each subblock
/// length-prefixed in sub-chain order.
Bytes serialize_composite(const CompositeBlock& cb);
CompositeBlock deserialize_composite(ByteView bytes);

/// The block-n message body: length-prefixed eigen block and one subblock.
Bytes serialize_block_n(const EigenBlock& eigen, const SubchainBlock& sub);
std::pair<EigenBlock, SubchainBlock> deserialize_block_n(ByteView bytes);

Digest256 merkle_root(std::vector<Digest256> leaves);
Digest256 import_leaf(const ImportedOutput& imp);
Digest256 reward_hash(const RewardRecord& reward);
Digest256 subblock_payload_root(const SubchainBlock& b);
Digest256 eigen_payload_root(const EigenBlock& b);

/// Where a composite's reward materializes.
OutPoint reward_outpoint(const RewardRecord& reward, Height height);

// ---------------------------------------------------------------------------
// Consensus parameters
// ---------------------------------------------------------------------------

struct SplitEvent {
  Height height = 0;  ///< splits after the composite at this height connects
  ledger::PartitionMode mode = ledger::PartitionMode::Logical;

  bool operator==(const SplitEvent&) const = default;
};

struct Targets {
  Digest256 subchain;
  Digest256 eigen;

  bool operator==(const Targets&) const = default;
};

struct ConsensusParams {
  Targets initial_targets{crypto::target_from_bits(4), crypto::target_from_bits(8)};
  std::size_t block_tx_capacity = 100;
  std::size_t eigen_capacity = xfer::kEigenCapacity;
  std::optional<xfer::EigenWindow> eigentx_window;
  ledger::SubsidySchedule subsidy;
  Height retarget_window = 20;
  std::uint64_t target_interval_ms = 600;
  std::vector<SplitEvent> splits;  ///< strictly increasing heights

  /// Split depth of the composite at height h.
  [[nodiscard]] unsigned depth_at(Height h) const;
  [[nodiscard]] const SplitEvent* split_at(Height h) const;
  /// Throws ConfigError on unsorted splits, excess depth or eigen target not
  /// below the subchain target.
  void validate() const;
};

/// Sub-chain target doubles (clamped), eigen target unchanged.
Targets split_targets(const Targets& t);
/// Scales both targets by mean/target interval, clamped to x4 and /4.
Targets retarget(const Targets& t, std::uint64_t mean_interval_ms, std::uint64_t target_interval_ms);

/// Cumulative-work tip ordering; true when `a` should be preferred to `b`.
struct TipRank {
  U256 work;
  std::uint64_t arrival = 0;
  Digest256 hash;
};
bool better_tip(const TipRank& a, const TipRank& b);
/// Index of the preferred candidate; candidates must be non-empty.
std::size_t choose_fork(std::span<const TipRank> candidates);

// ---------------------------------------------------------------------------
// Validation and connection
// ---------------------------------------------------------------------------

enum class BlockErrorCode {
  Malformed,
  BadArity,
  HeightMismatch,
  TimestampMismatch,
  BadParent,
  BadTarget,
  BadPow,
  CrossRefMismatch,
  BadMerkleRoot,
  OverCapacity,
  BadCoinbase,
  BadTx,
  BadCoinbaseValue,
  BadEigenTx,
  BadImports,
  BadReward,
};

std::string_view to_string(BlockErrorCode c);

struct BlockError {
  BlockErrorCode code = BlockErrorCode::Malformed;
  SubchainId subchain = 0;
  Digest256 txid;
  std::optional<ledger::TxError> tx_error;
  std::optional<xfer::EigenError> eigen_error;

  [[nodiscard]] std::string describe() const;
};

/// What a composite at height parent.height + 1 must agree with.
struct ParentInfo {
  Height height = 0;
  Digest256 eigen_hash;
  std::vector<Digest256> subchain_hashes;
  std::uint64_t timestamp = 0;
};

struct BlockRules {
  const ConsensusParams* params = nullptr;
  ledger::Partition partition;  ///< in force for this block
  Targets targets;
  ParentInfo parent;
  ledger::SigCache* sig_cache = nullptr;
};

/// Checks that need no chain context: each subblock is the one the eigen
/// header commits to and every payload matches its Merkle root. A failure
/// shows the payload was altered in transit, not that the header is invalid.
/// `complete` requires one subblock per committed hash, in order.
Status<BlockError> check_commitments(const EigenBlock& eigen, std::span<const SubchainBlock* const> subblocks,
                                     bool complete);

/// Header, arity, cross-reference and Merkle checks. `subblocks` may hold
/// every subblock (full nodes) or only tracked ones (half nodes).
Status<BlockError> check_structure(const EigenBlock& eigen, std::span<const SubchainBlock* const> subblocks,
                                   const BlockRules& rules);

struct CompositeUndo {
  std::vector<std::pair<SubchainId, std::vector<ledger::TxUndo>>> txs;
  std::vector<xfer::EigenUndo> eigentxs;
  std::vector<std::pair<SubchainId, OutPoint>> imported;
  std::optional<std::pair<SubchainId, OutPoint>> reward;
  /// Per connected subblock: (subchain, confirmed non-coinbase txids).
  std::vector<std::pair<SubchainId, std::vector<Digest256>>> confirmed;
  std::vector<OutPoint> spent;  ///< every outpoint consumed
};

/// Fully validates and applies the block to the tracked stores. On error the
/// stores are left untouched.
Result<CompositeUndo, BlockError> connect_block(ledger::ChainStateSet& states, const EigenBlock& eigen,
                                                std::span<const SubchainBlock* const> subblocks,
                                                const BlockRules& rules);
Result<CompositeUndo, BlockError> connect_composite(ledger::ChainStateSet& states, const CompositeBlock& cb,
                                                    const BlockRules& rules);
void disconnect_composite(ledger::ChainStateSet& states, const CompositeUndo& undo);

/// Validation without side effects (works on a copy of the stores).
Status<BlockError> validate_composite(const CompositeBlock& cb, const ledger::ChainStateSet& states,
                                      const BlockRules& rules);

// ---------------------------------------------------------------------------
// Genesis and mining
// ---------------------------------------------------------------------------

struct Genesis {
  Transaction allocation;  ///< no inputs; outputs are the initial coins
  Digest256 hash;
};

Genesis make_genesis(std::vector<ledger::TxOut> outputs);
/// Depth-0 stores holding the allocation (not coinbase, height 0).
ledger::ChainStateSet genesis_state(const Genesis& g);
ParentInfo genesis_parent(const Genesis& g);

/// Increments the nonce from `start` until the header meets its target.
/// Returns the number of hashes tried.
std::uint64_t grind(BlockHeader& header, std::uint64_t start);

struct MiningInputs {
  const ledger::ChainStateSet* states = nullptr;  ///< must be full
  std::span<const ledger::Mempool> mempools;
  const xfer::Eigenpool* eigenpool = nullptr;
  Script payout;
  std::uint64_t timestamp = 0;
  std::uint64_t nonce_seed = 0;
};

/// Builds a composite from mempool and eigenpool contents and grinds every
/// header. Subblocks are fixed before the eigen header commits to them.
CompositeBlock mine_composite(const MiningInputs& in, const BlockRules& rules);

}  // namespace splitscale::chain
