#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "splitscale/bytes.hpp"
#include "splitscale/crypto.hpp"
#include "splitscale/result.hpp"

namespace splitscale::ledger {

using crypto::AddressHash;
using crypto::Digest256;
using crypto::SubchainId;

using Amount = std::uint64_t;
using Height = std::uint32_t;

inline constexpr Amount kMaxMoney = 21'000'000ULL * 100'000'000ULL;
/// Confirmations before coinbase and block-reward outputs may be spent.
inline constexpr Height kCoinbaseMaturity = 10;

struct OutPoint {
  Digest256 txid;
  std::uint32_t index = 0;

  auto operator<=>(const OutPoint&) const = default;
};

// ---------------------------------------------------------------------------
// Scripts
// ---------------------------------------------------------------------------

struct P2pkh {
  AddressHash address{};
  bool operator==(const P2pkh&) const = default;
};

/// Claimable by `receiver` with the hashlock preimage, or by `sender` once
/// the spending block height reaches `timelock`.
struct Htlc {
  Digest256 hashlock;
  Height timelock = 0;
  AddressHash receiver{};
  AddressHash sender{};
  bool operator==(const Htlc&) const = default;
};

/// Structured locking script. The canonical bytes follow the familiar opcode
/// templates, so P2PKH serializes as
/// OP_DUP OP_HASH160 <20> OP_EQUALVERIFY OP_CHECKSIG.
class Script {
 public:
  using Kind = std::variant<P2pkh, Htlc>;

  Script() : Script(P2pkh{}) {}
  explicit Script(Kind kind);

  static Script p2pkh(const AddressHash& address) { return Script(P2pkh{address}); }
  static Script htlc(const Digest256& hashlock, Height timelock, const AddressHash& receiver,
                     const AddressHash& sender) {
    return Script(Htlc{hashlock, timelock, receiver, sender});
  }
  /// Inverse of bytes(); throws DecodeError for anything but the two templates.
  static Script parse(ByteView bytes);

  [[nodiscard]] const Kind& kind() const { return kind_; }
  [[nodiscard]] const P2pkh* as_p2pkh() const { return std::get_if<P2pkh>(&kind_); }
  [[nodiscard]] const Htlc* as_htlc() const { return std::get_if<Htlc>(&kind_); }
  [[nodiscard]] const Bytes& bytes() const { return bytes_; }
  /// hash_UTXO of this script, cached.
  [[nodiscard]] const Digest256& hash() const { return hash_; }

  bool operator==(const Script& o) const { return bytes_ == o.bytes_; }

 private:
  Kind kind_;
  Bytes bytes_;
  Digest256 hash_;
};

// ---------------------------------------------------------------------------
// Transactions
// ---------------------------------------------------------------------------

enum class Branch : std::uint8_t { None = 0, Claim = 1, Refund = 2 };

struct Witness {
  Bytes signature;
  Bytes public_key;
  Bytes preimage;
  Branch branch = Branch::None;

  bool operator==(const Witness&) const = default;
};

struct TxIn {
  OutPoint prevout;
  Witness witness;
  std::uint32_t sequence = 0xffffffff;

  bool operator==(const TxIn&) const = default;
};

struct TxOut {
  Amount value = 0;
  Script script_pubkey;

  bool operator==(const TxOut&) const = default;
};

struct Transaction {
  std::vector<TxIn> inputs;
  std::vector<TxOut> outputs;
  Height locktime = 0;
  bool is_coinbase = false;

  bool operator==(const Transaction&) const = default;
};

void write_tx(ByteWriter& w, const Transaction& tx);
Transaction read_tx(ByteReader& r);
Bytes serialize_tx(const Transaction& tx);
Transaction deserialize_tx(ByteView bytes);

Digest256 txid(const Transaction& tx);
/// Digest every input signs: the transaction with all witnesses cleared.
Digest256 sighash(const Transaction& tx);

/// Coinbase transaction for sub-chain `subchain` at `height`. The single null
/// input encodes both, so coinbases of sibling sub-chains never share a txid.
Transaction make_coinbase(SubchainId subchain, Height height, const Script& payout, Amount value);

// ---------------------------------------------------------------------------
// Scripts evaluation
// ---------------------------------------------------------------------------

struct ScriptContext {
  Digest256 sighash;
  Height height = 0;  ///< height of the block that would include the spend
};

/// Malformed witnesses evaluate to false.
bool eval_script(const Script& script, const Witness& witness, const ScriptContext& ctx);

/// Signs input i with keys[i], keeping each witness's branch and preimage.
void sign_inputs(Transaction& tx, std::span<const crypto::KeyPair* const> keys);

// ---------------------------------------------------------------------------
// Chainstate
// ---------------------------------------------------------------------------

struct Coin {
  TxOut out;
  Height height = 0;
  bool coinbase = false;
  /// Placed here by an eigentransaction although its script hash routes
  /// elsewhere; exempt from the partition audit.
  bool pinned = false;

  bool operator==(const Coin&) const = default;
};

enum class PartitionMode : std::uint8_t { Logical, Economic };

std::string_view to_string(PartitionMode m);
std::optional<PartitionMode> parse_partition_mode(std::string_view s);

/// Maps a script hash to its sub-chain at the current split depth.
struct Partition {
  PartitionMode mode = PartitionMode::Logical;
  unsigned depth = 0;
  /// Economic mode only: 2^depth - 1 sorted cut points. Sub-chain i owns
  /// [boundaries[i-1], boundaries[i]).
  std::vector<Digest256> boundaries;

  [[nodiscard]] std::size_t subchain_count() const { return std::size_t{1} << depth; }
  [[nodiscard]] SubchainId route(const Digest256& script_hash) const;

  bool operator==(const Partition&) const = default;
};

/// UTXO store of one sub-chain, keyed by outpoint (per-output model).
class ChainState {
 public:
  explicit ChainState(SubchainId id = 0) : id_(id) {}

  [[nodiscard]] SubchainId subchain() const { return id_; }
  [[nodiscard]] const Coin* find(const OutPoint& op) const;
  [[nodiscard]] bool contains(const OutPoint& op) const { return entries_.contains(op); }
  void insert(const OutPoint& op, Coin coin);
  Coin erase(const OutPoint& op);

  [[nodiscard]] const std::map<OutPoint, Coin>& entries() const { return entries_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] Amount total_value() const;

  bool operator==(const ChainState&) const = default;

 private:
  SubchainId id_;
  std::map<OutPoint, Coin> entries_;
};

/// The chainstates a node tracks: all 2^depth for full nodes, one for half
/// nodes.
class ChainStateSet {
 public:
  ChainStateSet() = default;
  ChainStateSet(Partition partition, std::vector<ChainState> states);

  [[nodiscard]] const Partition& partition() const { return partition_; }
  [[nodiscard]] bool is_full() const { return states_.size() == partition_.subchain_count(); }

  [[nodiscard]] ChainState* find(SubchainId id);
  [[nodiscard]] const ChainState* find(SubchainId id) const;
  [[nodiscard]] std::span<ChainState> states() { return states_; }
  [[nodiscard]] std::span<const ChainState> states() const { return states_; }
  /// Sub-chain whose store holds `op`, if any tracked store does.
  [[nodiscard]] std::optional<SubchainId> locate(const OutPoint& op) const;
  [[nodiscard]] Amount total_value() const;

  /// Replaces partition and stores wholesale (split / unsplit).
  void reset(Partition partition, std::vector<ChainState> states);

  bool operator==(const ChainStateSet&) const = default;

 private:
  Partition partition_;
  std::vector<ChainState> states_;
};

/// Full-scan partition audit: every non-pinned entry routes to its store and
/// no outpoint is stored twice. Returns human-readable problems.
std::vector<std::string> audit_partition(const ChainStateSet& set);

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class TxError {
  Malformed,
  MissingUtxo,
  MixedSubchains,
  WrongSubchain,
  ScriptFailure,
  ValueOverspend,
  ImmatureLocktime,
  ImmatureCoinbase,
  DoubleSpendInBlock,
  ConflictingSpend,
};

std::string_view to_string(TxError e);

/// Txids whose scripts already verified. Entries for transactions with a
/// refund branch are never stored since their validity depends on height.
class SigCache {
 public:
  [[nodiscard]] bool contains(const Digest256& id) const { return verified_.contains(id); }
  void insert(const Digest256& id) { verified_.insert(id); }

 private:
  std::unordered_set<Digest256> verified_;
};

struct ValidationContext {
  const Partition* partition = nullptr;
  Height height = 0;  ///< height of the including block
  /// Other sub-chains' stores, probed only to classify a missing outpoint.
  std::span<const ChainState* const> siblings{};
  /// Outpoints already consumed earlier in the same block.
  const std::set<OutPoint>* spent_in_block = nullptr;
  SigCache* sig_cache = nullptr;
  /// Precomputed txid, if the caller has it.
  const Digest256* txid = nullptr;
};

/// Returns the fee on success.
Result<Amount, TxError> validate_transaction(const Transaction& tx, const ChainState& state,
                                             const ValidationContext& ctx);

struct TxUndo {
  std::vector<std::pair<OutPoint, Coin>> spent;
  std::vector<OutPoint> created;
};

/// An output created by a transaction on one sub-chain whose script hash
/// routes to another; the composite-block connect inserts it there.
struct RoutedOutput {
  SubchainId subchain = 0;
  OutPoint outpoint;
  Coin coin;
};

/// Spends inputs from `state` and inserts outputs that route to it; outputs
/// routing elsewhere are appended to `routed`. Throws ContractViolation if a
/// prevout is absent.
TxUndo apply_transaction(ChainState& state, const Partition& partition, const Transaction& tx,
                         Height height, std::vector<RoutedOutput>& routed);
TxUndo apply_transaction(ChainState& state, const Partition& partition, const Transaction& tx,
                         const Digest256& id, Height height, std::vector<RoutedOutput>& routed);

/// Restores the entry map exactly; throws ContractViolation on mismatch.
void revert_transaction(ChainState& state, const TxUndo& undo);

// ---------------------------------------------------------------------------
// Mempool
// ---------------------------------------------------------------------------

struct MempoolEntry {
  Transaction tx;
  Digest256 txid;
  Amount fee = 0;
  std::size_t size = 0;
};

class Mempool {
 public:
  explicit Mempool(SubchainId id = 0) : id_(id) {}

  [[nodiscard]] SubchainId subchain() const { return id_; }

  /// ctx.height must be the next block height.
  Status<TxError> accept(Transaction tx, const ChainState& state, const ValidationContext& ctx);
  /// Greedy by fee rate (fee/size, highest first), ties by ascending txid.
  [[nodiscard]] std::vector<const MempoolEntry*> select_for_block(std::size_t capacity) const;

  [[nodiscard]] bool contains(const Digest256& id) const { return entries_.contains(id); }
  [[nodiscard]] const MempoolEntry* find(const Digest256& id) const;
  [[nodiscard]] std::optional<Digest256> spender_of(const OutPoint& op) const;
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] const std::map<Digest256, MempoolEntry>& entries() const { return entries_; }

  bool remove(const Digest256& id);
  /// Drops every pending transaction spending one of `spent`; returns their
  /// txids.
  std::vector<Digest256> remove_spenders(std::span<const OutPoint> spent);
  void clear();

 private:
  struct ByFeeRate {
    bool operator()(const MempoolEntry* a, const MempoolEntry* b) const;
  };

  void insert_entry(MempoolEntry entry);

  SubchainId id_;
  std::map<Digest256, MempoolEntry> entries_;
  std::map<OutPoint, Digest256> spends_;
  std::set<const MempoolEntry*, ByFeeRate> by_fee_rate_;

 public:
  Mempool(const Mempool& o);
  Mempool& operator=(const Mempool& o);
  Mempool(Mempool&&) noexcept = default;
  Mempool& operator=(Mempool&&) noexcept = default;
};

// ---------------------------------------------------------------------------
// Subsidy
// ---------------------------------------------------------------------------

/// Issuance: `genesis_supply` at height 0, then `initial` halving every
/// `halving_interval` blocks.
struct SubsidySchedule {
  Amount genesis_supply = 0;
  Amount initial = 50ULL * 100'000'000ULL;
  Height halving_interval = 210'000;

  [[nodiscard]] Amount at(Height h) const;
  [[nodiscard]] Amount issued_through(Height h) const;
};

}  // namespace splitscale::ledger
