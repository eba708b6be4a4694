#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "splitscale/ledger.hpp"

namespace splitscale::xfer {

using crypto::Digest256;
using crypto::SubchainId;
using ledger::Amount;
using ledger::Coin;
using ledger::Height;
using ledger::OutPoint;
using ledger::Script;
using ledger::Transaction;

/// Flat eigentransaction fee, paid into the eigen block's reward record.
inline constexpr Amount kEigenFee = 100;
/// Maximum eigentransactions per eigen block.
inline constexpr std::size_t kEigenCapacity = 50;
/// Timelock stagger between consecutive HTLC legs, in blocks.
inline constexpr Height kHtlcStagger = 10;

// ---------------------------------------------------------------------------
// Eigentransactions
// ---------------------------------------------------------------------------

/// Moves value of one P2PKH address from sub-chain `source` to the same
/// address on sub-chain `dest`.
struct Eigentransaction {
  Script owner_script;
  Script dest_script;
  Amount amount = 0;
  SubchainId source = 0;
  SubchainId dest = 0;
  std::vector<OutPoint> source_outpoints;
  Bytes public_key;
  Bytes signature;

  bool operator==(const Eigentransaction&) const = default;
};

void write_eigentx(ByteWriter& w, const Eigentransaction& etx);
Eigentransaction read_eigentx(ByteReader& r);
Bytes serialize_eigentx(const Eigentransaction& etx);
Digest256 eigentx_id(const Eigentransaction& etx);
/// Digest the owner signs: the serialization with an empty signature.
Digest256 eigentx_sighash(const Eigentransaction& etx);

Eigentransaction make_eigentx(const crypto::KeyPair& owner, SubchainId source, SubchainId dest, Amount amount,
                              std::vector<OutPoint> source_outpoints);

/// Inclusive activation window [start, end] in block heights.
struct EigenWindow {
  Height start = 0;
  Height end = 0;

  bool operator==(const EigenWindow&) const = default;
};

enum class EigenError {
  WindowClosed,
  AddressMismatch,
  MissingUtxo,
  BadSignature,
  SameSubchain,
  InsufficientValue,
  ConflictingSpend,
  Malformed,
};

std::string_view to_string(EigenError e);

struct EigenCheckContext {
  Height height = 0;  ///< height of the including eigen block
  std::optional<EigenWindow> window;
  /// Outpoints consumed earlier in the same composite block.
  const std::set<OutPoint>* spent_in_block = nullptr;
};

/// Consensus checks. Source-outpoint checks run only when `states` tracks the
/// source sub-chain (half nodes tracking another sub-chain skip them).
Status<EigenError> check_eigentx(const Eigentransaction& etx, const ledger::ChainStateSet& states,
                                 const EigenCheckContext& ctx);

struct EigenUndo {
  SubchainId source = 0;
  std::vector<std::pair<OutPoint, Coin>> spent;
  std::vector<std::pair<SubchainId, OutPoint>> created;
};

/// Removes source outpoints, creates (id, 0) on dest and change (id, 1) on
/// source. Outputs whose owner script does not route to their sub-chain are
/// pinned. Only tracked sub-chains are touched.
EigenUndo apply_eigentx(ledger::ChainStateSet& states, const Eigentransaction& etx, const Digest256& id,
                        Height height);
void revert_eigentx(ledger::ChainStateSet& states, const EigenUndo& undo);

class Eigenpool {
 public:
  struct Entry {
    Eigentransaction etx;
    Digest256 id;
    std::size_t size = 0;
  };

  Status<EigenError> accept(Eigentransaction etx, const ledger::ChainStateSet& states, const EigenCheckContext& ctx);
  /// By fee rate (flat fee over size, so smallest first), ties by id.
  [[nodiscard]] std::vector<const Entry*> select(std::size_t capacity) const;

  [[nodiscard]] bool contains(const Digest256& id) const { return entries_.contains(id); }
  [[nodiscard]] bool spends(const OutPoint& op) const { return spends_.contains(op); }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] const std::map<Digest256, Entry>& entries() const { return entries_; }

  bool remove(const Digest256& id);
  std::vector<Digest256> remove_spenders(std::span<const OutPoint> spent);
  void clear();

 private:
  std::map<Digest256, Entry> entries_;
  std::map<OutPoint, Digest256> spends_;
};

// ---------------------------------------------------------------------------
// Multi-leg HTLC payments
// ---------------------------------------------------------------------------

enum class XferError {
  InsufficientTotalBalance,
  WrongPreimage,
  TimelockNotExpired,
  NotHtlc,
  WrongKey,
};

std::string_view to_string(XferError e);

/// A spendable wallet output together with the key that unlocks it.
struct WalletCoin {
  OutPoint outpoint;
  Coin coin;
  SubchainId subchain = 0;
  const crypto::KeyPair* key = nullptr;
};

struct LegAllocation {
  SubchainId subchain = 0;
  Amount amount = 0;

  bool operator==(const LegAllocation&) const = default;
};

/// Greedy split of `total` across sub-chains, largest balance first (ties by
/// id). Each used sub-chain also pays `fee_per_leg` from its balance.
Result<std::vector<LegAllocation>, XferError> allocate_legs(const std::map<SubchainId, Amount>& balances,
                                                            Amount total, Amount fee_per_leg);

struct HtlcLeg {
  SubchainId subchain = 0;  ///< sub-chain the funding inputs come from
  Transaction tx;
  Digest256 txid;
  Amount amount = 0;
  Height timelock = 0;
  Script script;
  OutPoint htlc_outpoint;  ///< (txid, 0)
};

struct HtlcPayment {
  Bytes preimage;
  Digest256 hashlock;
  std::vector<HtlcLeg> legs;
  Height timelock_base = 0;
  Height stagger = kHtlcStagger;
  crypto::AddressHash receiver{};
};

struct HtlcRequest {
  Amount amount = 0;
  crypto::AddressHash receiver{};
  Height timelock_base = 0;
  Bytes preimage;  ///< 32 random bytes chosen by the sender
  Amount fee_per_leg = 0;
  Height stagger = kHtlcStagger;
};

/// One HTLC-output transaction per used sub-chain, all sharing
/// hashlock = double_sha256(preimage); leg i expires at base + i * stagger.
Result<HtlcPayment, XferError> plan_htlc_payment(std::span<const WalletCoin> coins, const HtlcRequest& request);

Result<Transaction, XferError> claim_htlc_leg(const OutPoint& leg, const ledger::TxOut& leg_out, ByteView preimage,
                                              const crypto::KeyPair& receiver, const Script& payout, Amount fee);

/// `height` is the height of the block expected to include the refund.
Result<Transaction, XferError> refund_htlc_leg(const OutPoint& leg, const ledger::TxOut& leg_out,
                                               const crypto::KeyPair& sender, Height height, const Script& payout,
                                               Amount fee);

}  // namespace splitscale::xfer
