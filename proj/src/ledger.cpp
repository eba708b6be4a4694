#include "splitscale/ledger.hpp"

#include <algorithm>
#include <array>

namespace splitscale::ledger {

namespace {

// Opcodes used by the two script templates.
constexpr std::uint8_t OP_IF = 0x63;
constexpr std::uint8_t OP_ELSE = 0x67;
constexpr std::uint8_t OP_ENDIF = 0x68;
constexpr std::uint8_t OP_DROP = 0x75;
constexpr std::uint8_t OP_DUP = 0x76;
constexpr std::uint8_t OP_EQUALVERIFY = 0x88;
constexpr std::uint8_t OP_HASH160 = 0xa9;
constexpr std::uint8_t OP_HASH256 = 0xaa;
constexpr std::uint8_t OP_CHECKSIG = 0xac;
constexpr std::uint8_t OP_CHECKLOCKTIMEVERIFY = 0xb1;

constexpr std::size_t kP2pkhSize = 25;
constexpr std::size_t kHtlcSize = 93;

// Sizes bounding decoder allocations.
constexpr std::size_t kMaxScriptBytes = 10'000;
constexpr std::size_t kMaxWitnessField = 1'024;

Bytes encode_script(const Script::Kind& kind) {
  ByteWriter w;
  if (const auto* p = std::get_if<P2pkh>(&kind)) {
    w.u8(OP_DUP);
    w.u8(OP_HASH160);
    w.u8(20);
    w.raw(p->address);
    w.u8(OP_EQUALVERIFY);
    w.u8(OP_CHECKSIG);
  } else {
    const auto& h = std::get<Htlc>(kind);
    w.u8(OP_IF);
    w.u8(OP_HASH256);
    w.u8(32);
    w.raw(h.hashlock.bytes);
    w.u8(OP_EQUALVERIFY);
    w.u8(OP_DUP);
    w.u8(OP_HASH160);
    w.u8(20);
    w.raw(h.receiver);
    w.u8(OP_ELSE);
    w.u8(4);
    w.u32(h.timelock);
    w.u8(OP_CHECKLOCKTIMEVERIFY);
    w.u8(OP_DROP);
    w.u8(OP_DUP);
    w.u8(OP_HASH160);
    w.u8(20);
    w.raw(h.sender);
    w.u8(OP_ENDIF);
    w.u8(OP_EQUALVERIFY);
    w.u8(OP_CHECKSIG);
  }
  return std::move(w).take();
}

void expect_byte(ByteReader& r, std::uint8_t want) {
  if (r.u8() != want) throw DecodeError("script does not match a known template");
}

AddressHash read_address(ByteReader& r) {
  AddressHash a{};
  auto v = r.raw(a.size());
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

void write_outpoint(ByteWriter& w, const OutPoint& op) {
  w.raw(op.txid.bytes);
  w.u32(op.index);
}

OutPoint read_outpoint(ByteReader& r) {
  OutPoint op;
  op.txid = Digest256::from_view(r.raw(32));
  op.index = r.u32();
  return op;
}

void write_tx_impl(ByteWriter& w, const Transaction& tx, bool with_witness) {
  w.u8(tx.is_coinbase ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(tx.inputs.size()));
  for (const auto& in : tx.inputs) {
    write_outpoint(w, in.prevout);
    w.u32(in.sequence);
    if (with_witness) {
      w.u8(static_cast<std::uint8_t>(in.witness.branch));
      w.var_bytes(in.witness.signature);
      w.var_bytes(in.witness.public_key);
      w.var_bytes(in.witness.preimage);
    }
  }
  w.u32(static_cast<std::uint32_t>(tx.outputs.size()));
  for (const auto& out : tx.outputs) {
    w.u64(out.value);
    w.var_bytes(out.script_pubkey.bytes());
  }
  w.u32(tx.locktime);
}

bool key_matches(const Witness& witness, const AddressHash& address) {
  return witness.public_key.size() == 32 && crypto::address_of(witness.public_key) == address;
}

}  // namespace

// ---------------------------------------------------------------------------

Script::Script(Kind kind) : kind_(std::move(kind)), bytes_(encode_script(kind_)) {
  hash_ = crypto::hash_utxo(bytes_);
}

Script Script::parse(ByteView bytes) {
  ByteReader r(bytes);
  if (bytes.size() == kP2pkhSize) {
    expect_byte(r, OP_DUP);
    expect_byte(r, OP_HASH160);
    expect_byte(r, 20);
    auto addr = read_address(r);
    expect_byte(r, OP_EQUALVERIFY);
    expect_byte(r, OP_CHECKSIG);
    return p2pkh(addr);
  }
  if (bytes.size() == kHtlcSize) {
    Htlc h;
    expect_byte(r, OP_IF);
    expect_byte(r, OP_HASH256);
    expect_byte(r, 32);
    h.hashlock = Digest256::from_view(r.raw(32));
    expect_byte(r, OP_EQUALVERIFY);
    expect_byte(r, OP_DUP);
    expect_byte(r, OP_HASH160);
    expect_byte(r, 20);
    h.receiver = read_address(r);
    expect_byte(r, OP_ELSE);
    expect_byte(r, 4);
    h.timelock = r.u32();
    expect_byte(r, OP_CHECKLOCKTIMEVERIFY);
    expect_byte(r, OP_DROP);
    expect_byte(r, OP_DUP);
    expect_byte(r, OP_HASH160);
    expect_byte(r, 20);
    h.sender = read_address(r);
    expect_byte(r, OP_ENDIF);
    expect_byte(r, OP_EQUALVERIFY);
    expect_byte(r, OP_CHECKSIG);
    return Script(h);
  }
  throw DecodeError("script does not match a known template");
}

// ---------------------------------------------------------------------------

void write_tx(ByteWriter& w, const Transaction& tx) { write_tx_impl(w, tx, true); }

Transaction read_tx(ByteReader& r) {
  Transaction tx;
  tx.is_coinbase = r.boolean();
  auto n_in = r.count(44);
  tx.inputs.reserve(n_in);
  for (std::uint32_t i = 0; i < n_in; ++i) {
    TxIn in;
    in.prevout = read_outpoint(r);
    in.sequence = r.u32();
    auto branch = r.u8();
    if (branch > static_cast<std::uint8_t>(Branch::Refund)) throw DecodeError("unknown witness branch");
    in.witness.branch = static_cast<Branch>(branch);
    in.witness.signature = r.var_bytes(kMaxWitnessField);
    in.witness.public_key = r.var_bytes(kMaxWitnessField);
    in.witness.preimage = r.var_bytes(kMaxWitnessField);
    tx.inputs.push_back(std::move(in));
  }
  auto n_out = r.count(12);
  tx.outputs.reserve(n_out);
  for (std::uint32_t i = 0; i < n_out; ++i) {
    TxOut out;
    out.value = r.u64();
    auto script = r.var_bytes(kMaxScriptBytes);
    out.script_pubkey = Script::parse(script);
    tx.outputs.push_back(std::move(out));
  }
  tx.locktime = r.u32();
  return tx;
}

Bytes serialize_tx(const Transaction& tx) {
  ByteWriter w;
  write_tx(w, tx);
  return std::move(w).take();
}

Transaction deserialize_tx(ByteView bytes) {
  ByteReader r(bytes);
  auto tx = read_tx(r);
  r.expect_end();
  return tx;
}

Digest256 txid(const Transaction& tx) { return crypto::double_sha256(serialize_tx(tx)); }

Digest256 sighash(const Transaction& tx) {
  ByteWriter w;
  write_tx_impl(w, tx, false);
  return crypto::double_sha256(w.data());
}

Transaction make_coinbase(SubchainId subchain, Height height, const Script& payout, Amount value) {
  Transaction tx;
  tx.is_coinbase = true;
  TxIn in;
  in.prevout.index = subchain;
  in.sequence = height;
  tx.inputs.push_back(std::move(in));
  if (value > 0) tx.outputs.push_back(TxOut{value, payout});
  tx.locktime = height;
  return tx;
}

void sign_inputs(Transaction& tx, std::span<const crypto::KeyPair* const> keys) {
  if (keys.size() != tx.inputs.size()) throw ContractViolation("one key per input required");
  for (auto& in : tx.inputs) in.witness.signature.clear();
  auto digest = sighash(tx);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto& w = tx.inputs[i].witness;
    auto pub = keys[i]->public_key();
    w.public_key.assign(pub.begin(), pub.end());
    w.signature = keys[i]->sign(digest);
  }
}

// ---------------------------------------------------------------------------

bool eval_script(const Script& script, const Witness& witness, const ScriptContext& ctx) {
  if (const auto* p = script.as_p2pkh()) {
    if (witness.branch != Branch::None || !witness.preimage.empty()) return false;
    return key_matches(witness, p->address) && crypto::verify(witness.public_key, ctx.sighash, witness.signature);
  }
  const auto& h = *script.as_htlc();
  switch (witness.branch) {
    case Branch::Claim:
      return crypto::double_sha256(witness.preimage) == h.hashlock && key_matches(witness, h.receiver) &&
             crypto::verify(witness.public_key, ctx.sighash, witness.signature);
    case Branch::Refund:
      return ctx.height >= h.timelock && key_matches(witness, h.sender) &&
             crypto::verify(witness.public_key, ctx.sighash, witness.signature);
    case Branch::None:
      return false;
  }
  return false;
}

// ---------------------------------------------------------------------------

std::string_view to_string(PartitionMode m) { return m == PartitionMode::Logical ? "logical" : "economic"; }

std::optional<PartitionMode> parse_partition_mode(std::string_view s) {
  if (s == "logical") return PartitionMode::Logical;
  if (s == "economic") return PartitionMode::Economic;
  return std::nullopt;
}

SubchainId Partition::route(const Digest256& script_hash) const {
  if (mode == PartitionMode::Logical) return crypto::assign_subchain(script_hash, depth);
  auto it = std::upper_bound(boundaries.begin(), boundaries.end(), script_hash);
  return static_cast<SubchainId>(it - boundaries.begin());
}

const Coin* ChainState::find(const OutPoint& op) const {
  auto it = entries_.find(op);
  return it == entries_.end() ? nullptr : &it->second;
}

void ChainState::insert(const OutPoint& op, Coin coin) {
  if (!entries_.emplace(op, std::move(coin)).second) {
    throw ContractViolation("outpoint already present in chainstate " + std::to_string(id_));
  }
}

Coin ChainState::erase(const OutPoint& op) {
  auto it = entries_.find(op);
  if (it == entries_.end()) throw ContractViolation("outpoint missing from chainstate " + std::to_string(id_));
  Coin c = std::move(it->second);
  entries_.erase(it);
  return c;
}

Amount ChainState::total_value() const {
  Amount total = 0;
  for (const auto& [op, coin] : entries_) total += coin.out.value;
  return total;
}

ChainStateSet::ChainStateSet(Partition partition, std::vector<ChainState> states) {
  reset(std::move(partition), std::move(states));
}

void ChainStateSet::reset(Partition partition, std::vector<ChainState> states) {
  std::sort(states.begin(), states.end(),
            [](const ChainState& a, const ChainState& b) { return a.subchain() < b.subchain(); });
  partition_ = std::move(partition);
  states_ = std::move(states);
}

ChainState* ChainStateSet::find(SubchainId id) {
  return const_cast<ChainState*>(std::as_const(*this).find(id));
}

const ChainState* ChainStateSet::find(SubchainId id) const {
  if (is_full()) return id < states_.size() ? &states_[id] : nullptr;
  for (const auto& s : states_) {
    if (s.subchain() == id) return &s;
  }
  return nullptr;
}

std::optional<SubchainId> ChainStateSet::locate(const OutPoint& op) const {
  for (const auto& s : states_) {
    if (s.contains(op)) return s.subchain();
  }
  return std::nullopt;
}

Amount ChainStateSet::total_value() const {
  Amount total = 0;
  for (const auto& s : states_) total += s.total_value();
  return total;
}

std::vector<std::string> audit_partition(const ChainStateSet& set) {
  std::vector<std::string> problems;
  std::set<OutPoint> seen;
  for (const auto& state : set.states()) {
    if (state.subchain() >= set.partition().subchain_count()) {
      problems.push_back("chainstate id " + std::to_string(state.subchain()) + " out of range");
    }
    for (const auto& [op, coin] : state.entries()) {
      if (!seen.insert(op).second) {
        problems.push_back("outpoint " + op.txid.hex() + ":" + std::to_string(op.index) +
                           " stored in more than one chainstate");
      }
      if (!coin.pinned && set.partition().route(coin.out.script_pubkey.hash()) != state.subchain()) {
        problems.push_back("outpoint " + op.txid.hex() + ":" + std::to_string(op.index) +
                           " does not route to chainstate " + std::to_string(state.subchain()));
      }
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------

std::string_view to_string(TxError e) {
  switch (e) {
    case TxError::Malformed: return "Malformed";
    case TxError::MissingUtxo: return "MissingUtxo";
    case TxError::MixedSubchains: return "MixedSubchains";
    case TxError::WrongSubchain: return "WrongSubchain";
    case TxError::ScriptFailure: return "ScriptFailure";
    case TxError::ValueOverspend: return "ValueOverspend";
    case TxError::ImmatureLocktime: return "ImmatureLocktime";
    case TxError::ImmatureCoinbase: return "ImmatureCoinbase";
    case TxError::DoubleSpendInBlock: return "DoubleSpendInBlock";
    case TxError::ConflictingSpend: return "ConflictingSpend";
  }
  return "?";
}

Result<Amount, TxError> validate_transaction(const Transaction& tx, const ChainState& state,
                                             const ValidationContext& ctx) {
  if (ctx.partition == nullptr) throw ContractViolation("validation requires a partition");
  if (tx.is_coinbase || tx.inputs.empty() || tx.outputs.empty()) return fail(TxError::Malformed);

  Amount out_total = 0;
  for (const auto& out : tx.outputs) {
    if (out.value > kMaxMoney || out_total + out.value > kMaxMoney) return fail(TxError::Malformed);
    out_total += out.value;
  }

  std::set<OutPoint> own_inputs;
  for (const auto& in : tx.inputs) {
    if (!own_inputs.insert(in.prevout).second) return fail(TxError::DoubleSpendInBlock);
    if (ctx.spent_in_block != nullptr && ctx.spent_in_block->contains(in.prevout)) {
      return fail(TxError::DoubleSpendInBlock);
    }
  }

  // Resolve every input, noting which sub-chains they live on.
  std::vector<const Coin*> coins;
  coins.reserve(tx.inputs.size());
  std::set<SubchainId> homes;
  bool missing = false;
  for (const auto& in : tx.inputs) {
    const Coin* coin = state.find(in.prevout);
    if (coin != nullptr) {
      homes.insert(state.subchain());
    } else {
      bool found = false;
      for (const ChainState* sibling : ctx.siblings) {
        if (sibling != nullptr && sibling != &state && sibling->contains(in.prevout)) {
          homes.insert(sibling->subchain());
          found = true;
          break;
        }
      }
      missing = missing || !found;
    }
    coins.push_back(coin);
  }
  if (homes.size() > 1) return fail(TxError::MixedSubchains);
  if (homes.size() == 1 && *homes.begin() != state.subchain()) return fail(TxError::WrongSubchain);
  if (missing) return fail(TxError::MissingUtxo);

  Amount in_total = 0;
  bool has_refund = false;
  for (std::size_t i = 0; i < tx.inputs.size(); ++i) {
    const Coin& coin = *coins[i];
    if (!coin.pinned && ctx.partition->route(coin.out.script_pubkey.hash()) != state.subchain()) {
      return fail(TxError::WrongSubchain);
    }
    if (coin.coinbase && ctx.height < coin.height + kCoinbaseMaturity) return fail(TxError::ImmatureCoinbase);
    in_total += coin.out.value;
    has_refund = has_refund || tx.inputs[i].witness.branch == Branch::Refund;
  }
  if (tx.locktime > ctx.height) return fail(TxError::ImmatureLocktime);
  if (out_total > in_total) return fail(TxError::ValueOverspend);

  Digest256 id = ctx.txid != nullptr ? *ctx.txid : txid(tx);
  if (ctx.sig_cache == nullptr || !ctx.sig_cache->contains(id)) {
    ScriptContext sctx{sighash(tx), ctx.height};
    for (std::size_t i = 0; i < tx.inputs.size(); ++i) {
      if (!eval_script(coins[i]->out.script_pubkey, tx.inputs[i].witness, sctx)) {
        return fail(TxError::ScriptFailure);
      }
    }
    if (ctx.sig_cache != nullptr && !has_refund) ctx.sig_cache->insert(id);
  }
  return in_total - out_total;
}

TxUndo apply_transaction(ChainState& state, const Partition& partition, const Transaction& tx, Height height,
                         std::vector<RoutedOutput>& routed) {
  return apply_transaction(state, partition, tx, txid(tx), height, routed);
}

TxUndo apply_transaction(ChainState& state, const Partition& partition, const Transaction& tx,
                         const Digest256& id, Height height, std::vector<RoutedOutput>& routed) {
  if (!tx.is_coinbase) {
    for (const auto& in : tx.inputs) {
      if (!state.contains(in.prevout)) throw ContractViolation("apply_transaction on unvalidated transaction");
    }
  }
  TxUndo undo;
  if (!tx.is_coinbase) {
    undo.spent.reserve(tx.inputs.size());
    for (const auto& in : tx.inputs) undo.spent.emplace_back(in.prevout, state.erase(in.prevout));
  }
  for (std::uint32_t i = 0; i < tx.outputs.size(); ++i) {
    OutPoint op{id, i};
    Coin coin{tx.outputs[i], height, tx.is_coinbase, false};
    auto dest = partition.route(coin.out.script_pubkey.hash());
    if (dest == state.subchain()) {
      state.insert(op, std::move(coin));
      undo.created.push_back(op);
    } else {
      routed.push_back(RoutedOutput{dest, op, std::move(coin)});
    }
  }
  return undo;
}

void revert_transaction(ChainState& state, const TxUndo& undo) {
  for (const auto& op : undo.created) {
    if (!state.contains(op)) throw ContractViolation("undo record does not match chainstate");
  }
  for (const auto& [op, coin] : undo.spent) {
    if (state.contains(op)) throw ContractViolation("undo record restores a present outpoint");
  }
  for (const auto& op : undo.created) state.erase(op);
  for (const auto& [op, coin] : undo.spent) state.insert(op, coin);
}

// ---------------------------------------------------------------------------

bool Mempool::ByFeeRate::operator()(const MempoolEntry* a, const MempoolEntry* b) const {
  using u128 = unsigned __int128;
  u128 lhs = static_cast<u128>(a->fee) * b->size;
  u128 rhs = static_cast<u128>(b->fee) * a->size;
  if (lhs != rhs) return lhs > rhs;
  return a->txid < b->txid;
}

Mempool::Mempool(const Mempool& o) : id_(o.id_) {
  for (const auto& [id, e] : o.entries_) insert_entry(e);
}

Mempool& Mempool::operator=(const Mempool& o) {
  if (this != &o) {
    Mempool tmp(o);
    *this = std::move(tmp);
  }
  return *this;
}

void Mempool::insert_entry(MempoolEntry entry) {
  auto id = entry.txid;
  auto [it, inserted] = entries_.emplace(id, std::move(entry));
  if (!inserted) return;
  for (const auto& in : it->second.tx.inputs) spends_.emplace(in.prevout, id);
  by_fee_rate_.insert(&it->second);
}

Status<TxError> Mempool::accept(Transaction tx, const ChainState& state, const ValidationContext& ctx) {
  Digest256 id = ctx.txid != nullptr ? *ctx.txid : txid(tx);
  if (entries_.contains(id)) return fail(TxError::ConflictingSpend);
  for (const auto& in : tx.inputs) {
    if (spends_.contains(in.prevout)) return fail(TxError::ConflictingSpend);
  }
  ValidationContext local = ctx;
  local.txid = &id;
  auto fee = validate_transaction(tx, state, local);
  if (!fee) return fail(fee.error());
  auto size = serialize_tx(tx).size();
  insert_entry(MempoolEntry{std::move(tx), id, fee.value(), size});
  return Unit{};
}

std::vector<const MempoolEntry*> Mempool::select_for_block(std::size_t capacity) const {
  std::vector<const MempoolEntry*> out;
  out.reserve(std::min(capacity, by_fee_rate_.size()));
  for (const auto* e : by_fee_rate_) {
    if (out.size() >= capacity) break;
    out.push_back(e);
  }
  return out;
}

const MempoolEntry* Mempool::find(const Digest256& id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<Digest256> Mempool::spender_of(const OutPoint& op) const {
  auto it = spends_.find(op);
  if (it == spends_.end()) return std::nullopt;
  return it->second;
}

bool Mempool::remove(const Digest256& id) {
  auto it = entries_.find(id);
  if (it == entries_.end()) return false;
  by_fee_rate_.erase(&it->second);
  for (const auto& in : it->second.tx.inputs) spends_.erase(in.prevout);
  entries_.erase(it);
  return true;
}

std::vector<Digest256> Mempool::remove_spenders(std::span<const OutPoint> spent) {
  std::vector<Digest256> removed;
  for (const auto& op : spent) {
    auto it = spends_.find(op);
    if (it == spends_.end()) continue;
    auto id = it->second;
    remove(id);
    removed.push_back(id);
  }
  return removed;
}

void Mempool::clear() {
  by_fee_rate_.clear();
  spends_.clear();
  entries_.clear();
}

// ---------------------------------------------------------------------------

Amount SubsidySchedule::at(Height h) const {
  if (h == 0) return genesis_supply;
  if (halving_interval == 0) return initial;
  auto halvings = h / halving_interval;
  return halvings >= 64 ? 0 : initial >> halvings;
}

Amount SubsidySchedule::issued_through(Height h) const {
  Amount total = genesis_supply;
  for (Height i = 1; i <= h; ++i) total += at(i);
  return total;
}

}  // namespace splitscale::ledger
