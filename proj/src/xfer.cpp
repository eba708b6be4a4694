#include "splitscale/xfer.hpp"

#include <algorithm>

namespace splitscale::xfer {

namespace {

constexpr std::size_t kMaxEigenField = 1'024;

void write_etx_impl(ByteWriter& w, const Eigentransaction& etx, bool with_signature) {
  w.var_bytes(etx.owner_script.bytes());
  w.var_bytes(etx.dest_script.bytes());
  w.u64(etx.amount);
  w.u32(etx.source);
  w.u32(etx.dest);
  w.u32(static_cast<std::uint32_t>(etx.source_outpoints.size()));
  for (const auto& op : etx.source_outpoints) {
    w.raw(op.txid.bytes);
    w.u32(op.index);
  }
  w.var_bytes(etx.public_key);
  if (with_signature) {
    w.var_bytes(etx.signature);
  } else {
    w.var_bytes({});
  }
}

}  // namespace

void write_eigentx(ByteWriter& w, const Eigentransaction& etx) { write_etx_impl(w, etx, true); }

Eigentransaction read_eigentx(ByteReader& r) {
  Eigentransaction etx;
  etx.owner_script = Script::parse(r.var_bytes(kMaxEigenField));
  etx.dest_script = Script::parse(r.var_bytes(kMaxEigenField));
  etx.amount = r.u64();
  etx.source = r.u32();
  etx.dest = r.u32();
  auto n = r.count(36);
  etx.source_outpoints.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    OutPoint op;
    op.txid = Digest256::from_view(r.raw(32));
    op.index = r.u32();
    etx.source_outpoints.push_back(op);
  }
  etx.public_key = r.var_bytes(kMaxEigenField);
  etx.signature = r.var_bytes(kMaxEigenField);
  return etx;
}

Bytes serialize_eigentx(const Eigentransaction& etx) {
  ByteWriter w;
  write_eigentx(w, etx);
  return std::move(w).take();
}

Digest256 eigentx_id(const Eigentransaction& etx) { return crypto::double_sha256(serialize_eigentx(etx)); }

Digest256 eigentx_sighash(const Eigentransaction& etx) {
  ByteWriter w;
  write_etx_impl(w, etx, false);
  return crypto::double_sha256(w.data());
}

Eigentransaction make_eigentx(const crypto::KeyPair& owner, SubchainId source, SubchainId dest, Amount amount,
                              std::vector<OutPoint> source_outpoints) {
  Eigentransaction etx;
  etx.owner_script = Script::p2pkh(owner.address_hash());
  etx.dest_script = etx.owner_script;
  etx.amount = amount;
  etx.source = source;
  etx.dest = dest;
  etx.source_outpoints = std::move(source_outpoints);
  auto pub = owner.public_key();
  etx.public_key.assign(pub.begin(), pub.end());
  etx.signature = owner.sign(eigentx_sighash(etx));
  return etx;
}

std::string_view to_string(EigenError e) {
  switch (e) {
    case EigenError::WindowClosed: return "WindowClosed";
    case EigenError::AddressMismatch: return "AddressMismatch";
    case EigenError::MissingUtxo: return "MissingUtxo";
    case EigenError::BadSignature: return "BadSignature";
    case EigenError::SameSubchain: return "SameSubchain";
    case EigenError::InsufficientValue: return "InsufficientValue";
    case EigenError::ConflictingSpend: return "ConflictingSpend";
    case EigenError::Malformed: return "Malformed";
  }
  return "?";
}

Status<EigenError> check_eigentx(const Eigentransaction& etx, const ledger::ChainStateSet& states,
                                 const EigenCheckContext& ctx) {
  if (ctx.window && (ctx.height < ctx.window->start || ctx.height > ctx.window->end)) {
    return fail(EigenError::WindowClosed);
  }
  const auto* owner = etx.owner_script.as_p2pkh();
  if (owner == nullptr) return fail(EigenError::AddressMismatch);
  if (!(etx.dest_script == etx.owner_script)) return fail(EigenError::AddressMismatch);
  if (etx.source == etx.dest) return fail(EigenError::SameSubchain);
  auto count = states.partition().subchain_count();
  if (etx.source >= count || etx.dest >= count || etx.source_outpoints.empty() || etx.amount == 0 ||
      etx.amount > ledger::kMaxMoney) {
    return fail(EigenError::Malformed);
  }
  std::set<OutPoint> unique(etx.source_outpoints.begin(), etx.source_outpoints.end());
  if (unique.size() != etx.source_outpoints.size()) return fail(EigenError::Malformed);

  if (etx.public_key.size() != 32 || crypto::address_of(etx.public_key) != owner->address ||
      !crypto::verify(etx.public_key, eigentx_sighash(etx), etx.signature)) {
    return fail(EigenError::BadSignature);
  }

  const auto* source = states.find(etx.source);
  if (source == nullptr) return Unit{};

  Amount total = 0;
  for (const auto& op : etx.source_outpoints) {
    if (ctx.spent_in_block != nullptr && ctx.spent_in_block->contains(op)) return fail(EigenError::ConflictingSpend);
    const auto* coin = source->find(op);
    if (coin == nullptr) return fail(EigenError::MissingUtxo);
    if (!(coin->out.script_pubkey == etx.owner_script)) return fail(EigenError::AddressMismatch);
    if (coin->coinbase && ctx.height < coin->height + ledger::kCoinbaseMaturity) {
      return fail(EigenError::MissingUtxo);
    }
    total += coin->out.value;
  }
  if (total < etx.amount + kEigenFee) return fail(EigenError::InsufficientValue);
  return Unit{};
}

EigenUndo apply_eigentx(ledger::ChainStateSet& states, const Eigentransaction& etx, const Digest256& id,
                        Height height) {
  EigenUndo undo;
  undo.source = etx.source;
  const auto& partition = states.partition();
  auto owner_home = partition.route(etx.owner_script.hash());

  if (auto* source = states.find(etx.source)) {
    Amount total = 0;
    for (const auto& op : etx.source_outpoints) {
      if (!source->contains(op)) throw ContractViolation("apply_eigentx on unvalidated eigentransaction");
    }
    for (const auto& op : etx.source_outpoints) {
      auto coin = source->erase(op);
      total += coin.out.value;
      undo.spent.emplace_back(op, std::move(coin));
    }
    if (total < etx.amount + kEigenFee) throw ContractViolation("eigentransaction overspends its sources");
    Amount change = total - etx.amount - kEigenFee;
    if (change > 0) {
      OutPoint op{id, 1};
      source->insert(op, Coin{{change, etx.owner_script}, height, false, owner_home != etx.source});
      undo.created.emplace_back(etx.source, op);
    }
  }
  if (auto* dest = states.find(etx.dest)) {
    OutPoint op{id, 0};
    dest->insert(op, Coin{{etx.amount, etx.owner_script}, height, false, owner_home != etx.dest});
    undo.created.emplace_back(etx.dest, op);
  }
  return undo;
}

void revert_eigentx(ledger::ChainStateSet& states, const EigenUndo& undo) {
  for (auto it = undo.created.rbegin(); it != undo.created.rend(); ++it) {
    auto* state = states.find(it->first);
    if (state == nullptr) throw ContractViolation("eigen undo names an untracked sub-chain");
    state->erase(it->second);
  }
  if (undo.spent.empty()) return;
  auto* source = states.find(undo.source);
  if (source == nullptr) throw ContractViolation("eigen undo names an untracked sub-chain");
  for (const auto& [op, coin] : undo.spent) source->insert(op, coin);
}

// ---------------------------------------------------------------------------

Status<EigenError> Eigenpool::accept(Eigentransaction etx, const ledger::ChainStateSet& states,
                                     const EigenCheckContext& ctx) {
  auto id = eigentx_id(etx);
  if (entries_.contains(id)) return fail(EigenError::ConflictingSpend);
  for (const auto& op : etx.source_outpoints) {
    if (spends_.contains(op)) return fail(EigenError::ConflictingSpend);
  }
  if (states.find(etx.source) == nullptr) return fail(EigenError::MissingUtxo);
  auto status = check_eigentx(etx, states, ctx);
  if (!status) return status;
  auto size = serialize_eigentx(etx).size();
  for (const auto& op : etx.source_outpoints) spends_.emplace(op, id);
  entries_.emplace(id, Entry{std::move(etx), id, size});
  return Unit{};
}

std::vector<const Eigenpool::Entry*> Eigenpool::select(std::size_t capacity) const {
  std::vector<const Entry*> all;
  all.reserve(entries_.size());
  for (const auto& [id, e] : entries_) all.push_back(&e);
  std::sort(all.begin(), all.end(), [](const Entry* a, const Entry* b) {
    if (a->size != b->size) return a->size < b->size;
    return a->id < b->id;
  });
  if (all.size() > capacity) all.resize(capacity);
  return all;
}

bool Eigenpool::remove(const Digest256& id) {
  auto it = entries_.find(id);
  if (it == entries_.end()) return false;
  for (const auto& op : it->second.etx.source_outpoints) spends_.erase(op);
  entries_.erase(it);
  return true;
}

std::vector<Digest256> Eigenpool::remove_spenders(std::span<const OutPoint> spent) {
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

void Eigenpool::clear() {
  entries_.clear();
  spends_.clear();
}

// ---------------------------------------------------------------------------

std::string_view to_string(XferError e) {
  switch (e) {
    case XferError::InsufficientTotalBalance: return "InsufficientTotalBalance";
    case XferError::WrongPreimage: return "WrongPreimage";
    case XferError::TimelockNotExpired: return "TimelockNotExpired";
    case XferError::NotHtlc: return "NotHtlc";
    case XferError::WrongKey: return "WrongKey";
  }
  return "?";
}

Result<std::vector<LegAllocation>, XferError> allocate_legs(const std::map<SubchainId, Amount>& balances,
                                                            Amount total, Amount fee_per_leg) {
  std::vector<std::pair<SubchainId, Amount>> order(balances.begin(), balances.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<LegAllocation> legs;
  Amount remaining = total;
  for (const auto& [subchain, balance] : order) {
    if (remaining == 0) break;
    if (balance <= fee_per_leg) continue;
    Amount take = std::min(balance - fee_per_leg, remaining);
    legs.push_back({subchain, take});
    remaining -= take;
  }
  if (remaining > 0 || total == 0) return fail(XferError::InsufficientTotalBalance);
  return legs;
}

Result<HtlcPayment, XferError> plan_htlc_payment(std::span<const WalletCoin> coins, const HtlcRequest& request) {
  std::map<SubchainId, std::vector<const WalletCoin*>> by_subchain;
  std::map<SubchainId, Amount> balances;
  for (const auto& c : coins) {
    if (c.key == nullptr || c.coin.out.script_pubkey.as_p2pkh() == nullptr) continue;
    by_subchain[c.subchain].push_back(&c);
    balances[c.subchain] += c.coin.out.value;
  }
  auto allocation = allocate_legs(balances, request.amount, request.fee_per_leg);
  if (!allocation) return fail(allocation.error());

  HtlcPayment payment;
  payment.preimage = request.preimage;
  payment.hashlock = crypto::double_sha256(request.preimage);
  payment.timelock_base = request.timelock_base;
  payment.stagger = request.stagger;
  payment.receiver = request.receiver;

  for (std::size_t i = 0; i < allocation.value().size(); ++i) {
    const auto& alloc = allocation.value()[i];
    auto pool = by_subchain[alloc.subchain];
    std::stable_sort(pool.begin(), pool.end(), [](const WalletCoin* a, const WalletCoin* b) {
      if (a->coin.out.value != b->coin.out.value) return a->coin.out.value > b->coin.out.value;
      return a->outpoint < b->outpoint;
    });

    Amount need = alloc.amount + request.fee_per_leg;
    Amount gathered = 0;
    Transaction tx;
    std::vector<const crypto::KeyPair*> keys;
    for (const auto* c : pool) {
      if (gathered >= need) break;
      tx.inputs.push_back(ledger::TxIn{c->outpoint, {}, 0xffffffff});
      keys.push_back(c->key);
      gathered += c->coin.out.value;
    }

    HtlcLeg leg;
    leg.subchain = alloc.subchain;
    leg.amount = alloc.amount;
    leg.timelock = request.timelock_base + static_cast<Height>(i) * request.stagger;
    const auto& refund_to = pool.front()->key->address_hash();
    leg.script = Script::htlc(payment.hashlock, leg.timelock, request.receiver, refund_to);
    tx.outputs.push_back({alloc.amount, leg.script});
    if (gathered > need) tx.outputs.push_back({gathered - need, pool.front()->coin.out.script_pubkey});
    ledger::sign_inputs(tx, keys);
    leg.txid = ledger::txid(tx);
    leg.htlc_outpoint = OutPoint{leg.txid, 0};
    leg.tx = std::move(tx);
    payment.legs.push_back(std::move(leg));
  }
  return payment;
}

Result<Transaction, XferError> claim_htlc_leg(const OutPoint& leg, const ledger::TxOut& leg_out, ByteView preimage,
                                              const crypto::KeyPair& receiver, const Script& payout, Amount fee) {
  const auto* h = leg_out.script_pubkey.as_htlc();
  if (h == nullptr) return fail(XferError::NotHtlc);
  if (crypto::double_sha256(preimage) != h->hashlock) return fail(XferError::WrongPreimage);
  if (receiver.address_hash() != h->receiver) return fail(XferError::WrongKey);
  if (fee >= leg_out.value) return fail(XferError::InsufficientTotalBalance);
  Transaction tx;
  ledger::TxIn in{leg, {}, 0xffffffff};
  in.witness.branch = ledger::Branch::Claim;
  in.witness.preimage.assign(preimage.begin(), preimage.end());
  tx.inputs.push_back(std::move(in));
  tx.outputs.push_back({leg_out.value - fee, payout});
  const crypto::KeyPair* keys[] = {&receiver};
  ledger::sign_inputs(tx, keys);
  return tx;
}

Result<Transaction, XferError> refund_htlc_leg(const OutPoint& leg, const ledger::TxOut& leg_out,
                                               const crypto::KeyPair& sender, Height height, const Script& payout,
                                               Amount fee) {
  const auto* h = leg_out.script_pubkey.as_htlc();
  if (h == nullptr) return fail(XferError::NotHtlc);
  if (height < h->timelock) return fail(XferError::TimelockNotExpired);
  if (sender.address_hash() != h->sender) return fail(XferError::WrongKey);
  if (fee >= leg_out.value) return fail(XferError::InsufficientTotalBalance);
  Transaction tx;
  ledger::TxIn in{leg, {}, 0xffffffff};
  in.witness.branch = ledger::Branch::Refund;
  tx.inputs.push_back(std::move(in));
  tx.outputs.push_back({leg_out.value - fee, payout});
  tx.locktime = h->timelock;
  const crypto::KeyPair* keys[] = {&sender};
  ledger::sign_inputs(tx, keys);
  return tx;
}

}  // namespace splitscale::xfer
