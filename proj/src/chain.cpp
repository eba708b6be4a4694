#include "splitscale/chain.hpp"

#include <algorithm>
#include <bit>

namespace splitscale::chain {

namespace {

constexpr std::size_t kMaxScript = 128;
constexpr std::size_t kMaxBlockBytes = 64u << 20;

using BigInt = boost::multiprecision::cpp_int;

BigInt to_big(const Digest256& d) { return BigInt(crypto::to_u256(d)); }

Digest256 from_big(const BigInt& v) {
  static const BigInt kMax = BigInt(crypto::to_u256(Digest256::max()));
  if (v > kMax) return Digest256::max();
  if (v < 0) return Digest256{};
  return crypto::from_u256(crypto::U256(v));
}

unsigned log2_exact(std::size_t n) { return static_cast<unsigned>(std::countr_zero(n)); }

BlockError error(BlockErrorCode code, SubchainId subchain = 0) {
  BlockError e;
  e.code = code;
  e.subchain = subchain;
  return e;
}

void write_import(ByteWriter& w, const ImportedOutput& imp) {
  w.raw(imp.outpoint.txid.bytes);
  w.u32(imp.outpoint.index);
  w.u64(imp.out.value);
  w.var_bytes(imp.out.script_pubkey.bytes());
  w.u8(imp.coinbase ? 1 : 0);
}

ImportedOutput read_import(ByteReader& r) {
  ImportedOutput imp;
  imp.outpoint.txid = Digest256::from_view(r.raw(32));
  imp.outpoint.index = r.u32();
  imp.out.value = r.u64();
  imp.out.script_pubkey = Script::parse(r.var_bytes(kMaxScript));
  imp.coinbase = r.boolean();
  return imp;
}

void write_reward(ByteWriter& w, const RewardRecord& reward) {
  w.var_bytes(reward.payout.bytes());
  w.u64(reward.amount);
}

bool is_canonical_coinbase(const Transaction& tx, SubchainId subchain, Height height) {
  if (!tx.is_coinbase || tx.inputs.size() != 1 || tx.outputs.size() > 1 || tx.locktime != height) return false;
  const auto& in = tx.inputs[0];
  return in.prevout.txid.is_zero() && in.prevout.index == subchain && in.sequence == height &&
         in.witness == ledger::Witness{};
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

void write_header(ByteWriter& w, const BlockHeader& h) {
  w.raw(h.prev_hash.bytes);
  w.raw(h.payload_root.bytes);
  w.u32(h.height);
  w.raw(h.target.bytes);
  w.u64(h.nonce);
  w.u64(h.timestamp);
}

BlockHeader read_header(ByteReader& r) {
  BlockHeader h;
  h.prev_hash = Digest256::from_view(r.raw(32));
  h.payload_root = Digest256::from_view(r.raw(32));
  h.height = r.u32();
  h.target = Digest256::from_view(r.raw(32));
  h.nonce = r.u64();
  h.timestamp = r.u64();
  return h;
}

Digest256 BlockHeader::hash() const {
  ByteWriter w;
  write_header(w, *this);
  return crypto::double_sha256(w.data());
}

void write_subblock(ByteWriter& w, const SubchainBlock& b) {
  write_header(w, b.header);
  w.u32(b.subchain);
  w.u32(static_cast<std::uint32_t>(b.txs.size()));
  for (const auto& tx : b.txs) ledger::write_tx(w, tx);
  w.u32(static_cast<std::uint32_t>(b.imports.size()));
  for (const auto& imp : b.imports) write_import(w, imp);
}

SubchainBlock read_subblock(ByteReader& r) {
  SubchainBlock b;
  b.header = read_header(r);
  b.subchain = r.u32();
  auto n_tx = r.count(10);
  b.txs.reserve(n_tx);
  for (std::uint32_t i = 0; i < n_tx; ++i) b.txs.push_back(ledger::read_tx(r));
  auto n_imp = r.count(53);
  b.imports.reserve(n_imp);
  for (std::uint32_t i = 0; i < n_imp; ++i) b.imports.push_back(read_import(r));
  return b;
}

void write_eigen(ByteWriter& w, const EigenBlock& b) {
  write_header(w, b.header);
  w.u32(static_cast<std::uint32_t>(b.subchain_header_hashes.size()));
  for (const auto& h : b.subchain_header_hashes) w.raw(h.bytes);
  w.u32(static_cast<std::uint32_t>(b.eigentxs.size()));
  for (const auto& etx : b.eigentxs) xfer::write_eigentx(w, etx);
  write_reward(w, b.reward);
}

EigenBlock read_eigen(ByteReader& r) {
  EigenBlock b;
  b.header = read_header(r);
  auto n = r.count(32);
  b.subchain_header_hashes.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) b.subchain_header_hashes.push_back(Digest256::from_view(r.raw(32)));
  auto n_etx = r.count(60);
  b.eigentxs.reserve(n_etx);
  for (std::uint32_t i = 0; i < n_etx; ++i) b.eigentxs.push_back(xfer::read_eigentx(r));
  b.reward.payout = Script::parse(r.var_bytes(kMaxScript));
  b.reward.amount = r.u64();
  return b;
}

Bytes serialize_composite(const CompositeBlock& cb) {
  ByteWriter eigen;
  write_eigen(eigen, cb.eigen);
  ByteWriter w;
  w.var_bytes(eigen.data());
  w.u32(static_cast<std::uint32_t>(cb.subblocks.size()));
  for (const auto& sub : cb.subblocks) {
    ByteWriter s;
    write_subblock(s, sub);
    w.var_bytes(s.data());
  }
  return std::move(w).take();
}

CompositeBlock deserialize_composite(ByteView bytes) {
  ByteReader r(bytes);
  CompositeBlock cb;
  {
    auto eigen_bytes = r.var_bytes(kMaxBlockBytes);
    ByteReader er(eigen_bytes);
    cb.eigen = read_eigen(er);
    er.expect_end();
  }
  auto n = r.count(4);
  cb.subblocks.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto sub_bytes = r.var_bytes(kMaxBlockBytes);
    ByteReader sr(sub_bytes);
    cb.subblocks.push_back(read_subblock(sr));
    sr.expect_end();
  }
  r.expect_end();
  return cb;
}

Bytes serialize_block_n(const EigenBlock& eigen, const SubchainBlock& sub) {
  ByteWriter e;
  write_eigen(e, eigen);
  ByteWriter s;
  write_subblock(s, sub);
  ByteWriter w;
  w.var_bytes(e.data());
  w.var_bytes(s.data());
  return std::move(w).take();
}

std::pair<EigenBlock, SubchainBlock> deserialize_block_n(ByteView bytes) {
  ByteReader r(bytes);
  auto eigen_bytes = r.var_bytes(kMaxBlockBytes);
  auto sub_bytes = r.var_bytes(kMaxBlockBytes);
  r.expect_end();
  ByteReader er(eigen_bytes);
  auto eigen = read_eigen(er);
  er.expect_end();
  ByteReader sr(sub_bytes);
  auto sub = read_subblock(sr);
  sr.expect_end();
  return {std::move(eigen), std::move(sub)};
}

// ---------------------------------------------------------------------------
// Commitments
// ---------------------------------------------------------------------------

Digest256 merkle_root(std::vector<Digest256> leaves) {
  if (leaves.empty()) return Digest256{};
  while (leaves.size() > 1) {
    if (leaves.size() % 2 == 1) leaves.push_back(leaves.back());
    std::vector<Digest256> next;
    next.reserve(leaves.size() / 2);
    for (std::size_t i = 0; i < leaves.size(); i += 2) {
      std::array<std::uint8_t, 64> pair{};
      std::copy(leaves[i].bytes.begin(), leaves[i].bytes.end(), pair.begin());
      std::copy(leaves[i + 1].bytes.begin(), leaves[i + 1].bytes.end(), pair.begin() + 32);
      next.push_back(crypto::double_sha256(pair));
    }
    leaves = std::move(next);
  }
  return leaves.front();
}

Digest256 import_leaf(const ImportedOutput& imp) {
  ByteWriter w;
  write_import(w, imp);
  return crypto::double_sha256(w.data());
}

Digest256 reward_hash(const RewardRecord& reward) {
  ByteWriter w;
  write_reward(w, reward);
  return crypto::double_sha256(w.data());
}

Digest256 subblock_payload_root(const SubchainBlock& b) {
  std::vector<Digest256> leaves;
  leaves.reserve(b.txs.size() + b.imports.size());
  for (const auto& tx : b.txs) leaves.push_back(ledger::txid(tx));
  for (const auto& imp : b.imports) leaves.push_back(import_leaf(imp));
  return merkle_root(std::move(leaves));
}

Digest256 eigen_payload_root(const EigenBlock& b) {
  std::vector<Digest256> leaves = b.subchain_header_hashes;
  for (const auto& etx : b.eigentxs) leaves.push_back(xfer::eigentx_id(etx));
  leaves.push_back(reward_hash(b.reward));
  return merkle_root(std::move(leaves));
}

OutPoint reward_outpoint(const RewardRecord& reward, Height height) {
  ByteWriter w;
  write_reward(w, reward);
  w.u32(height);
  return OutPoint{crypto::double_sha256(w.data()), 0};
}

// ---------------------------------------------------------------------------
// Parameters, targets, fork choice
// ---------------------------------------------------------------------------

unsigned ConsensusParams::depth_at(Height h) const {
  unsigned d = 0;
  for (const auto& s : splits) {
    if (s.height < h) ++d;
  }
  return d;
}

const SplitEvent* ConsensusParams::split_at(Height h) const {
  for (const auto& s : splits) {
    if (s.height == h) return &s;
  }
  return nullptr;
}

void ConsensusParams::validate() const {
  if (splits.size() > crypto::kMaxSplitDepth) throw ConfigError("more splits than the maximum split depth");
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i].height == 0) throw ConfigError("split height must be positive");
    if (i > 0 && splits[i].height <= splits[i - 1].height) throw ConfigError("split heights must increase");
  }
  if (!(initial_targets.eigen < initial_targets.subchain)) {
    throw ConfigError("eigen target must be harder than the subchain target");
  }
  if (retarget_window == 0 || target_interval_ms == 0) throw ConfigError("retarget window and interval must be positive");
  if (eigentx_window && eigentx_window->start > eigentx_window->end) throw ConfigError("eigentx window is empty");
}

Targets split_targets(const Targets& t) { return {from_big(to_big(t.subchain) * 2 + 1), t.eigen}; }

Targets retarget(const Targets& t, std::uint64_t mean_interval_ms, std::uint64_t target_interval_ms) {
  auto scale = [&](const Digest256& d) {
    BigInt old = to_big(d) + 1;
    BigInt scaled = old * mean_interval_ms / target_interval_ms;
    scaled = std::clamp(scaled, BigInt(old / 4), BigInt(old * 4));
    if (scaled < 1) scaled = 1;
    return from_big(scaled - 1);
  };
  return {scale(t.subchain), scale(t.eigen)};
}

bool better_tip(const TipRank& a, const TipRank& b) {
  if (a.work != b.work) return a.work > b.work;
  if (a.arrival != b.arrival) return a.arrival < b.arrival;
  return a.hash < b.hash;
}

std::size_t choose_fork(std::span<const TipRank> candidates) {
  if (candidates.empty()) throw ContractViolation("choose_fork needs a candidate");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (better_tip(candidates[i], candidates[best])) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::string_view to_string(BlockErrorCode c) {
  switch (c) {
    case BlockErrorCode::Malformed: return "Malformed";
    case BlockErrorCode::BadArity: return "BadArity";
    case BlockErrorCode::HeightMismatch: return "HeightMismatch";
    case BlockErrorCode::TimestampMismatch: return "TimestampMismatch";
    case BlockErrorCode::BadParent: return "BadParent";
    case BlockErrorCode::BadTarget: return "BadTarget";
    case BlockErrorCode::BadPow: return "BadPow";
    case BlockErrorCode::CrossRefMismatch: return "CrossRefMismatch";
    case BlockErrorCode::BadMerkleRoot: return "BadMerkleRoot";
    case BlockErrorCode::OverCapacity: return "OverCapacity";
    case BlockErrorCode::BadCoinbase: return "BadCoinbase";
    case BlockErrorCode::BadTx: return "BadTx";
    case BlockErrorCode::BadCoinbaseValue: return "BadCoinbaseValue";
    case BlockErrorCode::BadEigenTx: return "BadEigenTx";
    case BlockErrorCode::BadImports: return "BadImports";
    case BlockErrorCode::BadReward: return "BadReward";
  }
  return "?";
}

std::string BlockError::describe() const {
  std::string s(to_string(code));
  s += " subchain=" + std::to_string(subchain);
  if (tx_error) s += " tx=" + txid.hex() + " cause=" + std::string(ledger::to_string(*tx_error));
  if (eigen_error) s += " etx=" + txid.hex() + " cause=" + std::string(xfer::to_string(*eigen_error));
  return s;
}

Status<BlockError> check_commitments(const EigenBlock& eigen, std::span<const SubchainBlock* const> subblocks,
                                     bool complete) {
  const auto& hashes = eigen.subchain_header_hashes;
  if (complete && subblocks.size() != hashes.size()) return fail(error(BlockErrorCode::BadArity));
  for (std::size_t i = 0; i < subblocks.size(); ++i) {
    const auto* sub = subblocks[i];
    if (sub->subchain >= hashes.size() || (complete && sub->subchain != i)) {
      return fail(error(BlockErrorCode::BadArity, sub->subchain));
    }
    if (sub->header.hash() != hashes[sub->subchain]) {
      return fail(error(BlockErrorCode::CrossRefMismatch, sub->subchain));
    }
    if (subblock_payload_root(*sub) != sub->header.payload_root) {
      return fail(error(BlockErrorCode::BadMerkleRoot, sub->subchain));
    }
  }
  if (eigen_payload_root(eigen) != eigen.header.payload_root) return fail(error(BlockErrorCode::BadMerkleRoot));
  return Unit{};
}

Status<BlockError> check_structure(const EigenBlock& eigen, std::span<const SubchainBlock* const> subblocks,
                                   const BlockRules& rules) {
  const auto count = rules.partition.subchain_count();
  const Height height = rules.parent.height + 1;
  const auto& eh = eigen.header;

  if (eigen.subchain_header_hashes.size() != count) return fail(error(BlockErrorCode::BadArity));
  std::optional<SubchainId> prev_id;
  for (const auto* sub : subblocks) {
    if (sub->subchain >= count || (prev_id && sub->subchain <= *prev_id)) {
      return fail(error(BlockErrorCode::BadArity, sub->subchain));
    }
    prev_id = sub->subchain;
  }
  if (eh.height != height) return fail(error(BlockErrorCode::HeightMismatch));
  for (const auto* sub : subblocks) {
    if (sub->header.height != height) return fail(error(BlockErrorCode::HeightMismatch, sub->subchain));
  }

  if (!eh.meets_target()) return fail(error(BlockErrorCode::BadPow));
  for (const auto* sub : subblocks) {
    if (!sub->header.meets_target()) return fail(error(BlockErrorCode::BadPow, sub->subchain));
  }
  for (const auto* sub : subblocks) {
    if (sub->header.hash() != eigen.subchain_header_hashes[sub->subchain]) {
      return fail(error(BlockErrorCode::CrossRefMismatch, sub->subchain));
    }
  }
  if (eigen_payload_root(eigen) != eh.payload_root) return fail(error(BlockErrorCode::BadMerkleRoot));
  for (const auto* sub : subblocks) {
    if (subblock_payload_root(*sub) != sub->header.payload_root) {
      return fail(error(BlockErrorCode::BadMerkleRoot, sub->subchain));
    }
  }

  if (eh.timestamp < rules.parent.timestamp) return fail(error(BlockErrorCode::TimestampMismatch));
  for (const auto* sub : subblocks) {
    if (sub->header.timestamp != eh.timestamp) return fail(error(BlockErrorCode::TimestampMismatch, sub->subchain));
  }

  if (eh.prev_hash != rules.parent.eigen_hash) return fail(error(BlockErrorCode::BadParent));
  const auto parent_count = rules.parent.subchain_hashes.size();
  if (parent_count == 0 || !std::has_single_bit(parent_count) || parent_count > count) {
    throw ContractViolation("parent sub-chain hashes inconsistent with partition");
  }
  const unsigned shift = rules.partition.depth - log2_exact(parent_count);
  for (const auto* sub : subblocks) {
    if (sub->header.prev_hash != rules.parent.subchain_hashes[sub->subchain >> shift]) {
      return fail(error(BlockErrorCode::BadParent, sub->subchain));
    }
  }

  if (eh.target != rules.targets.eigen) return fail(error(BlockErrorCode::BadTarget));
  for (const auto* sub : subblocks) {
    if (sub->header.target != rules.targets.subchain) return fail(error(BlockErrorCode::BadTarget, sub->subchain));
  }

  if (eigen.eigentxs.size() > rules.params->eigen_capacity) return fail(error(BlockErrorCode::OverCapacity));
  for (const auto* sub : subblocks) {
    if (sub->txs.empty()) return fail(error(BlockErrorCode::BadCoinbase, sub->subchain));
    if (sub->txs.size() - 1 > rules.params->block_tx_capacity) {
      return fail(error(BlockErrorCode::OverCapacity, sub->subchain));
    }
  }
  return Unit{};
}

void disconnect_composite(ledger::ChainStateSet& states, const CompositeUndo& undo) {
  auto store = [&](SubchainId id) -> ledger::ChainState& {
    auto* s = states.find(id);
    if (s == nullptr) throw ContractViolation("undo names an untracked sub-chain");
    return *s;
  };
  if (undo.reward) store(undo.reward->first).erase(undo.reward->second);
  for (auto it = undo.imported.rbegin(); it != undo.imported.rend(); ++it) store(it->first).erase(it->second);
  for (auto it = undo.eigentxs.rbegin(); it != undo.eigentxs.rend(); ++it) xfer::revert_eigentx(states, *it);
  for (auto it = undo.txs.rbegin(); it != undo.txs.rend(); ++it) {
    auto& s = store(it->first);
    for (auto tx = it->second.rbegin(); tx != it->second.rend(); ++tx) ledger::revert_transaction(s, *tx);
  }
}

Result<CompositeUndo, BlockError> connect_block(ledger::ChainStateSet& states, const EigenBlock& eigen,
                                                std::span<const SubchainBlock* const> subblocks,
                                                const BlockRules& rules) {
  if (rules.params == nullptr) throw ContractViolation("block rules need consensus params");
  if (!(states.partition() == rules.partition)) throw ContractViolation("stores and rules disagree on the partition");
  if (auto s = check_structure(eigen, subblocks, rules); !s) return fail(s.error());

  const Height height = rules.parent.height + 1;
  const auto& partition = rules.partition;
  const bool complete = states.is_full() && subblocks.size() == partition.subchain_count();

  CompositeUndo undo;
  auto abort = [&](BlockError e) -> Result<CompositeUndo, BlockError> {
    disconnect_composite(states, undo);
    return fail(std::move(e));
  };

  std::vector<const ledger::ChainState*> siblings;
  for (const auto& s : states.states()) siblings.push_back(&s);

  std::set<OutPoint> spent;
  std::vector<std::vector<ImportedOutput>> expected_imports(partition.subchain_count());

  for (const auto* sub : subblocks) {
    auto* state = states.find(sub->subchain);
    if (state == nullptr) continue;
    auto& tx_undos = undo.txs.emplace_back(sub->subchain, std::vector<ledger::TxUndo>{}).second;
    auto& confirmed = undo.confirmed.emplace_back(sub->subchain, std::vector<Digest256>{}).second;
    std::vector<ledger::RoutedOutput> routed;

    Amount fees = 0;
    for (std::size_t i = 1; i < sub->txs.size(); ++i) {
      const auto& tx = sub->txs[i];
      auto id = ledger::txid(tx);
      if (tx.is_coinbase) {
        auto e = error(BlockErrorCode::BadCoinbase, sub->subchain);
        e.txid = id;
        return abort(e);
      }
      ledger::ValidationContext ctx{&partition, height, siblings, &spent, rules.sig_cache, &id};
      auto fee = ledger::validate_transaction(tx, *state, ctx);
      if (!fee) {
        auto e = error(BlockErrorCode::BadTx, sub->subchain);
        e.txid = id;
        e.tx_error = fee.error();
        return abort(e);
      }
      fees += fee.value();
      for (const auto& in : tx.inputs) {
        spent.insert(in.prevout);
        undo.spent.push_back(in.prevout);
      }
      tx_undos.push_back(ledger::apply_transaction(*state, partition, tx, id, height, routed));
      confirmed.push_back(id);
    }

    const auto& coinbase = sub->txs.front();
    if (!is_canonical_coinbase(coinbase, sub->subchain, height)) {
      return abort(error(BlockErrorCode::BadCoinbase, sub->subchain));
    }
    Amount paid = coinbase.outputs.empty() ? 0 : coinbase.outputs.front().value;
    if (paid != fees || (fees > 0 && coinbase.outputs.empty())) {
      return abort(error(BlockErrorCode::BadCoinbaseValue, sub->subchain));
    }
    tx_undos.push_back(ledger::apply_transaction(*state, partition, coinbase, height, routed));

    for (auto& r : routed) {
      expected_imports[r.subchain].push_back(ImportedOutput{r.outpoint, std::move(r.coin.out), r.coin.coinbase});
    }
  }

  xfer::EigenCheckContext ectx{height, rules.params->eigentx_window, &spent};
  for (const auto& etx : eigen.eigentxs) {
    auto status = xfer::check_eigentx(etx, states, ectx);
    auto id = xfer::eigentx_id(etx);
    if (!status) {
      auto e = error(BlockErrorCode::BadEigenTx, etx.source);
      e.txid = id;
      e.eigen_error = status.error();
      return abort(e);
    }
    undo.eigentxs.push_back(xfer::apply_eigentx(states, etx, id, height));
    for (const auto& op : etx.source_outpoints) {
      spent.insert(op);
      undo.spent.push_back(op);
    }
  }

  for (const auto* sub : subblocks) {
    auto* state = states.find(sub->subchain);
    if (state == nullptr) continue;
    if (complete && sub->imports != expected_imports[sub->subchain]) {
      return abort(error(BlockErrorCode::BadImports, sub->subchain));
    }
    for (const auto& imp : sub->imports) {
      if (partition.route(imp.out.script_pubkey.hash()) != sub->subchain || state->contains(imp.outpoint) ||
          imp.out.value > ledger::kMaxMoney) {
        return abort(error(BlockErrorCode::BadImports, sub->subchain));
      }
      state->insert(imp.outpoint, ledger::Coin{imp.out, height, imp.coinbase, false});
      undo.imported.emplace_back(sub->subchain, imp.outpoint);
    }
  }

  const Amount expected_reward =
      rules.params->subsidy.at(height) + xfer::kEigenFee * static_cast<Amount>(eigen.eigentxs.size());
  if (eigen.reward.amount != expected_reward) return abort(error(BlockErrorCode::BadReward));
  if (eigen.reward.amount > 0) {
    auto dest = partition.route(eigen.reward.payout.hash());
    if (auto* state = states.find(dest)) {
      auto op = reward_outpoint(eigen.reward, height);
      if (state->contains(op)) return abort(error(BlockErrorCode::BadReward, dest));
      state->insert(op, ledger::Coin{{eigen.reward.amount, eigen.reward.payout}, height, true, false});
      undo.reward.emplace(dest, op);
    }
  }
  return undo;
}

Result<CompositeUndo, BlockError> connect_composite(ledger::ChainStateSet& states, const CompositeBlock& cb,
                                                    const BlockRules& rules) {
  if (cb.subblocks.size() != rules.partition.subchain_count()) return fail(error(BlockErrorCode::BadArity));
  std::vector<const SubchainBlock*> subs;
  subs.reserve(cb.subblocks.size());
  for (std::size_t i = 0; i < cb.subblocks.size(); ++i) {
    if (cb.subblocks[i].subchain != i) return fail(error(BlockErrorCode::BadArity, static_cast<SubchainId>(i)));
    subs.push_back(&cb.subblocks[i]);
  }
  return connect_block(states, cb.eigen, subs, rules);
}

Status<BlockError> validate_composite(const CompositeBlock& cb, const ledger::ChainStateSet& states,
                                      const BlockRules& rules) {
  auto scratch = states;
  auto r = connect_composite(scratch, cb, rules);
  if (!r) return fail(r.error());
  return Unit{};
}

// ---------------------------------------------------------------------------
// Genesis and mining
// ---------------------------------------------------------------------------

Genesis make_genesis(std::vector<ledger::TxOut> outputs) {
  Genesis g;
  g.allocation.outputs = std::move(outputs);
  ByteWriter w;
  w.raw(as_bytes("splitscale genesis"));
  ledger::write_tx(w, g.allocation);
  g.hash = crypto::double_sha256(w.data());
  return g;
}

ledger::ChainStateSet genesis_state(const Genesis& g) {
  ledger::ChainState state(0);
  auto id = ledger::txid(g.allocation);
  for (std::uint32_t i = 0; i < g.allocation.outputs.size(); ++i) {
    state.insert(OutPoint{id, i}, ledger::Coin{g.allocation.outputs[i], 0, false, false});
  }
  std::vector<ledger::ChainState> states;
  states.push_back(std::move(state));
  return ledger::ChainStateSet(ledger::Partition{}, std::move(states));
}

ParentInfo genesis_parent(const Genesis& g) { return ParentInfo{0, g.hash, {g.hash}, 0}; }

std::uint64_t grind(BlockHeader& header, std::uint64_t start) {
  header.nonce = start;
  std::uint64_t tries = 1;
  while (!header.meets_target()) {
    ++header.nonce;
    ++tries;
  }
  return tries;
}

CompositeBlock mine_composite(const MiningInputs& in, const BlockRules& rules) {
  if (in.states == nullptr || !in.states->is_full()) throw ContractViolation("mining needs every chainstate");
  const auto& partition = rules.partition;
  const auto count = partition.subchain_count();
  if (in.mempools.size() != count) throw ContractViolation("one mempool per sub-chain required");
  const Height height = rules.parent.height + 1;
  const unsigned shift = partition.depth - log2_exact(rules.parent.subchain_hashes.size());

  CompositeBlock cb;
  cb.subblocks.resize(count);
  std::set<OutPoint> spent;
  std::vector<std::vector<ImportedOutput>> imports(count);
  auto route_outputs = [&](SubchainId from, const Transaction& tx) {
    auto id = ledger::txid(tx);
    for (std::uint32_t i = 0; i < tx.outputs.size(); ++i) {
      auto dest = partition.route(tx.outputs[i].script_pubkey.hash());
      if (dest != from) imports[dest].push_back(ImportedOutput{OutPoint{id, i}, tx.outputs[i], tx.is_coinbase});
    }
  };

  for (SubchainId i = 0; i < count; ++i) {
    auto& sub = cb.subblocks[i];
    sub.subchain = i;
    Amount fees = 0;
    std::vector<Transaction> body;
    for (const auto* entry : in.mempools[i].select_for_block(rules.params->block_tx_capacity)) {
      fees += entry->fee;
      for (const auto& input : entry->tx.inputs) spent.insert(input.prevout);
      body.push_back(entry->tx);
    }
    sub.txs.push_back(ledger::make_coinbase(i, height, in.payout, fees));
    for (auto& tx : body) {
      route_outputs(i, tx);
      sub.txs.push_back(std::move(tx));
    }
    route_outputs(i, sub.txs.front());
  }

  if (in.eigenpool != nullptr) {
    xfer::EigenCheckContext ectx{height, rules.params->eigentx_window, &spent};
    for (const auto* entry : in.eigenpool->select(rules.params->eigen_capacity)) {
      if (!xfer::check_eigentx(entry->etx, *in.states, ectx)) continue;
      for (const auto& op : entry->etx.source_outpoints) spent.insert(op);
      cb.eigen.eigentxs.push_back(entry->etx);
    }
  }

  for (SubchainId i = 0; i < count; ++i) {
    auto& sub = cb.subblocks[i];
    sub.imports = std::move(imports[i]);
    sub.header.prev_hash = rules.parent.subchain_hashes[i >> shift];
    sub.header.payload_root = subblock_payload_root(sub);
    sub.header.height = height;
    sub.header.target = rules.targets.subchain;
    sub.header.timestamp = in.timestamp;
    grind(sub.header, in.nonce_seed + (std::uint64_t{i} << 40));
    cb.eigen.subchain_header_hashes.push_back(sub.header.hash());
  }

  cb.eigen.reward.payout = in.payout;
  cb.eigen.reward.amount =
      rules.params->subsidy.at(height) + xfer::kEigenFee * static_cast<Amount>(cb.eigen.eigentxs.size());
  auto& eh = cb.eigen.header;
  eh.prev_hash = rules.parent.eigen_hash;
  eh.payload_root = eigen_payload_root(cb.eigen);
  eh.height = height;
  eh.target = rules.targets.eigen;
  eh.timestamp = in.timestamp;
  grind(eh, in.nonce_seed ^ 0x5eedULL << 48);
  return cb;
}

}  // namespace splitscale::chain
