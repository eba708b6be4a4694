#include "splitscale/node.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace splitscale::node {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Miner: return "miner";
    case Role::Full: return "full";
    case Role::Half: return "half";
  }
  return "?";
}

std::optional<Role> parse_role(std::string_view s) {
  if (s == "miner") return Role::Miner;
  if (s == "full") return Role::Full;
  if (s == "half") return Role::Half;
  return std::nullopt;
}

std::string_view to_string(BlockStatus s) {
  switch (s) {
    case BlockStatus::Connected: return "connected";
    case BlockStatus::Stored: return "stored";
    case BlockStatus::Duplicate: return "duplicate";
    case BlockStatus::Orphan: return "orphan";
    case BlockStatus::Invalid: return "invalid";
  }
  return "?";
}

SubchainId half_tracked_subchain(const std::optional<AddressHash>& follow, unsigned depth) {
  SubchainId s = 0;
  std::optional<Digest256> h;
  if (follow) h = ledger::Script::p2pkh(*follow).hash();
  for (unsigned d = 1; d <= depth; ++d) {
    SubchainId even = s * 2;
    s = (h && crypto::assign_subchain(*h, d) == even + 1) ? even + 1 : even;
  }
  return s;
}

BlockPayload BlockPayload::full(std::shared_ptr<const CompositeBlock> cb) {
  BlockPayload p;
  p.eigen = std::shared_ptr<const EigenBlock>(cb, &cb->eigen);
  p.composite = std::move(cb);
  return p;
}

BlockPayload BlockPayload::partial(std::shared_ptr<const EigenBlock> eigen, std::shared_ptr<const SubchainBlock> sub) {
  BlockPayload p;
  p.eigen = std::move(eigen);
  p.sub = std::move(sub);
  return p;
}

BlockPayload BlockPayload::slice(const std::shared_ptr<const CompositeBlock>& cb, std::size_t index) {
  return partial(std::shared_ptr<const EigenBlock>(cb, &cb->eigen),
                 std::shared_ptr<const SubchainBlock>(cb, &cb->subblocks.at(index)));
}

namespace {

chain::TipRank rank_of(const BlockEntry& e) { return {e.work, e.arrival, e.hash}; }

chain::BlockError simple_error(chain::BlockErrorCode code) {
  chain::BlockError e;
  e.code = code;
  return e;
}

}  // namespace

Node::Node(NodeConfig config, const chain::ConsensusParams& params, const chain::Genesis& genesis)
    : config_(std::move(config)), params_(params), genesis_(genesis), states_(chain::genesis_state(genesis)) {
  params_.validate();
  auto root = std::make_unique<BlockEntry>();
  root->hash = genesis_.hash;
  root->targets = params_.initial_targets;
  active_.push_back(root.get());
  index_.emplace(root->hash, std::move(root));
  mempools_.emplace_back(0);
  subchain_tip_heights_.assign(1, 0);
}

const BlockEntry* Node::find(const Digest256& hash) const {
  auto it = index_.find(hash);
  return it == index_.end() ? nullptr : it->second.get();
}

BlockEntry* Node::lookup(const Digest256& hash) {
  auto it = index_.find(hash);
  return it == index_.end() ? nullptr : it->second.get();
}

const ledger::Mempool* Node::mempool(SubchainId id) const {
  for (const auto& m : mempools_) {
    if (m.subchain() == id) return &m;
  }
  return nullptr;
}

std::optional<SubchainId> Node::tracked_subchain() const {
  if (!is_half()) return std::nullopt;
  return states_.states().front().subchain();
}

chain::Targets Node::targets_after(const BlockEntry& parent) const {
  chain::Targets t = parent.targets;
  const Height ph = parent.height;
  if (ph > 0 && params_.split_at(ph) != nullptr) t = chain::split_targets(t);
  const Height w = params_.retarget_window;
  if (ph >= w && ph % w == 0) {
    const BlockEntry* anc = &parent;
    for (Height i = 0; i < w; ++i) anc = find(anc->parent);
    auto span = parent.timestamp() - anc->timestamp();
    t = chain::retarget(t, span / w, params_.target_interval_ms);
  }
  return t;
}

chain::ParentInfo Node::parent_info(const BlockEntry& parent) const {
  if (parent.height == 0) return chain::genesis_parent(genesis_);
  return chain::ParentInfo{parent.height, parent.hash, parent.eigen().subchain_header_hashes, parent.timestamp()};
}

chain::BlockRules Node::next_rules() const {
  return chain::BlockRules{&params_, states_.partition(), targets_after(tip()), parent_info(tip()),
                           const_cast<ledger::SigCache*>(&sig_cache_)};
}

ledger::ExportHeader Node::export_header() const {
  return ledger::ExportHeader{states_.partition(), tip_height(), params_.subsidy, !is_half()};
}

std::string Node::export_chainstate() const { return ledger::export_string(export_header(), states_); }

Digest256 Node::export_digest() const { return ledger::export_digest(export_header(), states_); }

void Node::check_tip_heights() const {
  if (subchain_tip_heights_.size() != states_.states().size()) {
    throw InvariantViolation(config_.name + ": tracked sub-chain count changed without a split");
  }
  for (std::size_t i = 0; i < subchain_tip_heights_.size(); ++i) {
    if (subchain_tip_heights_[i] != tip_height()) {
      throw InvariantViolation(config_.name + ": sub-chain " + std::to_string(states_.states()[i].subchain()) +
                               " tip at height " + std::to_string(subchain_tip_heights_[i]) +
                               " but eigen tip at " + std::to_string(tip_height()));
    }
  }
}

// ---------------------------------------------------------------------------
// Transactions
// ---------------------------------------------------------------------------

Result<SubchainId, ledger::TxError> Node::submit_tx(const ledger::Transaction& tx) {
  auto reject = [&](ledger::TxError e) -> Result<SubchainId, ledger::TxError> {
    ++stats_.txs_rejected;
    return fail(e);
  };
  if (tx.is_coinbase || tx.inputs.empty()) return reject(ledger::TxError::Malformed);
  auto home = states_.locate(tx.inputs.front().prevout);
  if (!home) return reject(ledger::TxError::MissingUtxo);
  for (const auto& in : tx.inputs) {
    if (eigenpool_.spends(in.prevout)) return reject(ledger::TxError::ConflictingSpend);
  }
  std::vector<const ledger::ChainState*> siblings;
  for (const auto& s : states_.states()) siblings.push_back(&s);
  ledger::ValidationContext ctx{&states_.partition(), tip_height() + 1, siblings, nullptr, &sig_cache_, nullptr};
  ledger::Mempool* pool = nullptr;
  for (auto& m : mempools_) {
    if (m.subchain() == *home) pool = &m;
  }
  auto status = pool->accept(tx, *states_.find(*home), ctx);
  if (!status) return reject(status.error());
  ++stats_.txs_accepted;
  return *home;
}

Status<xfer::EigenError> Node::submit_eigentx(const xfer::Eigentransaction& etx) {
  auto reject = [&](xfer::EigenError e) -> Status<xfer::EigenError> {
    ++stats_.eigentxs_rejected;
    return fail(e);
  };
  if (const auto* pool = mempool(etx.source)) {
    for (const auto& op : etx.source_outpoints) {
      if (pool->spender_of(op)) return reject(xfer::EigenError::ConflictingSpend);
    }
  }
  xfer::EigenCheckContext ctx{tip_height() + 1, params_.eigentx_window, nullptr};
  auto status = eigenpool_.accept(etx, states_, ctx);
  if (!status) return reject(status.error());
  ++stats_.eigentxs_accepted;
  return Unit{};
}

std::shared_ptr<const CompositeBlock> Node::mine(std::uint64_t timestamp, const ledger::Script& payout,
                                                 std::uint64_t nonce_seed) const {
  if (config_.role != Role::Miner) throw ContractViolation("only miners mine");
  auto rules = next_rules();
  chain::MiningInputs in;
  in.states = &states_;
  in.mempools = mempools_;
  in.eigenpool = &eigenpool_;
  in.payout = payout;
  in.timestamp = std::max(timestamp, tip().timestamp());
  in.nonce_seed = nonce_seed;
  return std::make_shared<const CompositeBlock>(chain::mine_composite(in, rules));
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

ReceiveResult Node::receive_block(std::shared_ptr<const CompositeBlock> cb) {
  return receive(BlockPayload::full(std::move(cb)));
}

ReceiveResult Node::receive_block_n(std::shared_ptr<const EigenBlock> eigen, std::shared_ptr<const SubchainBlock> sub) {
  return receive(BlockPayload::partial(std::move(eigen), std::move(sub)));
}

ReceiveResult Node::receive(BlockPayload payload) {
  auto result = admit(std::move(payload));
  std::deque<Digest256> ready;
  if (result.status == BlockStatus::Connected || result.status == BlockStatus::Stored) ready.push_back(result.hash);
  while (!ready.empty()) {
    auto parent = ready.front();
    ready.pop_front();
    auto it = orphans_.find(parent);
    if (it == orphans_.end()) continue;
    auto waiting = std::move(it->second);
    orphans_.erase(it);
    for (auto& p : waiting) {
      auto r = admit(std::move(p));
      result.connected.insert(result.connected.end(), r.connected.begin(), r.connected.end());
      if (r.status == BlockStatus::Connected || r.status == BlockStatus::Stored) ready.push_back(r.hash);
    }
  }
  return result;
}

ReceiveResult Node::admit(BlockPayload payload) {
  ReceiveResult r;
  if (!payload.eigen) throw ContractViolation("block payload without an eigen block");
  const auto& header = payload.eigen->header;
  r.hash = header.hash();

  if (auto* known = lookup(r.hash)) {
    ++stats_.duplicates;
    r.status = known->invalid ? BlockStatus::Invalid : BlockStatus::Duplicate;
    return r;
  }
  auto reject = [&](chain::BlockErrorCode code) {
    ++stats_.blocks_rejected;
    r.status = BlockStatus::Invalid;
    r.error = simple_error(code);
    return r;
  };
  if (!header.meets_target()) return reject(chain::BlockErrorCode::BadPow);
  if (is_half() ? !payload.sub : !payload.composite) return reject(chain::BlockErrorCode::Malformed);
  {
    BlockEntry probe;
    probe.payload = payload;
    auto subs = subblocks_of(probe);
    if (auto c = chain::check_commitments(*payload.eigen, subs, payload.composite != nullptr); !c) {
      // Not indexed: an intact copy of the same header may still arrive.
      ++stats_.blocks_rejected;
      r.status = BlockStatus::Invalid;
      r.error = c.error();
      return r;
    }
  }

  auto* parent = lookup(header.prev_hash);
  if (parent == nullptr) {
    auto& waiting = orphans_[header.prev_hash];
    bool seen = std::any_of(waiting.begin(), waiting.end(),
                            [&](const BlockPayload& p) { return p.eigen->header.hash() == r.hash; });
    if (!seen) {
      waiting.push_back(std::move(payload));
      ++stats_.orphans;
    }
    r.status = BlockStatus::Orphan;
    r.missing_parent = header.prev_hash;
    return r;
  }

  auto entry = std::make_unique<BlockEntry>();
  entry->hash = r.hash;
  entry->parent = parent->hash;
  entry->height = parent->height + 1;
  entry->payload = std::move(payload);
  entry->targets = targets_after(*parent);
  entry->work = parent->work + crypto::work_for_target(header.target);
  entry->arrival = ++arrivals_;
  std::optional<chain::BlockErrorCode> early;
  if (parent->invalid) early = chain::BlockErrorCode::BadParent;
  else if (header.height != entry->height) early = chain::BlockErrorCode::HeightMismatch;
  else if (header.target != entry->targets.eigen) early = chain::BlockErrorCode::BadTarget;
  auto* e = entry.get();
  index_.emplace(r.hash, std::move(entry));
  if (early) {
    e->invalid = true;
    return reject(*early);
  }

  if (!chain::better_tip(rank_of(*e), rank_of(tip()))) {
    r.status = BlockStatus::Stored;
    return r;
  }
  r.status = activate(*e, r) ? BlockStatus::Connected : BlockStatus::Invalid;
  return r;
}

void Node::mark_invalid(BlockEntry& entry) {
  entry.invalid = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto& [hash, e] : index_) {
      if (e->invalid || e->height == 0) continue;
      auto* p = lookup(e->parent);
      if (p != nullptr && p->invalid) {
        e->invalid = true;
        changed = true;
      }
    }
  }
}

std::vector<const SubchainBlock*> Node::subblocks_of(const BlockEntry& entry) const {
  std::vector<const SubchainBlock*> subs;
  if (entry.payload.composite) {
    for (const auto& s : entry.payload.composite->subblocks) subs.push_back(&s);
  } else if (entry.payload.sub) {
    subs.push_back(entry.payload.sub.get());
  }
  return subs;
}

bool Node::activate(BlockEntry& candidate, ReceiveResult& result) {
  std::vector<BlockEntry*> path;
  BlockEntry* e = &candidate;
  while (e->height > tip_height() || active_[e->height] != e) {
    path.push_back(e);
    e = lookup(e->parent);
  }
  std::reverse(path.begin(), path.end());
  const Height fork = e->height;

  if (fork == tip_height()) {
    for (auto* step : path) {
      if (auto err = connect_entry(*step, true)) {
        mark_invalid(*step);
        result.error = err;
        return step != path.front();
      }
      result.connected.push_back(step->hash);
    }
    return true;
  }

  // Reorg: collect everything pending or confirmed above the fork, unwind.
  std::set<Digest256> previously_pending;
  std::vector<ledger::Transaction> txs;
  std::vector<xfer::Eigentransaction> etxs;
  for (Height h = fork + 1; h <= tip_height(); ++h) {
    for (const auto* sub : subblocks_of(*active_[h])) {
      if (!tracks(sub->subchain)) continue;
      for (std::size_t i = 1; i < sub->txs.size(); ++i) txs.push_back(sub->txs[i]);
    }
    for (const auto& etx : active_[h]->eigen().eigentxs) etxs.push_back(etx);
  }
  for (const auto& m : mempools_) {
    for (const auto& [id, entry] : m.entries()) {
      previously_pending.insert(id);
      txs.push_back(entry.tx);
    }
  }
  for (const auto& [id, entry] : eigenpool_.entries()) {
    previously_pending.insert(id);
    etxs.push_back(entry.etx);
  }
  std::vector<const BlockEntry*> old_path(active_.begin() + fork + 1, active_.end());
  const auto depth = old_path.size();
  while (tip_height() > fork) disconnect_tip();

  bool ok = true;
  for (auto* step : path) {
    if (auto err = connect_entry(*step, false)) {
      mark_invalid(*step);
      result.error = err;
      ok = false;
      break;
    }
  }
  if (!ok) {
    while (tip_height() > fork) disconnect_tip();
    for (const auto* step : old_path) {
      if (auto err = connect_entry(*step, false)) {
        throw InvariantViolation(config_.name + ": previously valid block failed to reconnect: " + err->describe());
      }
    }
  } else {
    ++stats_.reorgs;
    stats_.max_reorg_depth = std::max<std::uint64_t>(stats_.max_reorg_depth, depth);
    stats_.last_reorg_depth = depth;
    for (auto* step : path) result.connected.push_back(step->hash);
  }
  rebuild_pools(std::move(txs), std::move(etxs), previously_pending);
  check_tip_heights();
  return ok;
}

std::optional<chain::BlockError> Node::connect_entry(const BlockEntry& entry, bool maintain_pools) {
  if (entry.parent != tip().hash) throw ContractViolation("connect_entry must extend the active tip");
  auto rules = next_rules();
  auto subs = subblocks_of(entry);
  if (is_half()) {
    if (subs.size() != 1 || !tracks(subs.front()->subchain)) {
      ++stats_.blocks_rejected;
      return simple_error(chain::BlockErrorCode::BadArity);
    }
  } else if (entry.payload.composite) {
    const auto& cb = *entry.payload.composite;
    if (cb.subblocks.size() != rules.partition.subchain_count()) {
      ++stats_.blocks_rejected;
      return simple_error(chain::BlockErrorCode::BadArity);
    }
    for (std::size_t i = 0; i < cb.subblocks.size(); ++i) {
      if (cb.subblocks[i].subchain != i) {
        ++stats_.blocks_rejected;
        return simple_error(chain::BlockErrorCode::BadArity);
      }
    }
  }
  auto res = chain::connect_block(states_, entry.eigen(), subs, rules);
  if (!res) {
    ++stats_.blocks_rejected;
    return res.error();
  }
  const Height height = entry.height;
  undo_.push_back(HeightUndo{std::move(res).value(), std::nullopt});
  active_.push_back(&entry);
  std::fill(subchain_tip_heights_.begin(), subchain_tip_heights_.end(), height);
  ++stats_.blocks_connected;
  const auto& undo = undo_.back().block;

  if (maintain_pools) {
    for (const auto& [sub, ids] : undo.confirmed) {
      for (auto& m : mempools_) {
        if (m.subchain() != sub) continue;
        for (const auto& id : ids) m.remove(id);
      }
    }
    for (const auto& etx : entry.eigen().eigentxs) eigenpool_.remove(xfer::eigentx_id(etx));
    for (auto& m : mempools_) {
      for (const auto& id : m.remove_spenders(undo.spent)) evict(id);
    }
    for (const auto& id : eigenpool_.remove_spenders(undo.spent)) evict(id);
  }
  emit_connect_delta(entry, undo);

  if (const auto* split = params_.split_at(height)) {
    splitter::SplitDirective d{height, split->mode, states_.partition().depth + 1};
    auto outcome = splitter::apply_split(states_, mempools_, d, height, {!is_half(), config_.follow}, &sig_cache_);
    undo_.back().split = std::move(outcome.undo);
    subchain_tip_heights_.assign(states_.states().size(), height);
    std::vector<Digest256> flushed = std::move(outcome.flushed);
    for (const auto& [id, e] : eigenpool_.entries()) flushed.push_back(id);
    eigenpool_.clear();
    for (const auto& id : flushed) evict(id);
  }
  check_tip_heights();
  return std::nullopt;
}

void Node::disconnect_tip() {
  if (active_.size() <= 1) throw ContractViolation("cannot disconnect genesis");
  auto undo = std::move(undo_.back());
  undo_.pop_back();
  if (undo.split) {
    splitter::unsplit(states_, *undo.split);
    mempools_.clear();
    for (const auto& s : states_.states()) mempools_.emplace_back(s.subchain());
  }
  chain::disconnect_composite(states_, undo.block);
  active_.pop_back();
  subchain_tip_heights_.assign(states_.states().size(), tip_height());
  ++stats_.blocks_disconnected;
  emit_disconnect_delta(undo.block);
}

void Node::rebuild_pools(std::vector<ledger::Transaction> txs, std::vector<xfer::Eigentransaction> etxs,
                         const std::set<Digest256>& previously_pending) {
  for (auto& m : mempools_) m.clear();
  eigenpool_.clear();
  const auto saved = stats_;
  for (const auto& tx : txs) (void)submit_tx(tx);
  for (const auto& etx : etxs) (void)submit_eigentx(etx);
  stats_ = saved;
  for (const auto& id : previously_pending) {
    bool present = eigenpool_.contains(id);
    for (const auto& m : mempools_) present = present || m.contains(id);
    if (!present) evict(id);
  }
}

void Node::evict(const Digest256& id) {
  if (on_evict) on_evict(id);
}

void Node::emit_connect_delta(const BlockEntry& entry, const chain::CompositeUndo& undo) {
  if (!on_delta) return;
  ChainDelta d;
  d.height = entry.height;
  auto add = [&](SubchainId sub, const OutPoint& op) {
    const auto* state = states_.find(sub);
    const auto* coin = state != nullptr ? state->find(op) : nullptr;
    if (coin != nullptr) d.added.push_back(CoinDelta{sub, op, *coin});
  };
  for (const auto& [sub, undos] : undo.txs) {
    for (const auto& u : undos) {
      for (const auto& op : u.created) add(sub, op);
    }
  }
  for (const auto& eu : undo.eigentxs) {
    for (const auto& [sub, op] : eu.created) add(sub, op);
  }
  for (const auto& [sub, op] : undo.imported) add(sub, op);
  if (undo.reward) add(undo.reward->first, undo.reward->second);
  d.removed = undo.spent;
  on_delta(d);
}

void Node::emit_disconnect_delta(const chain::CompositeUndo& undo) {
  if (!on_delta) return;
  ChainDelta d;
  d.height = tip_height();
  for (const auto& [sub, undos] : undo.txs) {
    for (const auto& u : undos) {
      for (const auto& op : u.created) d.removed.push_back(op);
      for (const auto& [op, coin] : u.spent) d.added.push_back(CoinDelta{sub, op, coin});
    }
  }
  for (const auto& eu : undo.eigentxs) {
    for (const auto& [sub, op] : eu.created) d.removed.push_back(op);
    for (const auto& [op, coin] : eu.spent) d.added.push_back(CoinDelta{eu.source, op, coin});
  }
  for (const auto& [sub, op] : undo.imported) d.removed.push_back(op);
  if (undo.reward) d.removed.push_back(undo.reward->second);
  on_delta(d);
}

}  // namespace splitscale::node
