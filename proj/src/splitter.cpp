#include "splitscale/splitter.hpp"

#include <algorithm>

namespace splitscale::splitter {

namespace {

using BigInt = boost::multiprecision::cpp_int;

const BigInt& max_digest() {
  static const BigInt v = BigInt(crypto::to_u256(Digest256::max()));
  return v;
}

Digest256 digest_of(const BigInt& v) {
  if (v > max_digest()) return Digest256::max();
  return crypto::from_u256(crypto::U256(v));
}

}  // namespace

Result<Digest256, SplitError> compute_economic_cut(const ChainState& state) {
  std::vector<std::pair<Digest256, ledger::Amount>> points;
  for (const auto& [op, coin] : state.entries()) {
    if (!coin.pinned) points.emplace_back(coin.out.script_pubkey.hash(), coin.out.value);
  }
  if (points.empty()) return fail(SplitError::EmptyState);
  std::sort(points.begin(), points.end());

  BigInt total = 0;
  for (const auto& p : points) total += p.second;
  BigInt prefix = 0;
  if (total == 0) return Digest256{};
  for (const auto& [hash, value] : points) {
    prefix += value;
    if (prefix * 2 >= total) return digest_of(BigInt(crypto::to_u256(hash)) + 1);
  }
  return Digest256::max();
}

unsigned child_side(const Digest256& script_hash, PartitionMode mode, unsigned old_depth, const Digest256& cut) {
  if (mode == PartitionMode::Logical) return script_hash.bit(old_depth) ? 1 : 0;
  return script_hash >= cut ? 1 : 0;
}

std::pair<ChainState, ChainState> split_chainstate(const ChainState& state, PartitionMode mode, unsigned old_depth,
                                                   const Digest256& cut) {
  if (old_depth >= crypto::kMaxSplitDepth) throw ConfigError("split would exceed the maximum depth");
  const SubchainId even = state.subchain() * 2;
  std::pair<ChainState, ChainState> out{ChainState(even), ChainState(even + 1)};
  for (const auto& [op, coin] : state.entries()) {
    auto side = child_side(coin.out.script_pubkey.hash(), mode, old_depth, cut);
    (side == 0 ? out.first : out.second).insert(op, coin);
  }
  return out;
}

Partition split_partition(const Partition& old, PartitionMode mode, const std::vector<Digest256>& cuts) {
  if (old.depth >= crypto::kMaxSplitDepth) throw ConfigError("split would exceed the maximum depth");
  if (mode != old.mode && old.depth > 0) throw ConfigError("partition mode cannot change after the first split");
  Partition next;
  next.mode = mode;
  next.depth = old.depth + 1;
  if (mode == PartitionMode::Economic) {
    if (cuts.size() != old.subchain_count()) throw ContractViolation("one economic cut per sub-chain required");
    for (std::size_t s = 0; s < cuts.size(); ++s) {
      next.boundaries.push_back(cuts[s]);
      if (s < old.boundaries.size()) next.boundaries.push_back(old.boundaries[s]);
    }
  }
  return next;
}

Digest256 economic_cut_for(const Partition& old, SubchainId s, const ChainState& state) {
  const Digest256 lo = s == 0 ? Digest256{} : old.boundaries[s - 1];
  const Digest256 hi = s < old.boundaries.size() ? old.boundaries[s] : Digest256::max();
  auto cut = compute_economic_cut(state);
  if (!cut) {
    BigInt mid = (BigInt(crypto::to_u256(lo)) + BigInt(crypto::to_u256(hi))) / 2;
    return digest_of(mid);
  }
  return std::clamp(cut.value(), lo, hi);
}

std::vector<Digest256> split_mempool(const Mempool& pool, const ChainState& child0, const ChainState& child1,
                                     const Partition& partition, Height next_height, Mempool& out0, Mempool& out1,
                                     ledger::SigCache* sig_cache) {
  std::vector<Digest256> flushed;
  const ChainState* siblings[] = {&child0, &child1};
  for (const auto& [id, entry] : pool.entries()) {
    ledger::ValidationContext ctx{&partition, next_height, siblings, nullptr, sig_cache, &id};
    if (out0.accept(entry.tx, child0, ctx)) continue;
    if (out1.accept(entry.tx, child1, ctx)) continue;
    flushed.push_back(id);
  }
  return flushed;
}

SplitOutcome apply_split(ChainStateSet& states, std::vector<Mempool>& mempools, const SplitDirective& directive,
                         Height tip_height, const SplitScope& scope, ledger::SigCache* sig_cache) {
  const auto& old = states.partition();
  if (tip_height != directive.activation_height) throw ContractViolation("split directive applied at the wrong height");
  if (directive.new_depth != old.depth + 1) throw ContractViolation("split directive skips a depth");
  if (mempools.size() != states.states().size()) throw ContractViolation("one mempool per tracked chainstate required");
  const bool full = scope.all;
  if (full && !states.is_full()) throw ContractViolation("full split scope needs every chainstate");
  if (directive.mode == PartitionMode::Economic && !full) {
    throw ConfigError("economic splits need every chainstate");
  }

  std::vector<Digest256> cuts;
  if (directive.mode == PartitionMode::Economic) {
    for (const auto& s : states.states()) cuts.push_back(economic_cut_for(old, s.subchain(), s));
  }
  Partition next = split_partition(old, directive.mode, cuts);

  SplitOutcome outcome;
  outcome.undo.old_partition = old;
  std::vector<ChainState> children;
  std::vector<Mempool> pools;
  const Height next_height = tip_height + 1;
  auto tracked = states.states();
  for (std::size_t i = 0; i < tracked.size(); ++i) {
    const auto& parent = tracked[i];
    const Digest256 cut = cuts.empty() ? Digest256{} : cuts[parent.subchain()];
    auto [c0, c1] = split_chainstate(parent, directive.mode, old.depth, cut);
    Mempool m0(c0.subchain()), m1(c1.subchain());
    auto flushed = split_mempool(mempools[i], c0, c1, next, next_height, m0, m1, sig_cache);
    outcome.flushed.insert(outcome.flushed.end(), flushed.begin(), flushed.end());

    if (full) {
      children.push_back(std::move(c0));
      children.push_back(std::move(c1));
      pools.push_back(std::move(m0));
      pools.push_back(std::move(m1));
      continue;
    }
    bool keep_odd = false;
    if (scope.follow) {
      auto home = next.route(ledger::Script::p2pkh(*scope.follow).hash());
      keep_odd = home == c1.subchain();
    }
    const auto& dropped_pool = keep_odd ? m0 : m1;
    for (const auto& [id, entry] : dropped_pool.entries()) outcome.flushed.push_back(id);
    if (keep_odd) {
      outcome.undo.discarded.push_back(std::move(c0));
      children.push_back(std::move(c1));
      pools.push_back(std::move(m1));
    } else {
      outcome.undo.discarded.push_back(std::move(c1));
      children.push_back(std::move(c0));
      pools.push_back(std::move(m0));
    }
  }
  states.reset(std::move(next), std::move(children));
  mempools = std::move(pools);
  return outcome;
}

void unsplit(ChainStateSet& states, const SplitUndo& undo) {
  std::map<SubchainId, ChainState> parents;
  auto merge = [&](const ChainState& child) {
    auto id = child.subchain() / 2;
    auto [it, inserted] = parents.try_emplace(id, ChainState(id));
    for (const auto& [op, coin] : child.entries()) it->second.insert(op, coin);
  };
  for (const auto& s : states.states()) merge(s);
  for (const auto& s : undo.discarded) merge(s);
  std::vector<ChainState> out;
  for (auto& [id, s] : parents) out.push_back(std::move(s));
  states.reset(undo.old_partition, std::move(out));
}

}  // namespace splitscale::splitter
