#pragma once

#include <string>
#include <utility>
#include <vector>

#include "splitscale/chain.hpp"
#include "splitscale/node.hpp"

namespace splitscale::testing {

using crypto::KeyPair;
using crypto::SubchainId;
using ledger::OutPoint;
using ledger::Script;
using ledger::Transaction;
using ledger::TxOut;

inline Script p2pkh(const KeyPair& k) { return Script::p2pkh(k.address_hash()); }

/// First labelled key whose P2PKH script routes to `subchain` at `depth`.
inline KeyPair key_on(SubchainId subchain, unsigned depth, const std::string& tag) {
  for (int i = 0;; ++i) {
    auto k = KeyPair::from_label(tag + "/" + std::to_string(i));
    if (crypto::assign_subchain(p2pkh(k).hash(), depth) == subchain) return k;
  }
}

struct Spend {
  OutPoint outpoint;
  const KeyPair* key;
};

inline Transaction spend(const std::vector<Spend>& inputs, std::vector<TxOut> outputs, ledger::Height locktime = 0) {
  Transaction tx;
  std::vector<const KeyPair*> keys;
  for (const auto& s : inputs) {
    tx.inputs.push_back(ledger::TxIn{s.outpoint, {}, 0xffffffff});
    keys.push_back(s.key);
  }
  tx.outputs = std::move(outputs);
  tx.locktime = locktime;
  ledger::sign_inputs(tx, keys);
  return tx;
}

/// Consensus parameters with targets cheap enough to grind in tests.
inline chain::ConsensusParams easy_params() {
  chain::ConsensusParams p;
  p.initial_targets = {crypto::target_from_bits(2), crypto::target_from_bits(6)};
  p.subsidy.initial = 5'000;
  return p;
}

/// Genesis paying `value` to each script, in order.
inline chain::Genesis genesis_for(const std::vector<Script>& scripts, ledger::Amount value,
                                  chain::ConsensusParams& params) {
  std::vector<TxOut> outs;
  for (const auto& s : scripts) outs.push_back(TxOut{value, s});
  params.subsidy.genesis_supply = value * scripts.size();
  return chain::make_genesis(std::move(outs));
}

inline OutPoint genesis_outpoint(const chain::Genesis& g, std::uint32_t index) {
  return OutPoint{ledger::txid(g.allocation), index};
}

/// A miner node that extends its own chain one composite at a time.
class MinerHarness {
 public:
  MinerHarness(const chain::ConsensusParams& params, const chain::Genesis& genesis)
      : miner_(node::NodeConfig{"miner", node::Role::Miner, std::nullopt}, params, genesis),
        payout_key_(KeyPair::from_label("harness/payout")) {}

  std::shared_ptr<const chain::CompositeBlock> mine() {
    now_ += 600;
    auto cb = miner_.mine(now_, p2pkh(payout_key_), ++seed_ * 7919);
    auto r = miner_.receive_block(cb);
    if (r.status != node::BlockStatus::Connected) {
      throw std::runtime_error("harness block rejected: " + (r.error ? r.error->describe() : std::string("?")));
    }
    blocks_.push_back(cb);
    return cb;
  }
  void mine(int n) {
    for (int i = 0; i < n; ++i) mine();
  }

  node::Node& node() { return miner_; }
  const std::vector<std::shared_ptr<const chain::CompositeBlock>>& blocks() const { return blocks_; }
  const KeyPair& payout_key() const { return payout_key_; }

 private:
  node::Node miner_;
  KeyPair payout_key_;
  std::uint64_t now_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::shared_ptr<const chain::CompositeBlock>> blocks_;
};

}  // namespace splitscale::testing
