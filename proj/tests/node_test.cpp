#include <gtest/gtest.h>

#include "support.hpp"

using namespace splitscale;
using namespace splitscale::testing;
using node::BlockPayload;
using node::BlockStatus;

namespace {

struct Net {
  chain::ConsensusParams params = easy_params();
  std::vector<KeyPair> keys;
  chain::Genesis genesis;

  explicit Net(std::vector<chain::SplitEvent> splits = {}) {
    params.splits = std::move(splits);
    std::vector<Script> scripts;
    for (int i = 0; i < 4; ++i) {
      keys.push_back(key_on(i % 2, 1, "net" + std::to_string(i)));
      scripts.push_back(p2pkh(keys.back()));
    }
    genesis = genesis_for(scripts, 10'000, params);
  }

  std::unique_ptr<node::Node> make(const std::string& name, node::Role role,
                                   std::optional<crypto::AddressHash> follow = std::nullopt) const {
    return std::make_unique<node::Node>(node::NodeConfig{name, role, follow}, params, genesis);
  }
};

std::shared_ptr<const chain::CompositeBlock> mine_on(node::Node& n, std::uint64_t ts, const KeyPair& payout,
                                                     std::uint64_t seed) {
  auto cb = n.mine(ts, p2pkh(payout), seed);
  EXPECT_EQ(n.receive_block(cb).status, BlockStatus::Connected);
  return cb;
}

}  // namespace

TEST(Node, ReorgToHeavierBranchRestoresTransactions) {
  Net net;
  auto a = net.make("a", node::Role::Miner);
  auto b = net.make("b", node::Role::Miner);
  auto tx = spend({{genesis_outpoint(net.genesis, 0), &net.keys[0]}}, {{9'000, p2pkh(net.keys[1])}});
  ASSERT_TRUE(a->submit_tx(tx).ok());
  mine_on(*a, 600, net.keys[0], 1);
  mine_on(*a, 1200, net.keys[0], 2);
  EXPECT_TRUE(a->states().find(0)->contains(OutPoint{ledger::txid(tx), 0}));

  std::vector<std::shared_ptr<const chain::CompositeBlock>> side;
  for (int i = 0; i < 3; ++i) side.push_back(mine_on(*b, 600 * (i + 1) + 1, net.keys[2], 100 + i));

  std::vector<ledger::Height> heights;
  a->on_delta = [&](const node::ChainDelta& d) { heights.push_back(d.height); };
  EXPECT_EQ(a->receive_block(side[0]).status, BlockStatus::Stored);
  EXPECT_EQ(a->receive_block(side[1]).status, BlockStatus::Stored);
  auto r = a->receive_block(side[2]);
  EXPECT_EQ(r.status, BlockStatus::Connected);
  EXPECT_EQ(r.connected.size(), 3u);
  EXPECT_EQ(a->tip().hash, side[2]->hash());
  EXPECT_EQ(a->stats().reorgs, 1u);
  EXPECT_EQ(a->stats().max_reorg_depth, 2u);
  EXPECT_EQ(a->export_chainstate(), b->export_chainstate());
  EXPECT_EQ(a->export_digest(), b->export_digest());
  // The reorged-out payment is pending again.
  EXPECT_TRUE(a->mempool(0)->contains(ledger::txid(tx)));
  EXPECT_EQ(heights, (std::vector<ledger::Height>{1, 0, 1, 2, 3}));
  EXPECT_EQ(a->receive_block(side[2]).status, BlockStatus::Duplicate);
  a->check_tip_heights();
}

TEST(Node, OrphansConnectWhenParentArrives) {
  Net net;
  auto a = net.make("a", node::Role::Miner);
  auto c = net.make("c", node::Role::Full);
  auto b1 = mine_on(*a, 600, net.keys[0], 1);
  auto b2 = mine_on(*a, 1200, net.keys[0], 2);
  auto r = c->receive_block(b2);
  EXPECT_EQ(r.status, BlockStatus::Orphan);
  ASSERT_TRUE(r.missing_parent);
  EXPECT_EQ(*r.missing_parent, b1->hash());
  r = c->receive_block(b1);
  EXPECT_EQ(r.status, BlockStatus::Connected);
  EXPECT_EQ(r.connected.size(), 2u);
  EXPECT_EQ(c->tip_height(), 2u);
}

TEST(Node, InvalidBlockAndDescendantsRejected) {
  Net net;
  auto a = net.make("a", node::Role::Miner);
  auto c = net.make("c", node::Role::Full);
  auto tx = spend({{genesis_outpoint(net.genesis, 0), &net.keys[0]}}, {{9'000, p2pkh(net.keys[1])}});
  ASSERT_TRUE(a->submit_tx(tx).ok());
  auto good = a->mine(600, p2pkh(net.keys[0]), 1);
  // Inflate the payment output; re-grind so only the value rule can fail.
  auto bad = std::make_shared<chain::CompositeBlock>(*good);
  bad->subblocks[0].txs[1].outputs[0].value = 20'000;
  auto& sb = bad->subblocks[0];
  sb.header.payload_root = chain::subblock_payload_root(sb);
  chain::grind(sb.header, 0);
  bad->eigen.subchain_header_hashes[0] = sb.header.hash();
  bad->eigen.header.payload_root = chain::eigen_payload_root(bad->eigen);
  chain::grind(bad->eigen.header, 0);
  auto r = c->receive_block(bad);
  EXPECT_EQ(r.status, BlockStatus::Invalid);
  ASSERT_TRUE(r.error);
  EXPECT_EQ(r.error->code, chain::BlockErrorCode::BadTx);
  EXPECT_EQ(c->tip_height(), 0u);
  EXPECT_EQ(c->receive_block(good).status, BlockStatus::Connected);
}

TEST(Node, HalfNodeTracksOneSubchainAndMatchesFullNode) {
  Net net({{1, ledger::PartitionMode::Logical}});
  auto miner = net.make("m", node::Role::Miner);
  auto full = net.make("f", node::Role::Full);
  auto follow = net.keys[1].address_hash();
  auto half = net.make("h", node::Role::Half, follow);
  const auto home = crypto::assign_subchain(p2pkh(net.keys[1]).hash(), 1);

  // keys[0] (sub-chain 0) pays keys[1] (sub-chain 1): the half node learns of
  // the output through the import list of its subblock.
  for (int h = 1; h <= 4; ++h) {
    if (h == 2) {
      auto tx = spend({{genesis_outpoint(net.genesis, 0), &net.keys[0]}}, {{9'500, p2pkh(net.keys[1])}});
      ASSERT_TRUE(miner->submit_tx(tx).ok());
    }
    auto cb = mine_on(*miner, 600 * h, net.keys[2], h);
    ASSERT_EQ(full->receive_block(cb).status, BlockStatus::Connected);
    auto idx = half->tracked_subchain();
    ASSERT_TRUE(idx);
    auto slice = BlockPayload::slice(cb, cb->subblocks.size() == 1 ? 0 : *idx);
    ASSERT_EQ(half->receive(slice).status, BlockStatus::Connected);
  }
  ASSERT_EQ(half->states().states().size(), 1u);
  EXPECT_EQ(half->states().states()[0].subchain(), home);
  EXPECT_EQ(half->states().states()[0], *full->states().find(home));
  half->check_tip_heights();

  // A tampered subblock no longer matches the eigen header's cross-reference.
  auto cb = miner->mine(600 * 5, p2pkh(net.keys[2]), 5);
  auto sub = std::make_shared<chain::SubchainBlock>(cb->subblocks[home]);
  sub->txs[0].locktime ^= 1;
  auto eigen = std::make_shared<const chain::EigenBlock>(cb->eigen);
  auto r = half->receive_block_n(eigen, sub);
  EXPECT_EQ(r.status, BlockStatus::Invalid);
  EXPECT_EQ(half->tip_height(), 4u);
  auto ok = half->receive(BlockPayload::slice(cb, home));
  EXPECT_EQ(ok.status, BlockStatus::Connected);
}

TEST(Node, SubmitTxRejectsWrongRoutesAndConflicts) {
  Net net({{1, ledger::PartitionMode::Logical}});
  auto miner = net.make("m", node::Role::Miner);
  mine_on(*miner, 600, net.keys[0], 1);
  auto tx = spend({{genesis_outpoint(net.genesis, 0), &net.keys[0]}}, {{9'000, p2pkh(net.keys[0])}});
  auto r = miner->submit_tx(tx);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.value(), 0u);
  auto dup = spend({{genesis_outpoint(net.genesis, 0), &net.keys[0]}}, {{8'000, p2pkh(net.keys[0])}});
  EXPECT_FALSE(miner->submit_tx(dup).ok());
  auto etx = xfer::make_eigentx(net.keys[0], 0, 1, 100, {genesis_outpoint(net.genesis, 0)});
  EXPECT_FALSE(miner->submit_eigentx(etx).ok());
  EXPECT_EQ(miner->stats().txs_accepted, 1u);
}

TEST(Node, ReorgAcrossSplitUnsplitsState) {
  Net net({{2, ledger::PartitionMode::Logical}});
  auto a = net.make("a", node::Role::Miner);
  auto b = net.make("b", node::Role::Miner);
  for (int h = 1; h <= 3; ++h) mine_on(*a, 600 * h, net.keys[0], h);
  ASSERT_EQ(a->partition().depth, 1u);
  std::vector<std::shared_ptr<const chain::CompositeBlock>> side;
  side.push_back(mine_on(*b, 601, net.keys[3], 50));
  ASSERT_EQ(a->receive_block(side[0]).status, BlockStatus::Stored);
  for (int h = 2; h <= 5; ++h) {
    side.push_back(mine_on(*b, 600 * h + 1, net.keys[3], 50 + h));
    a->receive_block(side.back());
  }
  EXPECT_EQ(a->tip().hash, side.back()->hash());
  EXPECT_EQ(a->export_digest(), b->export_digest());
  a->check_tip_heights();
}
