#include <gtest/gtest.h>

#include "splitscale/xfer.hpp"
#include "support.hpp"

using namespace splitscale;
using namespace splitscale::testing;
using xfer::EigenError;
using xfer::XferError;

TEST(AllocateLegs, LargestFirst) {
  auto r = xfer::allocate_legs({{0, 4}, {1, 4}}, 6, 0);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.value(), (std::vector<xfer::LegAllocation>{{0, 4}, {1, 2}}));

  r = xfer::allocate_legs({{0, 4}, {1, 9}, {2, 1}}, 10, 0);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.value(), (std::vector<xfer::LegAllocation>{{1, 9}, {0, 1}}));

  EXPECT_EQ(xfer::allocate_legs({{0, 4}, {1, 4}}, 9, 0).error(), XferError::InsufficientTotalBalance);
  EXPECT_EQ(xfer::allocate_legs({}, 1, 0).error(), XferError::InsufficientTotalBalance);
  // Fees come out of each used balance.
  r = xfer::allocate_legs({{0, 5}, {1, 5}}, 6, 1);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.value(), (std::vector<xfer::LegAllocation>{{0, 4}, {1, 2}}));
}

namespace {

struct HtlcFixture {
  chain::ConsensusParams params = easy_params();
  KeyPair a0 = key_on(0, 1, "alice0"), a1 = key_on(1, 1, "alice1"), bob = key_on(1, 1, "bob");
  chain::Genesis genesis;

  HtlcFixture() {
    params.splits = {{1, ledger::PartitionMode::Logical}};
    genesis = genesis_for({p2pkh(a0), p2pkh(a1)}, 4'000, params);
  }

  std::vector<xfer::WalletCoin> coins(const node::Node& n) const {
    std::vector<xfer::WalletCoin> out;
    const KeyPair* keys[] = {&a0, &a1};
    for (std::uint32_t i = 0; i < 2; ++i) {
      auto op = genesis_outpoint(genesis, i);
      auto sub = n.partition().route(p2pkh(*keys[i]).hash());
      out.push_back({op, *n.states().find(sub)->find(op), sub, keys[i]});
    }
    return out;
  }
};

}  // namespace

TEST(Htlc, TwoLegPaymentClaimedWithPreimage) {
  HtlcFixture f;
  MinerHarness h(f.params, f.genesis);
  h.mine(1);
  auto& n = h.node();
  Bytes preimage(32, 0x42);
  auto plan = xfer::plan_htlc_payment(f.coins(n), {6'000, f.bob.address_hash(), 20, preimage, 10});
  ASSERT_TRUE(plan.ok());
  ASSERT_EQ(plan.value().legs.size(), 2u);
  ledger::Amount sum = 0;
  for (const auto& leg : plan.value().legs) {
    sum += leg.amount;
    ASSERT_TRUE(n.submit_tx(leg.tx).ok());
  }
  EXPECT_EQ(sum, 6'000u);
  EXPECT_EQ(plan.value().legs[1].timelock, 20u + xfer::kHtlcStagger);
  h.mine();

  for (const auto& leg : plan.value().legs) {
    const auto& out = leg.tx.outputs[0];
    EXPECT_EQ(xfer::claim_htlc_leg(leg.htlc_outpoint, out, Bytes(32, 0), f.bob, p2pkh(f.bob), 10).error(),
              XferError::WrongPreimage);
    EXPECT_EQ(xfer::claim_htlc_leg(leg.htlc_outpoint, out, preimage, f.a0, p2pkh(f.bob), 10).error(),
              XferError::WrongKey);
    auto claim = xfer::claim_htlc_leg(leg.htlc_outpoint, out, preimage, f.bob, p2pkh(f.bob), 10);
    ASSERT_TRUE(claim.ok());
    ASSERT_TRUE(n.submit_tx(claim.value()).ok());
  }
  h.mine();
  ledger::Amount bob_total = 0;
  for (const auto& s : n.states().states()) {
    for (const auto& [op, c] : s.entries()) {
      if (c.out.script_pubkey == p2pkh(f.bob)) bob_total += c.out.value;
    }
  }
  EXPECT_EQ(bob_total, 6'000u - 20);
}

TEST(Htlc, RefundOnlyAfterTimelock) {
  HtlcFixture f;
  MinerHarness h(f.params, f.genesis);
  h.mine(1);
  auto& n = h.node();
  auto plan = xfer::plan_htlc_payment(f.coins(n), {3'000, f.bob.address_hash(), 5, Bytes(32, 7), 10});
  ASSERT_TRUE(plan.ok());
  const auto& leg = plan.value().legs[0];
  ASSERT_TRUE(n.submit_tx(leg.tx).ok());
  h.mine();
  const auto* sender = leg.subchain == 0 ? &f.a0 : &f.a1;
  EXPECT_EQ(xfer::refund_htlc_leg(leg.htlc_outpoint, leg.tx.outputs[0], *sender, 4, p2pkh(*sender), 10).error(),
            XferError::TimelockNotExpired);
  EXPECT_EQ(xfer::refund_htlc_leg(leg.htlc_outpoint, leg.tx.outputs[0], f.bob, 5, p2pkh(f.bob), 10).error(),
            XferError::WrongKey);
  EXPECT_EQ(xfer::claim_htlc_leg(OutPoint{}, TxOut{1, p2pkh(f.bob)}, Bytes(32, 7), f.bob, p2pkh(f.bob), 0).error(),
            XferError::NotHtlc);

  h.mine(5 - static_cast<int>(n.tip_height()) - 1);
  ASSERT_EQ(n.tip_height() + 1, 5u);
  auto refund = xfer::refund_htlc_leg(leg.htlc_outpoint, leg.tx.outputs[0], *sender, 5, p2pkh(*sender), 10);
  ASSERT_TRUE(refund.ok());
  ASSERT_TRUE(n.submit_tx(refund.value()).ok());
  h.mine();
  EXPECT_TRUE(n.states().find(leg.subchain)->contains(OutPoint{ledger::txid(refund.value()), 0}));
}

TEST(Htlc, InsufficientBalance) {
  HtlcFixture f;
  MinerHarness h(f.params, f.genesis);
  h.mine(1);
  auto r = xfer::plan_htlc_payment(f.coins(h.node()), {9'000, f.bob.address_hash(), 5, Bytes(32, 1), 10});
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.error(), XferError::InsufficientTotalBalance);
}

namespace {

struct EigenFixture {
  chain::ConsensusParams params = easy_params();
  KeyPair owner = key_on(0, 1, "owner");
  chain::Genesis genesis;
  OutPoint coin;

  EigenFixture() {
    params.splits = {{1, ledger::PartitionMode::Logical}};
    params.eigentx_window = xfer::EigenWindow{2, 6};
    genesis = genesis_for({p2pkh(owner)}, 5'000, params);
    coin = genesis_outpoint(genesis, 0);
  }
};

}  // namespace

TEST(Eigentx, MovesValueAndPaysFeeToReward) {
  EigenFixture f;
  MinerHarness h(f.params, f.genesis);
  h.mine(1);
  auto& n = h.node();
  auto etx = xfer::make_eigentx(f.owner, 0, 1, 3'000, {f.coin});
  ASSERT_TRUE(n.submit_eigentx(etx).ok());
  auto supply = n.states().total_value();
  auto cb = h.mine();
  ASSERT_EQ(cb->eigen.eigentxs.size(), 1u);
  EXPECT_EQ(cb->eigen.reward.amount, f.params.subsidy.at(2) + xfer::kEigenFee);
  auto id = xfer::eigentx_id(etx);
  const auto* dest = n.states().find(1)->find(OutPoint{id, 0});
  ASSERT_NE(dest, nullptr);
  EXPECT_EQ(dest->out.value, 3'000u);
  EXPECT_TRUE(dest->pinned);
  const auto* change = n.states().find(0)->find(OutPoint{id, 1});
  ASSERT_NE(change, nullptr);
  EXPECT_EQ(change->out.value, 5'000u - 3'000 - xfer::kEigenFee);
  EXPECT_FALSE(n.states().find(0)->contains(f.coin));
  EXPECT_EQ(n.states().total_value(), supply + f.params.subsidy.at(2));
  EXPECT_TRUE(ledger::audit_partition(n.states()).empty());
}

TEST(Eigentx, Rejections) {
  EigenFixture f;
  MinerHarness h(f.params, f.genesis);
  h.mine(1);
  const auto& states = h.node().states();
  xfer::EigenCheckContext ctx{2, f.params.eigentx_window, nullptr};
  auto check = [&](const xfer::Eigentransaction& e, xfer::EigenCheckContext c) {
    auto s = xfer::check_eigentx(e, states, c);
    return s ? std::optional<EigenError>{} : std::optional<EigenError>{s.error()};
  };
  auto good = xfer::make_eigentx(f.owner, 0, 1, 1'000, {f.coin});
  EXPECT_EQ(check(good, ctx), std::nullopt);

  auto late = ctx;
  late.height = 7;
  EXPECT_EQ(check(good, late), EigenError::WindowClosed);
  auto early = ctx;
  early.height = 1;
  EXPECT_EQ(check(good, early), EigenError::WindowClosed);

  EXPECT_EQ(check(xfer::make_eigentx(f.owner, 0, 0, 1'000, {f.coin}), ctx), EigenError::SameSubchain);
  EXPECT_EQ(check(xfer::make_eigentx(f.owner, 0, 1, 4'901, {f.coin}), ctx), EigenError::InsufficientValue);
  EXPECT_EQ(check(xfer::make_eigentx(f.owner, 0, 1, 1, {OutPoint{}}), ctx), EigenError::MissingUtxo);
  auto stranger = KeyPair::from_label("stranger");
  EXPECT_EQ(check(xfer::make_eigentx(stranger, 0, 1, 1, {f.coin}), ctx), EigenError::AddressMismatch);

  auto forged = good;
  forged.amount += 1;
  EXPECT_EQ(check(forged, ctx), EigenError::BadSignature);

  std::set<OutPoint> spent{f.coin};
  auto conflict = ctx;
  conflict.spent_in_block = &spent;
  EXPECT_EQ(check(good, conflict), EigenError::ConflictingSpend);

  auto bytes = xfer::serialize_eigentx(good);
  ByteReader r(bytes);
  EXPECT_EQ(xfer::read_eigentx(r), good);
}

TEST(Eigentx, ApplyRevertIdentity) {
  EigenFixture f;
  MinerHarness h(f.params, f.genesis);
  h.mine(1);
  auto states = h.node().states();
  const auto before = states;
  auto etx = xfer::make_eigentx(f.owner, 0, 1, 1'000, {f.coin});
  auto undo = xfer::apply_eigentx(states, etx, xfer::eigentx_id(etx), 2);
  EXPECT_NE(states, before);
  xfer::revert_eigentx(states, undo);
  EXPECT_EQ(states, before);
}

TEST(Eigenpool, ConflictsAndOrder) {
  EigenFixture f;
  MinerHarness h(f.params, f.genesis);
  h.mine(1);
  xfer::EigenCheckContext ctx{2, f.params.eigentx_window, nullptr};
  xfer::Eigenpool pool;
  auto a = xfer::make_eigentx(f.owner, 0, 1, 1'000, {f.coin});
  auto b = xfer::make_eigentx(f.owner, 0, 1, 2'000, {f.coin});
  ASSERT_TRUE(pool.accept(a, h.node().states(), ctx).ok());
  EXPECT_EQ(pool.accept(a, h.node().states(), ctx).error(), EigenError::ConflictingSpend);
  EXPECT_EQ(pool.accept(b, h.node().states(), ctx).error(), EigenError::ConflictingSpend);
  EXPECT_EQ(pool.select(10).size(), 1u);
  std::vector<OutPoint> spent{f.coin};
  EXPECT_EQ(pool.remove_spenders(spent).size(), 1u);
  EXPECT_EQ(pool.size(), 0u);
}
