#include "splitscale/chainstate_export.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace splitscale::ledger {

namespace {

std::string flags_of(const Coin& c) {
  std::string f;
  if (c.coinbase) f.push_back('c');
  if (c.pinned) f.push_back('p');
  return f.empty() ? "-" : f;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

template <class T>
T parse_uint(const std::string& s, std::size_t line_no) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw DecodeError("line " + std::to_string(line_no) + ": expected unsigned integer, got '" + s + "'");
  }
  return v;
}

std::string value_after(const std::string& tok, std::string_view key, std::size_t line_no) {
  if (tok.rfind(key, 0) != 0 || tok.size() <= key.size() || tok[key.size()] != '=') {
    throw DecodeError("line " + std::to_string(line_no) + ": expected " + std::string(key) + "=<value>");
  }
  return tok.substr(key.size() + 1);
}

}  // namespace

void write_export(std::ostream& os, const ExportHeader& header, const ChainStateSet& states) {
  const auto& p = states.partition();
  os << "splitscale-chainstate v1\n";
  os << "depth " << p.depth << "\n";
  os << "mode " << to_string(p.mode) << "\n";
  if (p.mode == PartitionMode::Economic) {
    os << "boundaries";
    for (const auto& b : p.boundaries) os << ' ' << b.hex();
    os << "\n";
  }
  os << "height " << header.height << "\n";
  os << "subsidy genesis=" << header.subsidy.genesis_supply << " initial=" << header.subsidy.initial
     << " halving=" << header.subsidy.halving_interval << "\n";
  os << "scope " << (header.full ? "full" : "half") << "\n";
  for (const auto& state : states.states()) {
    os << "chainstate " << state.subchain() << ' ' << state.size() << "\n";
    for (const auto& [op, coin] : state.entries()) {
      os << op.txid.hex() << ' ' << op.index << ' ' << coin.out.value << ' ' << to_hex(coin.out.script_pubkey.bytes())
         << ' ' << coin.height << ' ' << flags_of(coin) << "\n";
    }
  }
  os << "end\n";
}

std::string export_string(const ExportHeader& header, const ChainStateSet& states) {
  std::ostringstream os;
  write_export(os, header, states);
  return os.str();
}

Digest256 export_digest(const ExportHeader& header, const ChainStateSet& states) {
  return crypto::double_sha256(as_bytes(export_string(header, states)));
}

ParsedExport read_export(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> std::vector<std::string> {
    if (!std::getline(is, line)) throw DecodeError("unexpected end of export after line " + std::to_string(line_no));
    ++line_no;
    return split_ws(line);
  };
  auto expect_key = [&](const std::vector<std::string>& toks, std::string_view key, std::size_t arity) {
    if (toks.empty() || toks[0] != key || (arity != 0 && toks.size() != arity)) {
      throw DecodeError("line " + std::to_string(line_no) + ": expected '" + std::string(key) + "'");
    }
  };

  ParsedExport out;
  auto toks = next();
  if (toks.size() != 2 || toks[0] != "splitscale-chainstate" || toks[1] != "v1") {
    throw DecodeError("line 1: not a splitscale chainstate export");
  }
  Partition partition;
  toks = next();
  expect_key(toks, "depth", 2);
  partition.depth = parse_uint<unsigned>(toks[1], line_no);
  if (partition.depth > crypto::kMaxSplitDepth) throw DecodeError("line " + std::to_string(line_no) + ": depth too large");
  toks = next();
  expect_key(toks, "mode", 2);
  auto mode = parse_partition_mode(toks[1]);
  if (!mode) throw DecodeError("line " + std::to_string(line_no) + ": unknown partition mode");
  partition.mode = *mode;
  toks = next();
  if (partition.mode == PartitionMode::Economic) {
    expect_key(toks, "boundaries", 0);
    for (std::size_t i = 1; i < toks.size(); ++i) partition.boundaries.push_back(Digest256::from_hex(toks[i]));
    if (partition.boundaries.size() + 1 != partition.subchain_count()) {
      throw DecodeError("line " + std::to_string(line_no) + ": wrong boundary count");
    }
    toks = next();
  }
  expect_key(toks, "height", 2);
  out.header.height = parse_uint<Height>(toks[1], line_no);
  toks = next();
  expect_key(toks, "subsidy", 4);
  out.header.subsidy.genesis_supply = parse_uint<Amount>(value_after(toks[1], "genesis", line_no), line_no);
  out.header.subsidy.initial = parse_uint<Amount>(value_after(toks[2], "initial", line_no), line_no);
  out.header.subsidy.halving_interval = parse_uint<Height>(value_after(toks[3], "halving", line_no), line_no);
  toks = next();
  expect_key(toks, "scope", 2);
  if (toks[1] != "full" && toks[1] != "half") throw DecodeError("line " + std::to_string(line_no) + ": bad scope");
  out.header.full = toks[1] == "full";
  out.header.partition = partition;

  std::vector<ChainState> states;
  while (true) {
    toks = next();
    if (toks.size() == 1 && toks[0] == "end") break;
    expect_key(toks, "chainstate", 3);
    ChainState state(parse_uint<SubchainId>(toks[1], line_no));
    auto count = parse_uint<std::size_t>(toks[2], line_no);
    std::optional<OutPoint> prev;
    for (std::size_t i = 0; i < count; ++i) {
      toks = next();
      if (toks.size() != 6) throw DecodeError("line " + std::to_string(line_no) + ": entry needs 6 fields");
      OutPoint op{Digest256::from_hex(toks[0]), parse_uint<std::uint32_t>(toks[1], line_no)};
      if (prev && !(*prev < op)) throw DecodeError("line " + std::to_string(line_no) + ": entries not sorted");
      prev = op;
      Coin coin;
      coin.out.value = parse_uint<Amount>(toks[2], line_no);
      coin.out.script_pubkey = Script::parse(from_hex(toks[3]));
      coin.height = parse_uint<Height>(toks[4], line_no);
      const auto& f = toks[5];
      if (f != "-" && f != "c" && f != "p" && f != "cp") {
        throw DecodeError("line " + std::to_string(line_no) + ": bad flags '" + f + "'");
      }
      coin.coinbase = f.find('c') != std::string::npos;
      coin.pinned = f.find('p') != std::string::npos;
      state.insert(op, std::move(coin));
    }
    states.push_back(std::move(state));
  }
  out.states.reset(partition, std::move(states));
  return out;
}

AuditReport audit_export(const ParsedExport& exported) {
  AuditReport report;
  report.problems = audit_partition(exported.states);
  report.total_value = exported.states.total_value();
  if (exported.header.full) {
    if (!exported.states.is_full()) report.problems.push_back("full-scope export is missing chainstates");
    report.expected_value = exported.header.subsidy.issued_through(exported.header.height);
    if (report.total_value != report.expected_value) {
      report.problems.push_back("supply mismatch: UTXO total " + std::to_string(report.total_value) +
                                " != issued " + std::to_string(report.expected_value));
    }
  }
  return report;
}

}  // namespace splitscale::ledger
