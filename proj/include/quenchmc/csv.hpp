#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "quenchmc/errors.hpp"
#include "quenchmc/mcmc.hpp"

namespace quenchmc {

// Shortest decimal form that parses back to the same double.
inline std::string fmt_double(double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_csv: cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline constexpr const char* kChainCsvHeader = "step,state,energy,proposal,accepted";

// One row per step: row 0 is the initial state with the proposal set to the
// state itself and accepted = 1.
inline void write_chain_csv(const ChainRecord& rec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_chain_csv: cannot open " + path);
  out << kChainCsvHeader << '\n';
  for (const auto& s : rec.steps)
    out << s.step << ',' << s.state.str() << ',' << fmt_double(s.energy) << ','
        << s.proposal.str() << ',' << (s.accepted ? 1 : 0) << '\n';
  if (!out) throw IoError("write_chain_csv: write failed for " + path);
}

inline ChainRecord read_chain_csv(const std::string& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows.front().size() != 5)
    throw IoError("read_chain_csv: malformed header in " + path);
  ChainRecord rec;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 5) throw IoError("read_chain_csv: malformed row in " + path);
    ChainStep s;
    s.step = std::stoll(f[0]);
    s.state = BitString::parse(f[1]);
    s.energy = std::stod(f[2]);
    s.proposal = BitString::parse(f[3]);
    s.accepted = f[4] == "1";
    rec.steps.push_back(std::move(s));
  }
  return rec;
}

}  // namespace quenchmc
