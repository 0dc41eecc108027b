#include "qsel/population.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "qsel/errors.hpp"

namespace qsel {

SellerPopulation::SellerPopulation(std::vector<Atom> atoms, std::vector<IndexSet> blocks,
                                   std::optional<double> x_max)
    : atoms_(std::move(atoms)), blocks_(std::move(blocks)) {
  std::vector<std::string> problems;
  if (atoms_.empty()) problems.emplace_back("sellers.atoms: at least one atom is required");
  double top = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    const auto& a = atoms_[i];
    if (!(std::isfinite(a.quality) && a.quality >= 0.0)) {
      problems.push_back("sellers.atoms[" + std::to_string(i) + "].quality must be >= 0");
    }
    if (!(std::isfinite(a.mass) && a.mass > 0.0)) {
      problems.push_back("sellers.atoms[" + std::to_string(i) + "].mass must be > 0");
    }
    if (std::isfinite(a.quality)) top = std::max(top, a.quality);
  }
  x_max_ = x_max.value_or(top);
  if (!(x_max_ > 0.0)) problems.emplace_back("sellers.x_max must be > 0");
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (atoms_[i].quality > x_max_) {
      problems.push_back("sellers.atoms[" + std::to_string(i) + "].quality exceeds x_max");
    }
  }

  if (blocks_.empty()) problems.emplace_back("sellers.blocks: at least one block is required");
  std::vector<int> owner(atoms_.size(), -1);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (blocks_[b].empty()) {
      problems.push_back("sellers.blocks[" + std::to_string(b) + "] is empty");
    }
    for (std::size_t pos = 0; pos < blocks_[b].size(); ++pos) {
      const std::size_t idx = blocks_[b][pos];
      const std::string where =
          "sellers.blocks[" + std::to_string(b) + "][" + std::to_string(pos) + "]";
      if (idx >= atoms_.size()) {
        problems.push_back(where + ": atom index " + std::to_string(idx) + " out of range (" +
                           std::to_string(atoms_.size()) + " atoms)");
        continue;
      }
      if (owner[idx] >= 0) {
        problems.push_back(where + ": atom index " + std::to_string(idx) +
                           " already belongs to block " + std::to_string(owner[idx]));
        continue;
      }
      owner[idx] = static_cast<int>(b);
    }
    std::sort(blocks_[b].begin(), blocks_[b].end());
  }
  for (std::size_t i = 0; i < owner.size(); ++i) {
    if (owner[i] < 0) problems.push_back("sellers.atoms[" + std::to_string(i) + "] is in no block");
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

double SellerPopulation::block_mass(std::size_t block) const {
  double s = 0.0;
  for (std::size_t i : blocks_.at(block)) s += atoms_[i].mass;
  return s;
}

IndexSet SellerPopulation::atoms_of_blocks(std::span<const std::size_t> block_indices) const {
  IndexSet out;
  for (std::size_t b : block_indices) {
    const auto& blk = blocks_.at(b);
    out.insert(out.end(), blk.begin(), blk.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

InformationStructure InformationStructure::canonical() const {
  InformationStructure out = *this;
  for (auto& g : out.groups) std::sort(g.begin(), g.end());
  std::sort(out.groups.begin(), out.groups.end(), [](const IndexSet& l, const IndexSet& r) {
    if (l.empty() || r.empty()) return l.size() < r.size();
    return l.front() < r.front();
  });
  return out;
}

void InformationStructure::validate(std::size_t block_count) const {
  if (groups.empty()) throw DomainError("information structure has no groups");
  std::vector<bool> seen(block_count, false);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw DomainError("group " + std::to_string(g + 1) + " is empty");
    for (std::size_t b : groups[g]) {
      if (b >= block_count) {
        throw DomainError("block A" + std::to_string(b + 1) + " does not exist (" +
                          std::to_string(block_count) + " blocks)");
      }
      if (seen[b]) throw DomainError("block A" + std::to_string(b + 1) + " appears in two groups");
      seen[b] = true;
    }
  }
}

IndexSet InformationStructure::banned_blocks(std::size_t block_count) const {
  std::vector<bool> used(block_count, false);
  for (const auto& g : groups)
    for (std::size_t b : g)
      if (b < block_count) used[b] = true;
  IndexSet out;
  for (std::size_t b = 0; b < block_count; ++b)
    if (!used[b]) out.push_back(b);
  return out;
}

std::string InformationStructure::label() const {
  std::string out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g > 0) out += '|';
    out += '{';
    for (std::size_t i = 0; i < groups[g].size(); ++i) {
      if (i > 0) out += ',';
      out += 'A' + std::to_string(groups[g][i] + 1);
    }
    out += '}';
  }
  return out;
}

InformationStructure InformationStructure::parse(std::string_view text, std::size_t block_count) {
  InformationStructure s;
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  auto fail = [&](const std::string& what) {
    throw DomainError("cannot parse structure \"" + std::string(text) + "\" at offset " +
                      std::to_string(pos) + ": " + what);
  };
  skip_ws();
  while (pos < text.size()) {
    if (text[pos] != '{') fail("expected '{'");
    ++pos;
    IndexSet group;
    for (;;) {
      skip_ws();
      if (pos < text.size() && (text[pos] == 'A' || text[pos] == 'a')) ++pos;
      std::size_t start = pos;
      while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
      if (start == pos) fail("expected a block name like A1");
      const std::size_t n = std::stoul(std::string(text.substr(start, pos - start)));
      if (n == 0) fail("block names are 1-based");
      group.push_back(n - 1);
      skip_ws();
      if (pos < text.size() && text[pos] == ',') {
        ++pos;
        continue;
      }
      if (pos < text.size() && text[pos] == '}') {
        ++pos;
        break;
      }
      fail("expected ',' or '}'");
    }
    s.groups.push_back(std::move(group));
    skip_ws();
    if (pos < text.size()) {
      if (text[pos] != '|') fail("expected '|'");
      ++pos;
      skip_ws();
    }
  }
  s.validate(block_count);
  return s.canonical();
}

double conditional_mean(const SellerPopulation& pop, std::span<const std::size_t> atom_set,
                        std::span<const double> weights) {
  if (!weights.empty() && weights.size() != pop.atom_count()) {
    throw DomainError("weights must have one entry per atom");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i : atom_set) {
    const Atom& a = pop.atoms().at(i);
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w < 0.0) throw DomainError("weights must be nonnegative");
    num += a.quality * w * a.mass;
    den += w * a.mass;
  }
  if (!(den > 0.0)) throw DomainError("empty-support: zero total weighted mass");
  return num / den;
}

std::uint64_t structure_count(std::size_t blocks) {
  // Bell triangle up to Bell(blocks + 1); the sum equals Bell(l + 1) - 1.
  std::vector<std::uint64_t> row{1};
  for (std::size_t n = 1; n <= blocks + 1; ++n) {
    std::vector<std::uint64_t> next{row.back()};
    for (std::uint64_t v : row) next.push_back(next.back() + v);
    row = std::move(next);
  }
  return row.front() - 1;
}

namespace {

// All set partitions of `items` as restricted growth strings.
void partitions_of(const IndexSet& items, std::vector<InformationStructure>& out) {
  const std::size_t n = items.size();
  std::vector<std::size_t> rgs(n, 0);
  std::vector<std::size_t> maxima(n, 0);
  std::vector<InformationStructure> found;
  for (;;) {
    std::size_t groups = 0;
    for (std::size_t v : rgs) groups = std::max(groups, v + 1);
    InformationStructure s;
    s.groups.resize(groups);
    for (std::size_t i = 0; i < n; ++i) s.groups[rgs[i]].push_back(items[i]);
    found.push_back(std::move(s));
    // Advance to the next restricted growth string.
    bool advanced = false;
    for (std::size_t i = n; i-- > 1;) {
      if (rgs[i] <= maxima[i - 1]) {
        ++rgs[i];
        maxima[i] = std::max(maxima[i - 1], rgs[i]);
        for (std::size_t j = i + 1; j < n; ++j) {
          rgs[j] = 0;
          maxima[j] = maxima[i];
        }
        advanced = true;
        break;
      }
    }
    if (!advanced) break;
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const InformationStructure& l, const InformationStructure& r) {
                     if (l.group_count() != r.group_count()) return l.group_count() > r.group_count();
                     return l.groups < r.groups;
                   });
  for (auto& s : found) out.push_back(std::move(s));
}

}  // namespace

std::vector<InformationStructure> enumerate_structures(std::size_t block_count, std::size_t cap) {
  if (block_count > cap) {
    std::ostringstream os;
    os << block_count << " blocks exceed the enumeration cap of " << cap << "; enumeration would produce "
       << structure_count(block_count) << " structures";
    throw DomainError(os.str());
  }
  if (block_count == 0) return {};
  std::vector<InformationStructure> out;
  out.reserve(structure_count(block_count));
  const std::uint64_t full = (std::uint64_t{1} << block_count);
  for (std::uint64_t mask = 1; mask < full; ++mask) {
    IndexSet items;
    for (std::size_t b = 0; b < block_count; ++b)
      if (mask & (std::uint64_t{1} << b)) items.push_back(b);
    partitions_of(items, out);
  }
  return out;
}

std::vector<InformationStructure> enumerate_structures(const SellerPopulation& pop, std::size_t cap) {
  return enumerate_structures(pop.block_count(), cap);
}

}  // namespace qsel
