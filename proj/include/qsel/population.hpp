#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qsel {

struct Atom {
  double quality = 0.0;
  double mass = 0.0;
};

using IndexSet = std::vector<std::size_t>;

/// Atomic seller-quality measure together with the platform's partition of
/// the atoms into blocks A_1..A_l.
class SellerPopulation {
 public:
  /// Throws ValidationError listing every violated invariant. `x_max`
  /// defaults to the largest atom quality.
  SellerPopulation(std::vector<Atom> atoms, std::vector<IndexSet> blocks,
                   std::optional<double> x_max = std::nullopt);

  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  const std::vector<IndexSet>& blocks() const noexcept { return blocks_; }
  std::size_t atom_count() const noexcept { return atoms_.size(); }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  double x_max() const noexcept { return x_max_; }
  double block_mass(std::size_t block) const;

  /// Atom indices of the union of the given blocks, ascending.
  IndexSet atoms_of_blocks(std::span<const std::size_t> block_indices) const;

 private:
  std::vector<Atom> atoms_;
  std::vector<IndexSet> blocks_;
  double x_max_ = 0.0;
};

/// Disjoint groups, each a union of blocks. Blocks in no group are banned.
/// Canonical form: block indices ascending inside each group, groups ordered
/// by their smallest block.
struct InformationStructure {
  std::vector<IndexSet> groups;

  std::size_t group_count() const noexcept { return groups.size(); }
  bool operator==(const InformationStructure&) const = default;

  InformationStructure canonical() const;
  /// Throws DomainError if a group is empty, blocks repeat, or an index is
  /// out of range.
  void validate(std::size_t block_count) const;
  IndexSet banned_blocks(std::size_t block_count) const;
  /// Group-list syntax with 1-based block names, e.g. "{A1,A2}|{A3}".
  std::string label() const;
  static InformationStructure parse(std::string_view text, std::size_t block_count);
};

/// Weighted mean quality sum(x w m) / sum(w m) over `atom_set`. `weights` is
/// indexed by population atom index; empty means unit weights.
double conditional_mean(const SellerPopulation& pop, std::span<const std::size_t> atom_set,
                        std::span<const double> weights = {});

/// Number of information structures over l blocks: sum_{s=1..l} C(l,s) Bell(s).
std::uint64_t structure_count(std::size_t blocks);

inline constexpr std::size_t kDefaultEnumerationCap = 10;

/// Every information structure over the population's blocks: for each
/// nonempty block subset (ascending bitmask), each set partition of it
/// (more groups first, then lexicographic).
std::vector<InformationStructure> enumerate_structures(const SellerPopulation& pop,
                                                       std::size_t cap = kDefaultEnumerationCap);
std::vector<InformationStructure> enumerate_structures(std::size_t block_count,
                                                       std::size_t cap = kDefaultEnumerationCap);

}  // namespace qsel
