#include "qsel/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "qsel/errors.hpp"
#include "qsel/oracle.hpp"

namespace qsel::cli {

using nlohmann::json;

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

// Schema helpers. Every getter records a problem instead of throwing so the
// caller sees all violations at once.
class Checker {
 public:
  std::vector<std::string> problems;

  void add(std::string msg) { problems.push_back(std::move(msg)); }

  bool object(const json& j, const std::string& path) {
    if (j.is_object()) return true;
    add(path + ": expected an object");
    return false;
  }

  void known_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : j.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; })) {
        add(path + "." + k + ": unknown field");
      }
    }
  }

  std::optional<double> number(const json& j, const std::string& key, const std::string& path, bool required = true) {
    if (!j.contains(key)) {
      if (required) add(path + "." + key + ": missing");
      return std::nullopt;
    }
    if (!j.at(key).is_number()) {
      add(path + "." + key + ": expected a number");
      return std::nullopt;
    }
    return j.at(key).get<double>();
  }

  std::optional<std::uint64_t> count(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_number_unsigned()) {
      add(path + "." + key + ": expected a nonnegative integer");
      return std::nullopt;
    }
    return j.at(key).get<std::uint64_t>();
  }

  std::optional<std::vector<double>> numbers(const json& j, const std::string& path) {
    if (!j.is_array()) {
      add(path + ": expected an array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    bool ok = true;
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) {
        add(path + "[" + std::to_string(i) + "]: expected a number");
        ok = false;
      } else {
        out.push_back(j[i].get<double>());
      }
    }
    return ok ? std::optional(out) : std::nullopt;
  }

  template <typename F>
  void guard(const std::string& path, F&& f) {
    try {
      f();
    } catch (const ValidationError& e) {
      for (const auto& p : e.problems()) add(p.rfind(path, 0) == 0 ? p : path + ": " + p);
    } catch (const std::exception& e) {
      add(path + ": " + e.what());
    }
  }
};

std::optional<TypeDistribution> parse_buyers(const json& root, Checker& ck) {
  if (!root.contains("buyers")) {
    ck.add("buyers: missing");
    return std::nullopt;
  }
  const json& b = root.at("buyers");
  if (!ck.object(b, "buyers")) return std::nullopt;
  ck.known_keys(b, "buyers", {"family", "params", "support"});
  if (!b.contains("family") || !b.at("family").is_string()) {
    ck.add("buyers.family: expected one of uniform, power, beta, pareto_truncated, piecewise");
    return std::nullopt;
  }
  const std::string family = b.at("family").get<std::string>();
  const json params = b.value("params", json::object());
  if (!ck.object(params, "buyers.params")) return std::nullopt;

  std::optional<std::pair<double, double>> support;
  if (b.contains("support")) {
    auto s = ck.numbers(b.at("support"), "buyers.support");
    if (s && s->size() == 2) {
      support = std::pair{(*s)[0], (*s)[1]};
    } else if (s) {
      ck.add("buyers.support: expected [a, b]");
    }
  }
  auto need_support = [&]() -> bool {
    if (support) return true;
    if (!b.contains("support")) ck.add("buyers.support: missing");
    return false;
  };

  std::optional<TypeDistribution> dist;
  const std::size_t before = ck.problems.size();
  if (family == "uniform") {
    ck.known_keys(params, "buyers.params", {});
    if (need_support()) ck.guard("buyers", [&] { dist = TypeDistribution::uniform(support->first, support->second); });
  } else if (family == "power") {
    ck.known_keys(params, "buyers.params", {"exponent"});
    auto e = ck.number(params, "exponent", "buyers.params");
    if (need_support() && e && ck.problems.size() == before) {
      ck.guard("buyers", [&] { dist = TypeDistribution::power(*e, support->first, support->second); });
    }
  } else if (family == "beta") {
    ck.known_keys(params, "buyers.params", {"alpha", "beta"});
    auto al = ck.number(params, "alpha", "buyers.params");
    auto be = ck.number(params, "beta", "buyers.params");
    const auto sup = support.value_or(std::pair{0.0, 1.0});
    if (al && be && ck.problems.size() == before) {
      ck.guard("buyers", [&] { dist = TypeDistribution::beta(*al, *be, sup.first, sup.second); });
    }
  } else if (family == "pareto_truncated") {
    ck.known_keys(params, "buyers.params", {"shape"});
    auto sh = ck.number(params, "shape", "buyers.params");
    if (need_support() && sh && ck.problems.size() == before) {
      ck.guard("buyers", [&] { dist = TypeDistribution::pareto_truncated(*sh, support->first, support->second); });
    }
  } else if (family == "piecewise") {
    ck.known_keys(params, "buyers.params", {"pieces"});
    if (!params.contains("pieces") || !params.at("pieces").is_array()) {
      ck.add("buyers.params.pieces: expected an array");
      return std::nullopt;
    }
    std::vector<DensityPiece> pieces;
    const json& arr = params.at("pieces");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = "buyers.params.pieces[" + std::to_string(i) + "]";
      if (!ck.object(arr[i], path)) continue;
      ck.known_keys(arr[i], path, {"from", "to", "terms"});
      DensityPiece piece;
      auto lo = ck.number(arr[i], "from", path);
      auto hi = ck.number(arr[i], "to", path);
      piece.lo = lo.value_or(0.0);
      piece.hi = hi.value_or(0.0);
      if (!arr[i].contains("terms") || !arr[i].at("terms").is_array()) {
        ck.add(path + ".terms: expected an array");
        continue;
      }
      const json& terms = arr[i].at("terms");
      for (std::size_t t = 0; t < terms.size(); ++t) {
        const std::string tp = path + ".terms[" + std::to_string(t) + "]";
        if (!ck.object(terms[t], tp)) continue;
        ck.known_keys(terms[t], tp, {"coef", "power"});
        auto c = ck.number(terms[t], "coef", tp);
        auto p = ck.number(terms[t], "power", tp);
        if (c && p) piece.terms.push_back({*c, *p});
      }
      pieces.push_back(std::move(piece));
    }
    if (ck.problems.size() == before) {
      ck.guard("buyers", [&] { dist = TypeDistribution::piecewise(pieces); });
      if (dist && support && (support->first != dist->lower() || support->second != dist->upper())) {
        ck.add("buyers.support: does not match the pieces' range");
      }
    }
  } else {
    ck.add("buyers.family: unknown family '" + family + "'");
  }
  return dist;
}

std::optional<SellerPopulation> parse_sellers(const json& root, Checker& ck) {
  if (!root.contains("sellers")) {
    ck.add("sellers: missing");
    return std::nullopt;
  }
  const json& s = root.at("sellers");
  if (!ck.object(s, "sellers")) return std::nullopt;
  ck.known_keys(s, "sellers", {"atoms", "blocks", "x_max"});
  const std::size_t before = ck.problems.size();

  std::vector<Atom> atoms;
  if (!s.contains("atoms") || !s.at("atoms").is_array()) {
    ck.add("sellers.atoms: expected an array");
  } else {
    const json& arr = s.at("atoms");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = "sellers.atoms[" + std::to_string(i) + "]";
      if (!ck.object(arr[i], path)) continue;
      ck.known_keys(arr[i], path, {"quality", "mass"});
      auto q = ck.number(arr[i], "quality", path);
      auto m = ck.number(arr[i], "mass", path);
      atoms.push_back({q.value_or(0.0), m.value_or(0.0)});
    }
  }
  std::vector<IndexSet> blocks;
  if (!s.contains("blocks") || !s.at("blocks").is_array()) {
    ck.add("sellers.blocks: expected an array of atom-index arrays");
  } else {
    const json& arr = s.at("blocks");
    for (std::size_t b = 0; b < arr.size(); ++b) {
      IndexSet block;
      if (!arr[b].is_array()) {
        ck.add("sellers.blocks[" + std::to_string(b) + "]: expected an array");
        continue;
      }
      for (std::size_t k = 0; k < arr[b].size(); ++k) {
        if (!arr[b][k].is_number_unsigned()) {
          ck.add("sellers.blocks[" + std::to_string(b) + "][" + std::to_string(k) +
                 "]: expected a nonnegative atom index");
        } else {
          block.push_back(arr[b][k].get<std::size_t>());
        }
      }
      blocks.push_back(std::move(block));
    }
  }
  std::optional<double> x_max = ck.number(s, "x_max", "sellers", false);
  if (ck.problems.size() != before) return std::nullopt;
  std::optional<SellerPopulation> pop;
  ck.guard("sellers", [&] { pop.emplace(std::move(atoms), std::move(blocks), x_max); });
  return pop;
}

void parse_options(const json& root, Checker& ck, SpecOptions& opt) {
  if (!root.contains("options")) return;
  const json& o = root.at("options");
  if (!ck.object(o, "options")) return;
  ck.known_keys(o, "options", {"cap", "seed", "samples", "jobs", "grid_resolution"});
  if (auto v = ck.count(o, "cap", "options")) opt.cap = *v;
  if (auto v = ck.count(o, "seed", "options")) opt.seed = *v;
  if (auto v = ck.count(o, "samples", "options")) opt.samples = *v;
  if (auto v = ck.count(o, "jobs", "options")) opt.jobs = std::max<std::uint64_t>(*v, 1);
  if (auto v = ck.number(o, "grid_resolution", "options", false)) opt.grid_resolution = *v;
  if (opt.samples < 10'000) ck.add("options.samples: must be >= 10000");
  if (!(opt.grid_resolution > 0.0)) ck.add("options.grid_resolution: must be > 0");
}

}  // namespace

MarketSpec parse_spec_text(const std::string& text) {
  MarketSpec spec;
  spec.digest = fnv1a_hex(text);
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError({std::string("document: not valid JSON: ") + e.what()});
  }
  Checker ck;
  if (!ck.object(root, "document")) throw ValidationError(ck.problems);
  ck.known_keys(root, "document", {"buyers", "sellers", "model", "options"});
  spec.dist = parse_buyers(root, ck);
  spec.pop = parse_sellers(root, ck);
  parse_options(root, ck, spec.options);

  if (!root.contains("model")) {
    ck.add("model: missing (expected a quantity or price section)");
  } else if (ck.object(root.at("model"), "model")) {
    const json& m = root.at("model");
    ck.known_keys(m, "model", {"quantity", "price"});
    const bool has_q = m.contains("quantity"), has_p = m.contains("price");
    if (has_q == has_p) ck.add("model: exactly one of quantity or price is required");
    if (has_q && ck.object(m.at("quantity"), "model.quantity")) {
      const json& q = m.at("quantity");
      ck.known_keys(q, "model.quantity", {"alpha", "k"});
      auto alpha = ck.number(q, "alpha", "model.quantity");
      std::optional<std::vector<double>> k;
      if (!q.contains("k")) {
        ck.add("model.quantity.k: missing");
      } else if (q.at("k").is_number()) {
        if (spec.pop) k = std::vector<double>(spec.pop->atom_count(), q.at("k").get<double>());
      } else {
        k = ck.numbers(q.at("k"), "model.quantity.k");
      }
      if (alpha && k && spec.dist && spec.pop) {
        ck.guard("model.quantity", [&] { spec.quantity.emplace(*spec.dist, *spec.pop, *k, *alpha); });
      }
    }
    if (has_p && ck.object(m.at("price"), "model.price")) {
      const json& p = m.at("price");
      ck.known_keys(p, "model.price", {"costs"});
      std::optional<std::vector<double>> costs;
      if (!p.contains("costs")) {
        ck.add("model.price.costs: missing");
      } else {
        costs = ck.numbers(p.at("costs"), "model.price.costs");
      }
      if (costs && spec.dist && spec.pop) {
        ck.guard("model.price", [&] { spec.price.emplace(*spec.dist, *spec.pop, *costs); });
      }
    }
  }
  if (!ck.problems.empty()) throw ValidationError(ck.problems);
  return spec;
}

MarketSpec parse_spec_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError({"spec: cannot read '" + path + "'"});
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_spec_text(ss.str());
}

Menu parse_menu(const std::string& text) {
  std::vector<PriceQuality> pairs;
  std::vector<std::string> problems;
  std::stringstream ss(text);
  std::string item;
  std::size_t idx = 0;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument("missing ':'");
      std::size_t used = 0;
      const double p = std::stod(item.substr(0, colon), &used);
      const double q = std::stod(item.substr(colon + 1));
      if (!(p > 0.0 && q > 0.0)) throw std::invalid_argument("price and quality must be > 0");
      pairs.push_back({p, q});
    } catch (const std::exception& e) {
      problems.push_back("menu[" + std::to_string(idx) + "] '" + item + "': expected price:quality (" + e.what() + ")");
    }
    ++idx;
  }
  if (pairs.empty() && problems.empty()) problems.push_back("menu: no pairs given");
  if (!problems.empty()) throw ValidationError(problems);
  return Menu(std::move(pairs));
}

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fmt(v[i]);
  return s;
}

std::string blocks_label(const IndexSet& blocks) {
  std::string s = "{";
  for (std::size_t i = 0; i < blocks.size(); ++i) s += (i ? ",A" : "A") + std::to_string(blocks[i] + 1);
  return s + "}";
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

// One command's output in all three renderings.
struct Report {
  std::string command;
  json results = json::object();
  std::vector<std::string> diagnostics;
  std::vector<std::string> csv_header;
  std::vector<std::vector<std::string>> csv_rows;
  std::vector<std::string> text;
  int exit_code = kOk;
};

std::string render(const Report& r, const std::string& format, const std::string& digest) {
  std::ostringstream os;
  if (format == "json") {
    json doc{{"spec_digest", digest}, {"command", r.command}, {"results", r.results}, {"diagnostics", r.diagnostics}};
    os << doc.dump(2) << '\n';
  } else if (format == "csv") {
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_cell(cells[i]);
      os << '\n';
    };
    line(r.csv_header);
    for (const auto& row : r.csv_rows) line(row);
  } else {
    for (const auto& l : r.text) os << l << '\n';
    for (const auto& d : r.diagnostics) os << "note: " << d << '\n';
  }
  return os.str();
}

const std::vector<std::string> kQuantityColumns{"structure", "groups",   "prices",      "qualities", "demands",
                                                "supplies",  "revenue", "implementable", "residual"};

std::vector<std::string> with_participation(std::vector<std::string> cols) {
  cols.push_back("participation");
  return cols;
}

json equilibrium_json(const EquilibriumResult& r) {
  return json{{"structure", r.structure.label()},
              {"groups", r.structure.group_count()},
              {"prices", r.prices},
              {"qualities", r.expected_qualities},
              {"demands", r.demands},
              {"supplies", r.supplies},
              {"revenue", r.revenue()},
              {"implementable", r.implementable},
              {"residual", r.clearing_residual},
              {"iterations", r.iterations},
              {"diagnostic", r.diagnostic}};
}

std::vector<std::string> equilibrium_row(const EquilibriumResult& r) {
  return {r.structure.label(),    std::to_string(r.structure.group_count()),
          join(r.prices),         join(r.expected_qualities),
          join(r.demands),        join(r.supplies),
          fmt(r.revenue()),       r.implementable ? "true" : "false",
          fmt(r.clearing_residual)};
}

struct PriceRow {
  json j;
  std::vector<std::string> csv;
};

PriceRow price_row(const BertrandMenu& bm, const std::vector<double>& demands, bool implementable, double revenue,
                   const std::string& hint) {
  std::vector<double> prices = bm.menu.prices(), qualities = bm.menu.qualities();
  std::string participation;
  json part = json::array();
  for (std::size_t i = 0; i < bm.participating.size(); ++i) {
    participation += (i ? ";" : "") + blocks_label({bm.participating[i]});
    part.push_back(blocks_label({bm.participating[i]}));
  }
  // Participating sellers serve all of their group's demand.
  PriceRow row;
  row.j = json{{"structure", bm.structure.label()},
               {"groups", bm.structure.group_count()},
               {"prices", prices},
               {"qualities", qualities},
               {"demands", demands},
               {"supplies", demands},
               {"revenue", revenue},
               {"implementable", implementable},
               {"residual", 0.0},
               {"participation", part}};
  if (!hint.empty()) row.j["pruned_hint"] = hint;
  row.csv = {bm.structure.label(), std::to_string(bm.structure.group_count()),
             join(prices),         join(qualities),
             join(demands),        join(demands),
             fmt(revenue),         implementable ? "true" : "false",
             fmt(0.0),             participation};
  return row;
}

std::string regularity_text(const RegularityReport& reg) {
  if (reg.regular()) return "regularity: regular";
  std::string s = "regularity: not regular";
  if (!reg.condition_i) s += " (domination fails: " + reg.reason_i + ")";
  if (!reg.condition_ii) s += " (price bound fails: " + reg.reason_ii + ")";
  return s;
}

json regularity_json(const RegularityReport& reg) {
  return json{{"regular", reg.regular()},
              {"domination", reg.condition_i},
              {"domination_reason", reg.reason_i},
              {"price_bound", reg.condition_ii},
              {"price_bound_reason", reg.reason_ii}};
}

Report cmd_check(const MarketSpec& spec) {
  Report r;
  r.command = "check";
  const auto& d = *spec.dist;
  const Curvature curv = classify_Fm_convexity(d, d.lower(), d.upper());
  const auto [emin, emax] = elasticity_range(d, d.lower(), d.upper());
  r.results["buyers"] = d.describe();
  r.results["curvature"] = to_string(curv);
  r.results["elasticity_range"] = {emin, emax};
  r.text.push_back("F(m)m: " + to_string(curv));
  r.text.push_back("density elasticity range: [" + fmt(emin) + ", " + fmt(emax) + "]");
  r.csv_header = {"key", "value"};
  r.csv_rows = {{"curvature", to_string(curv)}, {"elasticity_min", fmt(emin)}, {"elasticity_max", fmt(emax)}};

  SearchOptions so{spec.options.cap, spec.options.jobs};
  if (spec.quantity) {
    const auto& m = *spec.quantity;
    const SupplyConditionReport sc = check_supply_condition(m);
    std::string line = std::string("supply condition: ") + (sc.holds ? "holds" : "fails");
    if (sc.closed_form_sum) {
      line += " (" + fmt(*sc.closed_form_sum) + (sc.holds ? " >= 1)" : " < 1)");
    } else {
      line += " (supply " + fmt(sc.supply_at_monopoly) + (sc.holds ? " >= " : " < ") + "demand " +
              fmt(sc.demand_at_monopoly) + " at monopoly price " + fmt(sc.monopoly) + ")";
    }
    const bool guaranteed = curv == Curvature::StrictlyConvex && sc.holds;
    line += guaranteed ? "; a single-block structure is optimal" : "; single-block optimality not guaranteed";
    r.text.push_back(line);
    r.results["supply_condition"] = json{{"high_block", blocks_label({sc.high_block})},
                                         {"high_price", sc.high_price},
                                         {"monopoly_price", sc.monopoly},
                                         {"supply_at_monopoly", sc.supply_at_monopoly},
                                         {"demand_at_monopoly", sc.demand_at_monopoly},
                                         {"holds", sc.holds}};
    if (sc.closed_form_sum) r.results["supply_condition"]["closed_form_sum"] = *sc.closed_form_sum;
    r.results["single_block_optimal_guaranteed"] = guaranteed;
    r.csv_rows.push_back({"supply_condition", sc.holds ? "holds" : "fails"});
    r.csv_rows.push_back({"single_block_optimal_guaranteed", guaranteed ? "true" : "false"});

    const QuantitySearchReport rep = search_optimal_structure(m, so);
    const RegularityReport reg = check_regularity(rep.constraint_set(), d);
    r.text.push_back(regularity_text(reg));
    r.results["regularity"] = regularity_json(reg);
    r.csv_rows.push_back({"regular", reg.regular() ? "true" : "false"});
  } else {
    const auto& m = *spec.price;
    const bool io = is_implementable(full_disclosure(m.pop().block_count()), m).implementable;
    r.text.push_back(std::string("full disclosure: ") + (io ? "implementable" : "not implementable"));
    r.results["full_disclosure_implementable"] = io;
    r.csv_rows.push_back({"full_disclosure_implementable", io ? "true" : "false"});
    const ConstraintSet cs = constraint_set(m, spec.options.cap);
    if (cs.menus.empty()) {
      r.diagnostics.push_back("no implementable structure; regularity not assessed");
    } else {
      const RegularityReport reg = check_regularity(cs, d);
      r.text.push_back(regularity_text(reg));
      r.results["regularity"] = regularity_json(reg);
      r.csv_rows.push_back({"regular", reg.regular() ? "true" : "false"});
    }
  }
  return r;
}

InformationStructure require_structure(const std::string& text, std::size_t blocks) {
  if (text.empty()) throw ValidationError({"--structure: required for this command"});
  try {
    return InformationStructure::parse(text, blocks);
  } catch (const std::exception& e) {
    throw ValidationError({std::string("--structure: ") + e.what()});
  }
}

Report cmd_solve_quantity(const MarketSpec& spec, const std::string& structure_text) {
  if (!spec.quantity) throw ValidationError({"model.quantity: solve-quantity needs a quantity model"});
  const auto& m = *spec.quantity;
  const InformationStructure s = require_structure(structure_text, m.pop().block_count());
  Report r;
  r.command = "solve-quantity";
  const EquilibriumResult eq = solve_equilibrium(s, m);
  r.results = equilibrium_json(eq);
  r.csv_header = kQuantityColumns;
  r.csv_rows.push_back(equilibrium_row(eq));
  r.text.push_back("structure " + eq.structure.label() + ": prices " + join(eq.prices) + ", revenue " +
                   fmt(eq.revenue()));
  if (!eq.implementable) {
    r.diagnostics.push_back(eq.diagnostic);
    r.exit_code = kNotImplementable;
  }
  return r;
}

Report cmd_solve_price(const MarketSpec& spec, const std::string& structure_text) {
  if (!spec.price) throw ValidationError({"model.price: solve-price needs a price model"});
  const auto& m = *spec.price;
  const InformationStructure s = require_structure(structure_text, m.pop().block_count());
  Report r;
  r.command = "solve-price";
  const BertrandMenu bm = bertrand_menu(s, m);
  const Implementability imp = is_implementable(s, m);
  const double rev = imp.implementable ? menu_revenue(bm.menu, m.dist()) : 0.0;
  PriceRow row = price_row(bm, imp.demands, imp.implementable, rev, "");
  r.results = row.j;
  r.csv_header = with_participation(kQuantityColumns);
  r.csv_rows.push_back(row.csv);
  r.text.push_back("structure " + bm.structure.label() + ": prices " + join(bm.menu.prices()) + ", revenue " +
                   fmt(rev));
  if (!imp.implementable) {
    r.diagnostics.push_back(bm.structure.label() + " leaves a group without demand");
    r.exit_code = kNotImplementable;
  }
  return r;
}

Report cmd_search_quantity(const MarketSpec& spec) {
  if (!spec.quantity) throw ValidationError({"model.quantity: search-quantity needs a quantity model"});
  const auto& m = *spec.quantity;
  const QuantitySearchReport rep = search_optimal_structure(m, {spec.options.cap, spec.options.jobs});
  Report r;
  r.command = "search-quantity";
  r.csv_header = kQuantityColumns;
  json table = json::array();
  for (const auto& row : rep.table) {
    table.push_back(equilibrium_json(row.equilibrium));
    r.csv_rows.push_back(equilibrium_row(row.equilibrium));
    if (!row.implementable && !row.equilibrium.diagnostic.empty()) {
      r.diagnostics.push_back(row.structure.label() + ": " + row.equilibrium.diagnostic);
    }
  }
  const auto& win = rep.table[rep.winner];
  r.results = json{{"table", table},
                   {"winner", win.equilibrium.structure.label()},
                   {"revenue", rep.revenue},
                   {"curvature", to_string(rep.curvature)},
                   {"supply_condition_holds", rep.supply.holds},
                   {"single_block_optimal_guaranteed", rep.single_group_guaranteed},
                   {"winner_is_1_separating", rep.winner_is_1_separating},
                   {"winner_is_single_block", rep.winner_block_in_Io},
                   {"winner_menu_maximal", rep.winner_menu_maximal}};
  for (const auto& row : rep.table) {
    r.text.push_back(row.equilibrium.structure.label() + "  revenue " + fmt(row.revenue) +
                     (row.implementable ? "" : "  (not implementable)"));
  }
  r.text.push_back("winner: " + win.equilibrium.structure.label() + ", revenue " + fmt(rep.revenue));
  return r;
}

Report cmd_search_price(const MarketSpec& spec) {
  if (!spec.price) throw ValidationError({"model.price: search-price needs a price model"});
  const auto& m = *spec.price;
  const PriceSearchReport rep = search_optimal_price_structure(m, {spec.options.cap, spec.options.jobs});
  Report r;
  r.command = "search-price";
  r.csv_header = with_participation(kQuantityColumns);
  json table = json::array();
  for (const auto& row : rep.table) {
    PriceRow pr = price_row(row.induced, row.demands, row.implementable, row.revenue, row.pruned_hint);
    table.push_back(pr.j);
    r.csv_rows.push_back(pr.csv);
    r.text.push_back(row.induced.structure.label() + "  revenue " + fmt(row.revenue) +
                     (row.implementable ? "" : "  (not implementable; pruned: " + row.pruned_hint + ")"));
  }
  const auto& win = rep.table[rep.winner];
  std::string kind = rep.full_disclosure_is_winner ? "full disclosure"
                     : rep.winner_is_top_block_only ? "top block only"
                     : win.induced.menu.size() == 1 ? "1-separating"
                                                    : "partial disclosure";
  r.results = json{{"table", table},
                   {"winner", win.induced.structure.label()},
                   {"winner_kind", kind},
                   {"revenue", rep.revenue},
                   {"curvature", to_string(rep.curvature)},
                   {"best_1_separating_revenue", rep.best_1_separating_revenue},
                   {"matches_convex_prediction", rep.matches_convex_prediction}};
  r.text.push_back("winner: " + win.induced.structure.label() + " (" + kind + "), revenue " + fmt(rep.revenue));
  return r;
}

Report cmd_compare(const MarketSpec& spec, const std::string& menu_text, const std::string& sub_text) {
  std::vector<std::string> problems;
  if (menu_text.empty()) problems.push_back("--menu: required");
  if (sub_text.empty()) problems.push_back("--submenu: required");
  if (!problems.empty()) throw ValidationError(problems);
  const Menu menu = parse_menu(menu_text);
  const Menu sub = parse_menu(sub_text);
  const auto& d = *spec.dist;
  const SubmenuComparison c = compare_submenu(menu, sub, d);
  Report r;
  r.command = "compare";
  r.csv_header = {"menu_id", "k", "prices", "qualities", "cutoffs", "demands", "revenue"};
  json menus = json::array();
  std::size_t id = 0;
  for (const Menu* mm : {&menu, &sub}) {
    const DemandSplit ds = demand_split(*mm, d);
    const double rev = menu_revenue(*mm, d);
    menus.push_back(json{{"menu_id", id},
                         {"k", mm->size()},
                         {"prices", mm->prices()},
                         {"qualities", mm->qualities()},
                         {"cutoffs", ds.cutoffs},
                         {"demands", ds.demands},
                         {"revenue", rev}});
    r.csv_rows.push_back({std::to_string(id), std::to_string(mm->size()), join(mm->prices()), join(mm->qualities()),
                          join(ds.cutoffs), join(ds.demands), fmt(rev)});
    ++id;
  }
  json intervals = json::array();
  for (std::size_t i = 0; i < c.intervals.size(); ++i) {
    intervals.push_back(
        json{{"from", c.intervals[i].first}, {"to", c.intervals[i].second}, {"curvature", to_string(c.curvatures[i])}});
  }
  r.results = json{{"menus", menus},
                   {"verdict", to_string(c.verdict)},
                   {"menu_revenue", c.menu_revenue},
                   {"submenu_revenue", c.sub_revenue},
                   {"intervals", intervals},
                   {"submenu_missing_top_pair", c.sub_missing_top_pair}};
  r.text.push_back("menu revenue " + fmt(c.menu_revenue) + ", submenu revenue " + fmt(c.sub_revenue));
  for (const auto& iv : intervals) {
    r.text.push_back("interval [" + fmt(iv["from"]) + ", " + fmt(iv["to"]) + "]: " + iv["curvature"].get<std::string>());
  }
  r.text.push_back("verdict: " + to_string(c.verdict));
  return r;
}

// Oracle cross-checks on the spec's own market.
Report cmd_verify(const MarketSpec& spec) {
  Report r;
  r.command = "verify";
  r.csv_header = {"check", "status", "detail"};
  json checks = json::array();
  bool all = true;
  auto record = [&](const std::string& name, bool ok, const std::string& detail) {
    all = all && ok;
    checks.push_back(json{{"check", name}, {"pass", ok}, {"detail", detail}});
    r.csv_rows.push_back({name, ok ? "pass" : "fail", detail});
    r.text.push_back(std::string(ok ? "PASS " : "FAIL ") + name + ": " + detail);
  };
  OracleConfig cfg;
  cfg.samples = spec.options.samples;
  cfg.seed = spec.options.seed;
  cfg.grid_resolution = spec.options.grid_resolution;
  cfg.jobs = spec.options.jobs;
  const auto& d = *spec.dist;

  auto demand_parity = [&](const std::string& name, const Menu& menu) {
    const McDemand mc = mc_demand(menu, d, cfg);
    const DemandSplit ds = demand_split(menu, d);
    double worst = 0.0;
    for (std::size_t i = 0; i < menu.size(); ++i) {
      const double p = ds.demands[i];
      const double sigma = std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(cfg.samples));
      const double z = sigma > 0.0 ? std::abs(mc.estimates[i] - p) / sigma : (mc.estimates[i] == p ? 0.0 : 1e9);
      worst = std::max(worst, z);
    }
    record(name, worst <= 3.0, "max deviation " + fmt(worst) + " sigma");
  };

  if (spec.quantity) {
    const auto& m = *spec.quantity;
    for (const auto& s : enumerate_structures(m.pop(), spec.options.cap)) {
      EquilibriumResult eq;
      try {
        eq = solve_equilibrium(s, m);
      } catch (const NonConvergence& e) {
        record("equilibrium " + s.label(), false, e.what());
        continue;
      }
      if (!eq.implementable) continue;
      std::vector<PriceQuality> pairs;
      for (std::size_t i = 0; i < eq.prices.size(); ++i) pairs.push_back({eq.prices[i], eq.expected_qualities[i]});
      demand_parity("demand " + s.label(), Menu(pairs));
      if (s.group_count() <= 2) {
        try {
          const std::vector<double> g = grid_equilibrium(s, m, cfg);
          double diff = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) diff = std::max(diff, std::abs(g[i] - eq.prices[i]));
          record("grid equilibrium " + s.label(), diff <= 1e-6, "max price gap " + fmt(diff));
        } catch (const DomainError& e) {
          record("grid equilibrium " + s.label(), false, e.what());
        }
      }
    }
  } else {
    const auto& m = *spec.price;
    for (const auto& s : enumerate_structures(m.pop(), spec.options.cap)) {
      const Implementability imp = is_implementable(s, m);
      if (!imp.implementable) continue;
      demand_parity("demand " + s.label(), bertrand_menu(s, m).menu);
      const bool ok = bertrand_deviation_check(s, m);
      record("bertrand deviation " + s.label(), ok, ok ? "no profitable deviation" : "profitable deviation found");
    }
  }
  r.results = json{{"checks", checks}, {"all_pass", all}};
  if (!all) r.exit_code = kFailure;
  return r;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Information-structure design for quality-differentiated platforms"};
  app.require_subcommand(1);

  std::string spec_path, structure, format = "text", out_path, menu_text, sub_text;
  std::optional<std::size_t> jobs, cap;
  std::optional<std::uint64_t> seed;

  auto common = [&](CLI::App* sub, bool needs_spec = true) {
    auto* o = sub->add_option("--spec", spec_path, "Market file (JSON)")->check(CLI::ExistingFile);
    if (needs_spec) o->required();
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "csv", "json"}));
    sub->add_option("--out", out_path, "Write the report to this path");
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Oracle sampling seed");
    sub->add_option("--cap", cap, "Maximum number of blocks to enumerate");
  };
  auto* check = app.add_subcommand("check", "Classify the market and test its hypotheses");
  auto* solve_q = app.add_subcommand("solve-quantity", "Equilibrium of one structure under the quantity model");
  auto* solve_p = app.add_subcommand("solve-price", "Equilibrium of one structure under the price model");
  auto* search_q = app.add_subcommand("search-quantity", "Revenue of every structure, quantity model");
  auto* search_p = app.add_subcommand("search-price", "Revenue of every structure, price model");
  auto* compare = app.add_subcommand("compare", "Compare a menu with one of its submenus");
  auto* verify = app.add_subcommand("verify", "Cross-check the analytic results against brute-force oracles");
  for (auto* sub : {check, solve_q, solve_p, search_q, search_p, compare, verify}) common(sub);
  for (auto* sub : {solve_q, solve_p}) sub->add_option("--structure", structure, "Groups, e.g. {A1,A2}|{A3}")->required();
  compare->add_option("--menu", menu_text, "price:quality,...")->required();
  compare->add_option("--submenu", sub_text, "price:quality,...")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  }

  std::string digest;
  try {
    MarketSpec spec = parse_spec_file(spec_path);
    if (jobs) spec.options.jobs = *jobs;
    if (cap) spec.options.cap = *cap;
    if (seed) spec.options.seed = *seed;
    digest = spec.digest;

    Report report;
    if (*check) report = cmd_check(spec);
    else if (*solve_q) report = cmd_solve_quantity(spec, structure);
    else if (*solve_p) report = cmd_solve_price(spec, structure);
    else if (*search_q) report = cmd_search_quantity(spec);
    else if (*search_p) report = cmd_search_price(spec);
    else if (*compare) report = cmd_compare(spec, menu_text, sub_text);
    else report = cmd_verify(spec);

    const std::string text = render(report, format, digest);
    if (out_path.empty()) {
      out << text;
    } else {
      std::ofstream f(out_path, std::ios::binary);
      if (!f) {
        err << "error: cannot write '" << out_path << "'\n";
        return kFailure;
      }
      f << text;
    }
    for (const auto& d : report.diagnostics) {
      if (report.exit_code == kNotImplementable) err << "not implementable: " << d << '\n';
    }
    return report.exit_code;
  } catch (const ValidationError& e) {
    for (const auto& p : e.problems()) err << "invalid: " << p << '\n';
    return kInvalid;
  } catch (const NotImplementable& e) {
    err << "not implementable: " << e.what() << '\n';
    return kNotImplementable;
  } catch (const DomainError& e) {
    err << "invalid: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace qsel::cli
