#include "otsforge/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "otsforge/error.hpp"

namespace otsforge {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

const std::vector<Interval> kReals{Interval{}};
const std::vector<Interval> kNonZero{Interval{-kInf, 0.0, true, true},
                                     Interval{0.0, kInf, true, true}};
const std::vector<Interval> kPositive{Interval{0.0, kInf, true, true}};
const std::vector<Interval> kNonNegative{Interval{0.0, kInf, false, true}};

OperatorSpec make(std::string name, TokenId id, int arity, int n_constants,
                  OpKind kind, std::vector<std::vector<Interval>> domain = {}) {
  OperatorSpec spec;
  spec.name = std::move(name);
  spec.token_id = id;
  spec.arity = arity;
  spec.n_constants = n_constants;
  spec.kind = kind;
  if (domain.empty()) domain.assign(static_cast<std::size_t>(arity), kReals);
  spec.domain = std::move(domain);
  if (arity == 1) spec.max_consecutive = 3;
  return spec;
}

const std::vector<std::string> kSpecialTokens{"[CLS]", "[ENC]", "[BOS]",
                                              "[SEP]", "[PAD]", "[MASK]"};

std::string_view kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::pow: return "pow";
    case OpKind::neg: return "neg";
    case OpKind::inv: return "inv";
    case OpKind::sin: return "sin";
    case OpKind::cos: return "cos";
    case OpKind::tan: return "tan";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sqrt: return "sqrt";
    case OpKind::abs: return "abs";
    case OpKind::linear: return "linear";
    case OpKind::constant: return "constant";
    case OpKind::variable: return "variable";
  }
  return "?";
}

OpKind kind_from_name(std::string_view name) {
  static const std::unordered_map<std::string_view, OpKind> table{
      {"add", OpKind::add},       {"sub", OpKind::sub},
      {"mul", OpKind::mul},       {"div", OpKind::div},
      {"pow", OpKind::pow},       {"neg", OpKind::neg},
      {"inv", OpKind::inv},       {"sin", OpKind::sin},
      {"cos", OpKind::cos},       {"tan", OpKind::tan},
      {"exp", OpKind::exp},       {"log", OpKind::log},
      {"sqrt", OpKind::sqrt},     {"abs", OpKind::abs},
      {"linear", OpKind::linear}, {"constant", OpKind::constant},
      {"variable", OpKind::variable}};
  auto it = table.find(name);
  if (it == table.end())
    throw Error(ErrorKind::schema_mismatch,
                "unknown operator kind '" + std::string(name) + "'");
  return it->second;
}

nlohmann::json interval_json(const Interval& iv) {
  auto bound = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
  };
  return {{"lo", bound(iv.lo)},
          {"hi", bound(iv.hi)},
          {"lo_open", iv.lo_open},
          {"hi_open", iv.hi_open}};
}

Interval interval_from_json(const nlohmann::json& j) {
  auto bound = [](const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>() == "inf" ? kInf : -kInf;
    return v.get<double>();
  };
  return Interval{bound(j.at("lo")), bound(j.at("hi")),
                  j.at("lo_open").get<bool>(), j.at("hi_open").get<bool>()};
}

}  // namespace

Vocab::Vocab(std::vector<OperatorSpec> specs)
    : specs_(std::move(specs)), special_tokens_(kSpecialTokens) {
  std::sort(specs_.begin(), specs_.end(),
            [](const auto& a, const auto& b) { return a.token_id < b.token_id; });
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].token_id != static_cast<TokenId>(i + 1))
      throw Error(ErrorKind::schema_mismatch,
                  "operator ids must be dense in 1..N");
    if (static_cast<int>(specs_[i].domain.size()) != specs_[i].arity)
      specs_[i].domain.assign(static_cast<std::size_t>(specs_[i].arity), kReals);
  }
}

TokenId Vocab::special_id(std::string_view name) const {
  auto it = std::find(special_tokens_.begin(), special_tokens_.end(), name);
  if (it == special_tokens_.end())
    throw Error(ErrorKind::unknown_symbol,
                "unknown special token '" + std::string(name) + "'");
  return size() + 1 + static_cast<TokenId>(it - special_tokens_.begin());
}

const OperatorSpec* Vocab::find(std::string_view name) const {
  for (const auto& spec : specs_)
    if (spec.name == name) return &spec;
  return nullptr;
}

const OperatorSpec* Vocab::find(TokenId id) const {
  if (!is_operator(id)) return nullptr;
  return &specs_[static_cast<std::size_t>(id - 1)];
}

const OperatorSpec& Vocab::lookup(Key key) const {
  if (const auto* name = std::get_if<std::string_view>(&key)) {
    if (const auto* spec = find(*name)) return *spec;
    if (std::find(special_tokens_.begin(), special_tokens_.end(), *name) !=
            special_tokens_.end() ||
        *name == "end")
      throw Error(ErrorKind::not_an_operator,
                  "'" + std::string(*name) + "' is not an operator");
    throw Error(ErrorKind::unknown_symbol,
                "unknown symbol '" + std::string(*name) + "'");
  }
  const TokenId id = std::get<TokenId>(key);
  if (id == kEndToken)
    throw Error(ErrorKind::not_an_operator, "id 0 is the 'end' filler");
  if (id > size() && id <= size() + static_cast<int>(special_tokens_.size()))
    throw Error(ErrorKind::not_an_operator,
                "id " + std::to_string(id) + " is a special token");
  if (const auto* spec = find(id)) return *spec;
  throw Error(ErrorKind::unknown_symbol, "unknown id " + std::to_string(id));
}

std::vector<const OperatorSpec*> Vocab::with_arity(int arity) const {
  std::vector<const OperatorSpec*> out;
  for (const auto& spec : specs_)
    if (spec.arity == arity && spec.kind != OpKind::variable &&
        spec.kind != OpKind::constant)
      out.push_back(&spec);
  return out;
}

std::vector<const OperatorSpec*> Vocab::variables(int n_vars) const {
  std::vector<const OperatorSpec*> out;
  for (const auto& spec : specs_)
    if (spec.kind == OpKind::variable && spec.var_index < n_vars)
      out.push_back(&spec);
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
    return a->var_index < b->var_index;
  });
  return out;
}

bool Vocab::forbidden_pair(const OperatorSpec& a, const OperatorSpec& b) const {
  return a.forbidden_adjacent.count(b.name) > 0 ||
         b.forbidden_adjacent.count(a.name) > 0;
}

Vocab Vocab::with_overrides(
    const std::vector<ConstraintOverride>& overrides) const {
  std::vector<OperatorSpec> specs = specs_;
  for (const auto& ov : overrides) {
    auto it = std::find_if(specs.begin(), specs.end(),
                           [&](const auto& s) { return s.name == ov.name; });
    if (it == specs.end())
      throw Error(ErrorKind::unknown_symbol,
                  "override for unknown symbol '" + ov.name + "'");
    if (ov.max_consecutive) it->max_consecutive = *ov.max_consecutive;
    if (ov.max_count) it->max_count = *ov.max_count;
    if (ov.forbidden_adjacent) {
      for (const auto& other : *ov.forbidden_adjacent)
        if (std::none_of(specs.begin(), specs.end(),
                         [&](const auto& s) { return s.name == other; }))
          throw Error(ErrorKind::unknown_symbol,
                      "forbidden_adjacent names unknown symbol '" + other + "'");
      it->forbidden_adjacent = *ov.forbidden_adjacent;
    }
  }
  return Vocab(std::move(specs));
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& spec : specs_) {
    nlohmann::json domain = nlohmann::json::array();
    for (const auto& arg : spec.domain) {
      nlohmann::json pieces = nlohmann::json::array();
      for (const auto& iv : arg) pieces.push_back(interval_json(iv));
      domain.push_back(std::move(pieces));
    }
    nlohmann::json op{{"name", spec.name},
                      {"id", spec.token_id},
                      {"arity", spec.arity},
                      {"n_constants", spec.n_constants},
                      {"kind", kind_name(spec.kind)},
                      {"domain", std::move(domain)},
                      {"forbidden_adjacent", spec.forbidden_adjacent}};
    if (spec.kind == OpKind::variable) op["var_index"] = spec.var_index;
    op["max_consecutive"] = spec.max_consecutive
                                ? nlohmann::json(*spec.max_consecutive)
                                : nlohmann::json(nullptr);
    op["max_count"] = spec.max_count ? nlohmann::json(*spec.max_count)
                                     : nlohmann::json(nullptr);
    ops.push_back(std::move(op));
  }
  nlohmann::json specials = nlohmann::json::array();
  for (std::size_t i = 0; i < special_tokens_.size(); ++i)
    specials.push_back({{"name", special_tokens_[i]},
                        {"id", size() + 1 + static_cast<int>(i)}});
  return {{"version", 1},
          {"end_id", kEndToken},
          {"n_operators", size()},
          {"operators", std::move(ops)},
          {"special_tokens", std::move(specials)}};
}

Vocab Vocab::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("version", 0) != 1)
    throw Error(ErrorKind::schema_mismatch, "unsupported vocab version");
  std::vector<OperatorSpec> specs;
  try {
  for (const auto& op : doc.at("operators")) {
    OperatorSpec spec;
    spec.name = op.at("name").get<std::string>();
    spec.token_id = op.at("id").get<TokenId>();
    spec.arity = op.at("arity").get<int>();
    spec.n_constants = op.at("n_constants").get<int>();
    spec.kind = kind_from_name(op.at("kind").get<std::string>());
    spec.var_index = op.value("var_index", -1);
    for (const auto& arg : op.at("domain")) {
      std::vector<Interval> pieces;
      for (const auto& iv : arg) pieces.push_back(interval_from_json(iv));
      spec.domain.push_back(std::move(pieces));
    }
    if (!op.at("max_consecutive").is_null())
      spec.max_consecutive = op.at("max_consecutive").get<int>();
    if (!op.at("max_count").is_null())
      spec.max_count = op.at("max_count").get<int>();
    spec.forbidden_adjacent =
        op.at("forbidden_adjacent").get<std::set<std::string>>();
    specs.push_back(std::move(spec));
  }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, std::string("vocab json: ") + e.what());
  }
  return Vocab(std::move(specs));
}

Vocab build_default_vocab() {
  std::vector<OperatorSpec> specs{
      make("add", 1, 2, 0, OpKind::add),
      make("sub", 2, 2, 0, OpKind::sub),
      make("mul", 3, 2, 0, OpKind::mul),
      make("div", 4, 2, 0, OpKind::div, {kReals, kNonZero}),
      make("pow", 5, 2, 0, OpKind::pow),
      make("neg", 6, 1, 0, OpKind::neg),
      make("inv", 7, 1, 0, OpKind::inv, {kNonZero}),
      make("sin", 8, 1, 0, OpKind::sin),
      make("cos", 9, 1, 0, OpKind::cos),
      make("tan", 10, 1, 0, OpKind::tan),
      make("exp", 11, 1, 0, OpKind::exp),
      make("log", 12, 1, 0, OpKind::log, {kPositive}),
      make("sqrt", 13, 1, 0, OpKind::sqrt, {kNonNegative}),
      make("abs", 14, 1, 0, OpKind::abs),
      make("L", 15, 1, 2, OpKind::linear),
      make("C", 16, 0, 1, OpKind::constant),
      make("x0", 17, 0, 0, OpKind::variable),
      make("x1", 18, 0, 0, OpKind::variable),
  };
  specs[16].var_index = 0;
  specs[17].var_index = 1;
  auto get = [&](std::string_view name) -> OperatorSpec& {
    return *std::find_if(specs.begin(), specs.end(),
                         [&](const auto& s) { return s.name == name; });
  };
  get("exp").forbidden_adjacent = {"exp", "log"};
  get("log").forbidden_adjacent = {"exp"};
  get("inv").forbidden_adjacent = {"inv"};
  get("neg").forbidden_adjacent = {"neg"};
  get("exp").max_count = 2;
  get("log").max_count = 2;
  return Vocab(std::move(specs));
}

const Vocab& default_vocab() {
  static const Vocab vocab = build_default_vocab();
  return vocab;
}

}  // namespace otsforge
