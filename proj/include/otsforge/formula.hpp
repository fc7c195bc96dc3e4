#pragma once

#include <string>

#include "otsforge/optree.hpp"

namespace otsforge {

/// Canonical infix rendering after a bounded simplification pass: constant
/// folding, identity elimination (x+0, x*1, x/1, x^0, x^1, double neg/inv,
/// L(1,0)), zero absorption, and commutative operand ordering (for `*`
/// constants lead, for `+` they trail, otherwise lexicographic).
/// Constants use fixed notation with `precision` decimals.
std::string render_formula(const OpTree& tree, int precision = 4);

/// Same rendering with every constant shown as the placeholder `c` and no
/// value-dependent rewriting.
std::string render_skeleton(const OpTree& tree);

/// True when no variable survives simplification (e.g. 0*x0 + c).
bool is_constant_formula(const OpTree& tree);

}  // namespace otsforge
