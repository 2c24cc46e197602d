"""
Exact posterior of a boolean formula over independent weighted atoms.

``posterior`` sums, over every truth assignment that satisfies the formula, the
product of per-atom weights (``p`` when the atom is true, ``1 - p`` otherwise).
"""
import math
from typing import Mapping

import numpy as np

from src.entity.errors import MissingAssignment, MissingPrior, TooManyAtoms
from src.entity.models import And, Atom, Formula, Not, Or, Residual

BRUTEFORCE_MAX_ATOMS = 24


def _check_priors(atoms: tuple[str, ...], priors: Mapping[str, float]) -> None:
    for atom in atoms:
        if atom not in priors:
            raise MissingPrior(atom)
        value = priors[atom]
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"prior for '{atom}' outside [0, 1]: {value}")


class WeightedModelCounter:
    """
    Memoized Shannon expansion over one set of priors.

    And/Or nodes whose children touch disjoint atoms are split into independent
    factors first; the remaining shared-atom nodes are expanded on their earliest
    atom (first-occurrence order of the root formula). The memo table maps a
    residual formula to its probability and lives as long as the counter.

    :param priors: Prior probability per predicate id.
    :type priors: Mapping[str, float]
    :param order: Atom expansion order.
    :type order: tuple[str, ...]
    """

    def __init__(self, priors: Mapping[str, float], order: tuple[str, ...]):
        self.priors = priors
        self.rank = {atom: index for index, atom in enumerate(order)}
        self._memo: dict[Formula, float] = {}
        self._atoms: dict[Formula, frozenset[str]] = {}

    def atoms(self, formula: Formula) -> frozenset[str]:
        cached = self._atoms.get(formula)
        if cached is None:
            cached = frozenset(formula.atoms())
            self._atoms[formula] = cached
        return cached

    def probability(self, formula: Residual) -> float:
        if formula is True:
            return 1.0
        if formula is False:
            return 0.0
        cached = self._memo.get(formula)
        if cached is not None:
            return cached
        if isinstance(formula, Atom):
            value = float(self.priors[formula.id])
        elif isinstance(formula, Not):
            value = 1.0 - self.probability(formula.child)
        else:
            value = self._nary(formula)
        self._memo[formula] = value
        return value

    def _nary(self, formula: And | Or) -> float:
        groups = self._independent_groups(formula.children)
        if len(groups) > 1:
            kind = type(formula)
            parts = [self.probability(group[0] if len(group) == 1 else kind(tuple(group))) for group in groups]
            if kind is And:
                return math.prod(parts)
            return 1.0 - math.prod(1.0 - part for part in parts)
        return self._expand(formula)

    def _independent_groups(self, children: tuple[Formula, ...]) -> list[list[Formula]]:
        """Partition children into connected components of shared atoms, keeping child order."""
        groups: list[tuple[set[str], list[Formula]]] = []
        for child in children:
            child_atoms = set(self.atoms(child))
            merged_atoms, merged_children = child_atoms, [child]
            remaining = []
            for group_atoms, group_children in groups:
                if group_atoms & merged_atoms:
                    merged_atoms = group_atoms | merged_atoms
                    merged_children = group_children + merged_children
                else:
                    remaining.append((group_atoms, group_children))
            remaining.append((merged_atoms, merged_children))
            groups = remaining
        ordered = sorted(groups, key=lambda group: children.index(group[1][0]))
        return [sorted(group_children, key=children.index) for _, group_children in ordered]

    def _expand(self, formula: Formula) -> float:
        pivot = min(self.atoms(formula), key=self.rank.__getitem__)
        p = float(self.priors[pivot])
        high = self.probability(restrict(formula, pivot, True))
        low = self.probability(restrict(formula, pivot, False))
        if high == low:
            return high
        return p * high + (1.0 - p) * low


def restrict(formula: Formula, atom: str, value: bool) -> Residual:
    """
    Fix one atom to a truth value and simplify.

    :return: The residual formula, or ``True``/``False`` once it is decided.
    :rtype: Formula | bool
    """
    if isinstance(formula, Atom):
        return value if formula.id == atom else formula
    if isinstance(formula, Not):
        child = restrict(formula.child, atom, value)
        return (not child) if isinstance(child, bool) else Not(child)
    absorbing = isinstance(formula, Or)
    children = []
    for child in formula.children:
        residual = restrict(child, atom, value)
        if residual is absorbing:
            return absorbing
        if residual is not (not absorbing):
            children.append(residual)
    if not children:
        return not absorbing
    if len(children) == 1:
        return children[0]
    return type(formula)(tuple(children))


def posterior(formula: Formula, priors: Mapping[str, float]) -> float:
    """
    Probability that the formula holds when every atom is independently true with its prior.

    :param formula: The logical form.
    :type formula: Formula
    :param priors: Prior per predicate id; must cover every atom of the formula.
    :type priors: Mapping[str, float]
    :return: The posterior in [0, 1].
    :rtype: float
    :raises MissingPrior: If an atom has no prior.
    """
    order = formula.atoms()
    _check_priors(order, priors)
    return WeightedModelCounter(priors, order).probability(formula)


def _truth_table(formula: Formula, columns: dict[str, np.ndarray]) -> np.ndarray:
    if isinstance(formula, Atom):
        return columns[formula.id]
    if isinstance(formula, Not):
        return ~_truth_table(formula.child, columns)
    reduce = np.logical_and.reduce if isinstance(formula, And) else np.logical_or.reduce
    return reduce([_truth_table(child, columns) for child in formula.children])


def posterior_bruteforce(formula: Formula, priors: Mapping[str, float]) -> float:
    """
    Enumerate all ``2**n`` assignments and sum the weights of the satisfying ones.

    Used as an independent oracle for :func:`posterior`.

    :param formula: The logical form.
    :type formula: Formula
    :param priors: Prior per predicate id.
    :type priors: Mapping[str, float]
    :return: The posterior in [0, 1].
    :rtype: float
    :raises TooManyAtoms: Above ``BRUTEFORCE_MAX_ATOMS`` atoms.
    :raises MissingPrior: If an atom has no prior.
    """
    atoms = formula.atoms()
    if len(atoms) > BRUTEFORCE_MAX_ATOMS:
        raise TooManyAtoms(f"{len(atoms)} atoms, brute force allows at most {BRUTEFORCE_MAX_ATOMS}")
    _check_priors(atoms, priors)
    rows = np.arange(2 ** len(atoms), dtype=np.int64)
    columns = {atom: ((rows >> bit) & 1).astype(bool) for bit, atom in enumerate(atoms)}
    weights = np.ones(rows.shape[0], dtype=np.float64)
    for atom, column in columns.items():
        p = float(priors[atom])
        weights *= np.where(column, p, 1.0 - p)
    satisfied = _truth_table(formula, columns)
    return float(weights[satisfied].sum())


def eval_assignment(formula: Formula, assignment: Mapping[str, bool]) -> bool:
    """
    Evaluate a formula under a complete truth assignment.

    :param formula: The logical form.
    :type formula: Formula
    :param assignment: Truth value per predicate id.
    :type assignment: Mapping[str, bool]
    :return: The truth value of the formula.
    :rtype: bool
    :raises MissingAssignment: If an atom has no truth value.
    """
    if isinstance(formula, Atom):
        if formula.id not in assignment:
            raise MissingAssignment(formula.id)
        return bool(assignment[formula.id])
    if isinstance(formula, Not):
        return not eval_assignment(formula.child, assignment)
    if isinstance(formula, And):
        # evaluate every child so a missing atom is reported regardless of short-circuiting
        return all([eval_assignment(child, assignment) for child in formula.children])
    return any([eval_assignment(child, assignment) for child in formula.children])
