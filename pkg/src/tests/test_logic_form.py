import itertools
import unittest

import numpy as np

from src.entity.errors import EmptyFormula, FormulaSyntaxError
from src.entity.models import And, Atom, Not, Or
from src.services.inference import eval_assignment
from src.services.logic_form import atoms_of, flatten, format_formula, parse_formula, to_nnf
from src.tests.formulas import random_formula

A, B, C, D = Atom("A"), Atom("B"), Atom("C"), Atom("D")


class TestParseFormula(unittest.TestCase):

    def test_conjunction_with_negation(self):
        self.assertEqual(parse_formula("A & B & C & !D"), And((A, B, C, Not(D))))

    def test_single_atom(self):
        self.assertEqual(parse_formula("A"), A)

    def test_parentheses_override_precedence(self):
        self.assertEqual(parse_formula("A & (B | C)"), And((A, Or((B, C)))))

    def test_and_binds_tighter_than_or(self):
        self.assertEqual(parse_formula("A | B & C"), Or((A, And((B, C)))))

    def test_not_binds_tightest(self):
        self.assertEqual(parse_formula("!A & B"), And((Not(A), B)))
        self.assertEqual(parse_formula("!!A"), Not(Not(A)))

    def test_nested_chains_are_flattened(self):
        self.assertEqual(parse_formula("A & (B & C)"), And((A, B, C)))
        self.assertEqual(parse_formula("(A | B) | (C | D)"), Or((A, B, C, D)))

    def test_whitespace_is_insignificant(self):
        self.assertEqual(parse_formula("  A&(B|C)  "), parse_formula("A & ( B | C )"))

    def test_repeated_atoms_are_allowed(self):
        self.assertEqual(parse_formula("A & !A"), And((A, Not(A))))

    def test_blank_input(self):
        for text in ("", "   ", "\n\t"):
            with self.assertRaises(EmptyFormula):
                parse_formula(text)

    def test_missing_closing_parenthesis(self):
        with self.assertRaises(FormulaSyntaxError) as cm:
            parse_formula("A & (B")
        self.assertEqual(cm.exception.offset, 6)

    def test_unbalanced_closing_parenthesis(self):
        with self.assertRaises(FormulaSyntaxError) as cm:
            parse_formula("A)")
        self.assertEqual(cm.exception.offset, 1)
        self.assertEqual(cm.exception.message, "unbalanced ')'")

    def test_dangling_operator(self):
        with self.assertRaises(FormulaSyntaxError) as cm:
            parse_formula("A &")
        self.assertEqual(cm.exception.offset, 3)

    def test_empty_operand(self):
        with self.assertRaises(FormulaSyntaxError) as cm:
            parse_formula("& A")
        self.assertEqual(cm.exception.offset, 0)
        with self.assertRaises(FormulaSyntaxError):
            parse_formula("A & ()")

    def test_missing_operator(self):
        with self.assertRaises(FormulaSyntaxError) as cm:
            parse_formula("A B")
        self.assertEqual(cm.exception.offset, 2)

    def test_unexpected_character(self):
        with self.assertRaises(FormulaSyntaxError) as cm:
            parse_formula("A # B")
        self.assertEqual(cm.exception.offset, 2)

    def test_offset_counts_utf8_bytes(self):
        # the no-break space takes two bytes
        with self.assertRaises(FormulaSyntaxError) as cm:
            parse_formula("A\u00a0B")
        self.assertEqual(cm.exception.offset, 3)

    def test_tabs_are_whitespace(self):
        self.assertEqual(parse_formula("A\t&\tB"), And((A, B)))
        with self.assertRaises(FormulaSyntaxError) as cm:
            parse_formula("A\t\t# B")
        self.assertEqual(cm.exception.offset, 3)

    def test_syntax_error_is_a_value_error(self):
        with self.assertRaises(ValueError):
            parse_formula("A |")


class TestAtomsOf(unittest.TestCase):

    def test_deduplicates(self):
        self.assertEqual(atoms_of(And((A, Not(A)))), ("A",))

    def test_four_predicates(self):
        self.assertEqual(atoms_of(And((A, B, C, Not(D)))), ("A", "B", "C", "D"))

    def test_keeps_first_occurrence_order(self):
        self.assertEqual(atoms_of(Or((B, A))), ("B", "A"))
        self.assertEqual(atoms_of(parse_formula("C & (A | C) & !B")), ("C", "A", "B"))


class TestToNnf(unittest.TestCase):

    def test_de_morgan(self):
        self.assertEqual(to_nnf(Not(And((A, B)))), Or((Not(A), Not(B))))

    def test_double_negation(self):
        self.assertEqual(to_nnf(Not(Not(A))), A)

    def test_negated_disjunction_with_negated_child(self):
        self.assertEqual(to_nnf(Not(Or((A, Not(B))))), And((Not(A), B)))

    def test_negations_only_on_atoms(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            nnf = to_nnf(random_formula(rng, n_atoms=6, max_depth=5))
            for node in nnf.walk():
                if isinstance(node, Not):
                    self.assertIsInstance(node.child, Atom)

    def test_preserves_semantics(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            formula = random_formula(rng, n_atoms=int(rng.integers(1, 11)), max_depth=4)
            nnf = to_nnf(formula)
            atoms = formula.atoms()
            for values in itertools.product((False, True), repeat=len(atoms)):
                assignment = dict(zip(atoms, values))
                self.assertEqual(eval_assignment(formula, assignment), eval_assignment(nnf, assignment))


class TestFormatFormula(unittest.TestCase):

    def test_negated_atom(self):
        self.assertEqual(format_formula(And((A, Not(D)))), "A & !D")

    def test_disjunction(self):
        self.assertEqual(format_formula(Or((A, B, C))), "A | B | C")

    def test_parenthesizes_disjunction_under_conjunction(self):
        self.assertEqual(format_formula(And((A, Or((B, C))))), "A & (B | C)")

    def test_conjunction_under_disjunction_needs_no_parentheses(self):
        self.assertEqual(format_formula(Or((And((A, B)), C))), "A & B | C")

    def test_negated_compound(self):
        self.assertEqual(format_formula(Not(And((A, B)))), "!(A & B)")
        self.assertEqual(format_formula(Not(Not(A))), "!!A")

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            formula = random_formula(rng, n_atoms=8, max_depth=5)
            self.assertEqual(parse_formula(format_formula(formula)), flatten(formula))


if __name__ == '__main__':
    unittest.main()
