import numpy as np

from src.entity.models import And, Atom, Formula, Not, Or


def random_formula(
        rng: np.random.Generator,
        n_atoms: int = 12,
        max_depth: int = 5,
        negation: bool = True,
) -> Formula:
    """Random formula over atoms ``P0..P{n_atoms-1}``; atoms may repeat."""
    names = [f"P{i}" for i in range(n_atoms)]

    def build(depth: int) -> Formula:
        if depth <= 1 or rng.random() < 0.3:
            return Atom(names[int(rng.integers(n_atoms))])
        choice = rng.random()
        if negation and choice < 0.2:
            return Not(build(depth - 1))
        kind = And if choice < 0.6 else Or
        return kind(tuple(build(depth - 1) for _ in range(int(rng.integers(2, 4)))))

    return build(max_depth)


def random_priors(rng: np.random.Generator, formula: Formula) -> dict[str, float]:
    return {atom: float(rng.random()) for atom in formula.atoms()}
