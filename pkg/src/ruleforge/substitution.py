"""Latent knowledge base, body-atom space, and batched substitution sampling.

The body-atom space fixes the meaning of every network input coordinate: atom
j of the space is the candidate body atom whose truth under a substitution
becomes x_j.  Substitutions bind variables to constants (positives from the
example set, negatives by corrupting the first head variable), and the lookup
runs over cluster ids so that constants generalize to their centroids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ruleforge.logic import Atom, FactBase, PredicateKind, PredicateSymbol, Var

RELATIONS_DEFINED = "relations_defined"
RELATIONS_UNDEFINED = "relations_undefined"


class SubstitutionError(Exception):
    pass


@dataclass(frozen=True)
class BodyAtomSpace:
    mode: str
    d: int
    atoms: tuple[Atom, ...]
    target: PredicateSymbol | None = None

    @property
    def n(self) -> int:
        return len(self.atoms)

    def labels(self) -> list[str]:
        from ruleforge.logic import format_atom

        return [format_atom(a) for a in self.atoms]


def enumerate_body_atoms(
    predicates: list[PredicateSymbol],
    d: int,
    mode: str = RELATIONS_DEFINED,
    target: PredicateSymbol | None = None,
) -> BodyAtomSpace:
    """Ordered candidate body atoms over variables V1..Vd.

    Defined relations: predicates in table order, term tuples lexicographic
    (ordered pairs of distinct variables for binary, singletons for unary),
    minus the target atom in head-variable order.  Undefined relations: one
    fresh placeholder predicate per term list, unordered pairs then singletons,
    minus the final singleton.
    """
    if mode == RELATIONS_DEFINED:
        if target is None:
            raise SubstitutionError("defined-relations mode needs a target")
        if d < target.arity:
            raise SubstitutionError(f"d={d} below target arity {target.arity}")
        head_terms = tuple(Var(i + 1) for i in range(target.arity))
        atoms: list[Atom] = []
        for pred in predicates:
            if pred.arity == 2:
                for i in range(1, d + 1):
                    for j in range(1, d + 1):
                        if i == j:
                            continue
                        atom = Atom(pred, (Var(i), Var(j)))
                        if pred.name == target.name and atom.terms == head_terms:
                            continue
                        atoms.append(atom)
            else:
                for i in range(1, d + 1):
                    atom = Atom(pred, (Var(i),))
                    if pred.name == target.name and atom.terms == head_terms:
                        continue
                    atoms.append(atom)
        return BodyAtomSpace(mode=mode, d=d, atoms=tuple(atoms), target=target)

    if mode == RELATIONS_UNDEFINED:
        term_lists: list[tuple[int, ...]] = []
        for i in range(1, d + 1):
            for j in range(i + 1, d + 1):
                term_lists.append((i, j))
        if d >= 2:
            term_lists.pop()  # the slot the excluded target atom would occupy
        term_lists.extend((i,) for i in range(1, d + 1))
        atoms = []
        for idx, tl in enumerate(term_lists, start=1):
            pred = PredicateSymbol(f"p{idx}", len(tl), PredicateKind.PLACEHOLDER)
            atoms.append(Atom(pred, tuple(Var(i) for i in tl)))
        return BodyAtomSpace(mode=mode, d=d, atoms=tuple(atoms), target=target)

    raise SubstitutionError(f"unknown mode {mode!r}")


def expected_space_size(n_binary: int, n_unary: int, d: int) -> int:
    """Closed-form size of the defined-relations space (target counted in its class)."""
    return n_binary * d * (d - 1) + n_unary * d - 1


# ---------------------------------------------------------------------------
# latent knowledge base
# ---------------------------------------------------------------------------


@dataclass
class LatentKB:
    """Background knowledge over cluster ids.

    Relational mode: per-relation membership tables over cluster tuples.
    Instance mode: one cluster-id set per instance.
    """

    mode: str
    n_clusters: int
    relations: dict[str, np.ndarray] = field(default_factory=dict)  # (K,K) or (K,) bool
    instances: list[frozenset[int]] = field(default_factory=list)

    def holds(self, rel: str, clusters: tuple[int, ...]) -> bool:
        table = self.relations.get(rel)
        if table is None:
            return False
        return bool(table[clusters])

    def tuples(self) -> set[tuple]:
        out = set()
        for rel, table in self.relations.items():
            for idx in np.argwhere(table):
                out.add((rel, *map(int, idx)))
        return out


def build_latent_kb(fb: FactBase, assignment: dict[int, int], n_clusters: int) -> LatentKB:
    """Relational latent KB: one cluster tuple per background or positive fact.

    Positives belong to the knowledge the substitutions are drawn from, so they
    are generalized alongside the background.
    """
    kb = LatentKB(mode=RELATIONS_DEFINED, n_clusters=n_clusters)
    for atom in fb.background | fb.positives:
        ids = tuple(t.id for t in atom.terms)  # type: ignore[union-attr]
        for cid in ids:
            if cid not in assignment:
                raise SubstitutionError(f"missing embedding/cluster for constant id {cid}")
        clusters = tuple(assignment[c] for c in ids)
        table = kb.relations.get(atom.pred.name)
        if table is None:
            shape = (n_clusters,) * atom.pred.arity
            table = np.zeros(shape, dtype=bool)
            kb.relations[atom.pred.name] = table
        table[clusters] = True
    return kb


def build_instance_kb(instance_clusters: list[set[int]], n_clusters: int) -> LatentKB:
    return LatentKB(
        mode=RELATIONS_UNDEFINED,
        n_clusters=n_clusters,
        instances=[frozenset(s) for s in instance_clusters],
    )


# ---------------------------------------------------------------------------
# substitution sampling (positives from examples, negatives by corruption)
# ---------------------------------------------------------------------------


@dataclass
class SubstitutionBatch:
    pos: np.ndarray  # (batch, d) constant ids
    neg: np.ndarray  # (batch, d) constant ids
    connected_fallbacks: int = 0
    rejected_negative_keeps: int = 0

    @property
    def batch(self) -> int:
        return self.pos.shape[0]


def _adjacency(fb: FactBase) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {}
    for atom in fb.background | fb.positives:
        if atom.pred.arity != 2:
            continue
        a, b = (t.id for t in atom.terms)  # type: ignore[union-attr]
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    return adj


def sample_substitutions(
    fb: FactBase,
    d: int,
    target: PredicateSymbol,
    batch: int,
    seed: int | np.random.Generator,
    max_neg_retries: int = 20,
    walk_prob: float = 0.5,
) -> SubstitutionBatch:
    """Positive/negative variable assignments for one training batch.

    Positives bind the head variables to a positive example's constants and
    auxiliaries over the table.  Negatives replace the first head variable
    with a different constant, resampling up to ``max_neg_retries`` times if
    the corrupted tuple is itself a positive.  For binary targets with d = 3
    the auxiliary is drawn from constants adjacent to both head constants
    (forward-chain pattern) whenever that set is nonempty; every other free
    variable follows the same connectivity bias with probability
    ``walk_prob`` (drawn from the neighborhood of an already-bound variable),
    and falls back to a uniform draw otherwise.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    positives = sorted(
        (tuple(t.id for t in a.terms) for a in fb.positives if a.pred.name == target.name)
    )
    if not positives:
        raise SubstitutionError("no positive examples to sample from")
    n_const = len(fb.constants)
    if n_const < 2:
        raise SubstitutionError("need at least two constants")
    if d < max(target.arity, 2):
        raise SubstitutionError(f"d={d} too small for target arity {target.arity}")
    pos_set = set(positives)
    forward_chain = target.arity == 2 and d == 3
    adj = _adjacency(fb)
    adj_arr = {c: np.fromiter(sorted(s), dtype=int) for c, s in adj.items()}
    connected_cache: dict[tuple[int, int], np.ndarray] = {}

    def connected(x: int, y: int) -> np.ndarray:
        key = (x, y)
        got = connected_cache.get(key)
        if got is None:
            got = np.fromiter(sorted(adj.get(x, set()) & adj.get(y, set())), dtype=int)
            connected_cache[key] = got
        return got

    def walk_or_uniform(bound: list[int]) -> int:
        if rng.random() < walk_prob:
            anchor = bound[rng.integers(len(bound))]
            nbrs = adj_arr.get(anchor)
            if nbrs is not None and nbrs.size:
                return int(nbrs[rng.integers(nbrs.size)])
        return int(rng.integers(n_const))

    pos_rows = np.empty((batch, d), dtype=int)
    neg_rows = np.empty((batch, d), dtype=int)
    fallbacks = 0
    kept_bad = 0
    choice_idx = rng.integers(len(positives), size=batch)
    for row in range(batch):
        example = positives[choice_idx[row]]
        if target.arity == 2:
            x, y = example
        else:
            (x,) = example
            y = walk_or_uniform([x])  # V2 is a free draw for unary targets
        x_neg = None
        for attempt in range(max_neg_retries):
            cand = int(rng.integers(n_const))
            if cand == x:
                continue
            bad = ((cand, y) in pos_set) if target.arity == 2 else ((cand,) in pos_set)
            if not bad:
                x_neg = cand
                break
        if x_neg is None:
            kept_bad += 1
            cand = int(rng.integers(n_const))
            x_neg = cand if cand != x else (cand + 1) % n_const
        pos_rows[row, 0], pos_rows[row, 1] = x, y
        neg_rows[row, 0], neg_rows[row, 1] = x_neg, y
        for v in range(2, d):
            if forward_chain and v == 2:
                cand_pos = connected(x, y)
                if cand_pos.size:
                    pos_rows[row, v] = cand_pos[rng.integers(cand_pos.size)]
                else:
                    fallbacks += 1
                    pos_rows[row, v] = int(rng.integers(n_const))
                cand_neg = connected(x_neg, y)
                if cand_neg.size:
                    neg_rows[row, v] = cand_neg[rng.integers(cand_neg.size)]
                else:
                    fallbacks += 1
                    neg_rows[row, v] = int(rng.integers(n_const))
            else:
                pos_rows[row, v] = walk_or_uniform([int(c) for c in pos_rows[row, :v]])
                neg_rows[row, v] = walk_or_uniform([int(c) for c in neg_rows[row, :v]])
    return SubstitutionBatch(
        pos=pos_rows, neg=neg_rows, connected_fallbacks=fallbacks, rejected_negative_keeps=kept_bad
    )


# ---------------------------------------------------------------------------
# lookup
# ---------------------------------------------------------------------------


def lookup_row(assignment: dict[int, int], space: BodyAtomSpace, kb: LatentKB,
               cluster_of: dict[int, int] | None = None,
               instance_clusters: frozenset[int] | None = None) -> np.ndarray:
    """Truth row of every space atom under one substitution.

    Defined relations: assignment maps variables to constant ids, generalized
    through ``cluster_of`` before the membership check.  Undefined relations:
    constrained variable i stands for cluster i, and an atom holds when every
    cluster in its term list occurs in the instance's cluster set.
    """
    row = np.zeros(space.n)
    if space.mode == RELATIONS_DEFINED:
        if cluster_of is None:
            raise SubstitutionError("defined-relations lookup needs a cluster map")
        for j, atom in enumerate(space.atoms):
            clusters = tuple(cluster_of[assignment[t.index]] for t in atom.terms)  # type: ignore[union-attr]
            row[j] = 1.0 if kb.holds(atom.pred.name, clusters) else 0.0
        return row
    if instance_clusters is None:
        raise SubstitutionError("instance lookup needs the instance's cluster set")
    for j, atom in enumerate(space.atoms):
        clusters = [t.index - 1 for t in atom.terms]  # constrained variable i <-> cluster i-1
        row[j] = 1.0 if all(c in instance_clusters for c in clusters) else 0.0
    return row


def batch_rows(rows: np.ndarray, space: BodyAtomSpace, kb: LatentKB, cluster_of: np.ndarray) -> np.ndarray:
    """Vectorized lookup for (batch, d) constant-id assignments."""
    g = cluster_of[rows]  # (batch, d) cluster ids
    x = np.zeros((rows.shape[0], space.n))
    for j, atom in enumerate(space.atoms):
        table = kb.relations.get(atom.pred.name)
        if table is None:
            continue
        idx = tuple(g[:, t.index - 1] for t in atom.terms)  # type: ignore[union-attr]
        x[:, j] = table[idx]
    return x


def make_training_batch(
    sub: SubstitutionBatch, space: BodyAtomSpace, kb: LatentKB, cluster_of: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Stack positive and negative substitution rows into (X, y)."""
    xp = batch_rows(sub.pos, space, kb, cluster_of)
    xn = batch_rows(sub.neg, space, kb, cluster_of)
    x = np.concatenate([xp, xn], axis=0)
    y = np.concatenate([np.ones(sub.batch), np.zeros(sub.batch)])
    return x, y


def instance_rows(presence: np.ndarray, space: BodyAtomSpace) -> np.ndarray:
    """Instance-mode lookup: presence is a (n_instances, K) boolean matrix."""
    if space.mode != RELATIONS_UNDEFINED:
        raise SubstitutionError("instance_rows needs an undefined-relations space")
    x = np.ones((presence.shape[0], space.n))
    for j, atom in enumerate(space.atoms):
        for t in atom.terms:
            x[:, j] *= presence[:, t.index - 1]
    return x
