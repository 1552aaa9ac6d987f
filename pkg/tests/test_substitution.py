import itertools

import numpy as np
import pytest

from ruleforge.clustering import EmbeddingTable, hard_assign_table, init_centroids
from ruleforge.logic import Atom, Const, PredicateKind, PredicateSymbol, Var, parse_facts
from ruleforge.substitution import (
    RELATIONS_DEFINED,
    RELATIONS_UNDEFINED,
    SubstitutionError,
    batch_rows,
    build_instance_kb,
    build_latent_kb,
    enumerate_body_atoms,
    expected_space_size,
    instance_rows,
    lookup_row,
    make_training_batch,
    sample_substitutions,
)

BIN = lambda name, kind=PredicateKind.KNOWN: PredicateSymbol(name, 2, kind)
UN = lambda name, kind=PredicateKind.KNOWN: PredicateSymbol(name, 1, kind)


def identity_map(fb):
    return {i: i for i in fb.constants.ids()}


def identity_array(fb):
    return np.arange(len(fb.constants))


# ---------------------------------------------------------------------------
# body-atom space
# ---------------------------------------------------------------------------


def test_space_size_formula_example():
    target = BIN("t", PredicateKind.TARGET)
    preds = [BIN("r1"), target, UN("u1")]
    space = enumerate_body_atoms(preds, d=3, target=target)
    assert space.n == 14 == expected_space_size(2, 1, 3)


def test_space_size_undefined_example():
    space = enumerate_body_atoms([], d=4, mode=RELATIONS_UNDEFINED)
    assert space.n == 9  # C(4,2) + 4 - 1


def test_space_sizes_match_formula_on_100_random_shapes():
    rng = np.random.default_rng(0)
    for _ in range(100):
        nb, nu, d = int(rng.integers(1, 5)), int(rng.integers(0, 4)), int(rng.integers(2, 7))
        binary_target = bool(rng.integers(2)) or nu == 0
        if binary_target:
            target = BIN("t", PredicateKind.TARGET)
            preds = [BIN(f"b{i}") for i in range(nb - 1)] + [target] + [UN(f"u{i}") for i in range(nu)]
        else:
            target = UN("t", PredicateKind.TARGET)
            preds = [BIN(f"b{i}") for i in range(nb)] + [target] + [UN(f"u{i}") for i in range(nu - 1)]
        space = enumerate_body_atoms(preds, d=d, target=target)
        assert space.n == expected_space_size(nb, nu, d)
        assert len(set(space.atoms)) == space.n


def test_predecessor_space_excludes_head_pattern():
    # independent enumeration: all predicate x ordered-variable-pair atoms
    target = BIN("pre", PredicateKind.TARGET)
    preds = [UN("zero"), BIN("succ"), target]
    space = enumerate_body_atoms(preds, d=2, target=target)
    expected = set()
    for pred in preds:
        if pred.arity == 2:
            for i, j in itertools.permutations((1, 2), 2):
                expected.add(Atom(pred, (Var(i), Var(j))))
        else:
            for i in (1, 2):
                expected.add(Atom(pred, (Var(i),)))
    expected.discard(Atom(target, (Var(1), Var(2))))
    assert set(space.atoms) == expected
    assert Atom(target, (Var(2), Var(1))) in space.atoms


def test_space_rejects_small_d():
    target = BIN("t", PredicateKind.TARGET)
    with pytest.raises(SubstitutionError):
        enumerate_body_atoms([target], d=1, target=target)


def test_undefined_space_unique_placeholders():
    space = enumerate_body_atoms([], d=5, mode=RELATIONS_UNDEFINED)
    names = [a.pred.name for a in space.atoms]
    assert len(set(names)) == len(names)
    assert all(a.pred.kind is PredicateKind.PLACEHOLDER for a in space.atoms)
    # pairs first (lexicographic, minus the final pair), then all singletons
    assert space.atoms[0].terms == (Var(1), Var(2))
    assert (Var(4), Var(5)) not in [a.terms for a in space.atoms]
    assert space.atoms[-1].terms == (Var(5),)


# ---------------------------------------------------------------------------
# latent KB
# ---------------------------------------------------------------------------

PRED_TASK = """
#background
zero(0).
succ(0,1).
succ(1,2).
succ(2,3).
#pos
pre(1,0). pre(2,1). pre(3,2).
"""


def test_identity_latent_kb_isomorphic_to_facts():
    fb = parse_facts(PRED_TASK)
    kb = build_latent_kb(fb, identity_map(fb), len(fb.constants))
    facts = {(a.pred.name, *(t.id for t in a.terms)) for a in fb.background | fb.positives}
    assert kb.tuples() == facts


def test_cluster_collision_generalizes():
    fb = parse_facts("#background\nr(a,b). r(c,b).\n#pos\nt(a,b).")
    # a and c share a cluster
    assignment = {fb.constants.id_of("a"): 0, fb.constants.id_of("b"): 1, fb.constants.id_of("c"): 0}
    kb = build_latent_kb(fb, assignment, 2)
    assert kb.tuples() == {("r", 0, 1), ("t", 0, 1)}


def test_missing_embedding_raises():
    fb = parse_facts(PRED_TASK)
    with pytest.raises(SubstitutionError, match="missing"):
        build_latent_kb(fb, {0: 0}, 4)


def test_one_red_instance_kb_matches_feature_partition():
    # noise-free one-red objects, K=9 cells: the instance's cluster set is the
    # set of (shape, color) cells present
    from ruleforge.datasets import FeatureEncoder, encode_object, gen_kandinsky

    ds = gen_kandinsky("kandinsky_one_red", seed=5)
    enc = FeatureEncoder(noise_scale=0.0)
    objs = [o for inst in ds.train for o in inst.objects]
    vecs = {i: encode_object(o, enc, seed=0) for i, o in enumerate(objs)}
    tbl = EmbeddingTable(vecs)
    cents = init_centroids(tbl, 9, seed=0)
    # run a few exact k-means refinements so centers sit on the 9 cells
    for _ in range(20):
        assign = hard_assign_table(tbl, cents)
        for k in range(9):
            members = [vecs[i] for i, a in assign.items() if a == k]
            if members:
                cents.centers[k] = np.mean(members, axis=0)
    assign = hard_assign_table(tbl, cents)
    cell_of = {}
    for i, o in enumerate(objs):
        cell_of.setdefault((o.shape, o.color), set()).add(assign[i])
    # jitter occupies dedicated coordinates, so cells map to disjoint cluster sets
    start = 0
    sets = []
    for inst in ds.train:
        ids = range(start, start + len(inst.objects))
        sets.append({assign[i] for i in ids})
        start += len(inst.objects)
    kb = build_instance_kb(sets, 9)
    for inst, clusters in zip(ds.train, kb.instances):
        expect = {next(iter(cell_of[(o.shape, o.color)])) for o in inst.objects if len(cell_of[(o.shape, o.color)]) == 1}
        assert expect <= clusters


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_positive_assignments_bind_head_to_examples():
    fb = parse_facts(PRED_TASK)
    sub = sample_substitutions(fb, d=2, target=fb.target, batch=64, seed=0)
    pos_pairs = {(int(a), int(b)) for a, b in sub.pos}
    true_pairs = {tuple(t.id for t in a.terms) for a in fb.positives}
    assert pos_pairs <= true_pairs


def test_negative_assignments_never_positive():
    fb = parse_facts(PRED_TASK)
    sub = sample_substitutions(fb, d=2, target=fb.target, batch=256, seed=1)
    true_pairs = {tuple(t.id for t in a.terms) for a in fb.positives}
    assert sub.rejected_negative_keeps == 0
    for row in sub.neg:
        assert (int(row[0]), int(row[1])) not in true_pairs


def test_sampling_deterministic_under_seed():
    fb = parse_facts(PRED_TASK)
    a = sample_substitutions(fb, d=3, target=fb.target, batch=32, seed=9)
    b = sample_substitutions(fb, d=3, target=fb.target, batch=32, seed=9)
    assert np.array_equal(a.pos, b.pos) and np.array_equal(a.neg, b.neg)


def test_forward_chain_auxiliary_adjacent_to_both():
    # grandparent-style graph: positives (top, kid); the middle node is the
    # unique constant adjacent to both
    fb = parse_facts(
        "#background\nparent(a,b). parent(b,c). parent(d,e). parent(e,f).\n#pos\ngp(a,c). gp(d,f)."
    )
    sub = sample_substitutions(fb, d=3, target=fb.target, batch=128, seed=3)
    mid = {fb.constants.id_of("a"): fb.constants.id_of("b"), fb.constants.id_of("d"): fb.constants.id_of("e")}
    for row in sub.pos:
        assert int(row[2]) == mid[int(row[0])]
    # corrupted negatives rarely share a neighbor; they fall back to uniform draws
    assert sub.connected_fallbacks <= sub.batch


def test_unary_target_draws_v2_uniformly():
    fb = parse_facts("#background\nzero(0). succ(0,1). succ(1,2).\n#pos\neven(0). even(2).")
    sub = sample_substitutions(fb, d=2, target=fb.target, batch=200, seed=4)
    xs = {int(v) for v in sub.pos[:, 0]}
    assert xs == {fb.constants.id_of("0"), fb.constants.id_of("2")}
    assert len({int(v) for v in sub.pos[:, 1]}) == len(fb.constants)


def test_empty_positive_set_rejected():
    fb = parse_facts(PRED_TASK)
    fb.positives.clear()
    with pytest.raises(SubstitutionError):
        sample_substitutions(fb, d=2, target=fb.target, batch=4, seed=0)


# ---------------------------------------------------------------------------
# lookup
# ---------------------------------------------------------------------------


def test_lookup_examples_succ_direction():
    fb = parse_facts("#background\nsucc(0,1).\n#pos\npre(1,0).")
    target = fb.predicates["pre"]
    space = enumerate_body_atoms(list(fb.predicates.values()), d=2, target=target)
    kb = build_latent_kb(fb, identity_map(fb), len(fb.constants))
    assignment = {1: fb.constants.id_of("1"), 2: fb.constants.id_of("0")}  # X->1, Y->0
    row = lookup_row(assignment, space, kb, cluster_of=identity_map(fb))
    labels = space.labels()
    assert row[labels.index("succ(Y,X)")] == 1.0
    assert row[labels.index("succ(X,Y)")] == 0.0


def test_identity_lookup_equals_ground_membership_exhaustive():
    # every assignment over <= 5 constants, d <= 3: lookup_row equals direct
    # membership of the ground atom in background + positives
    fb = parse_facts(
        "#background\nr(a,b). r(b,c). u(a). u(d).\n#pos\nt(a,b). t(b,c)."
    )
    target = fb.predicates["t"]
    facts = {(a.pred.name, *(t.id for t in a.terms)) for a in fb.background | fb.positives}
    for d in (2, 3):
        space = enumerate_body_atoms(list(fb.predicates.values()), d=d, target=target)
        kb = build_latent_kb(fb, identity_map(fb), len(fb.constants))
        for combo in itertools.product(fb.constants.ids(), repeat=d):
            assignment = {i + 1: c for i, c in enumerate(combo)}
            row = lookup_row(assignment, space, kb, cluster_of=identity_map(fb))
            for j, atom in enumerate(space.atoms):
                ground = (atom.pred.name, *(assignment[t.index] for t in atom.terms))
                assert row[j] == (1.0 if ground in facts else 0.0)


def test_batch_rows_match_single_lookup():
    fb = parse_facts(PRED_TASK)
    target = fb.predicates["pre"]
    space = enumerate_body_atoms(list(fb.predicates.values()), d=3, target=target)
    kb = build_latent_kb(fb, identity_map(fb), len(fb.constants))
    sub = sample_substitutions(fb, d=3, target=target, batch=16, seed=5)
    x, y = make_training_batch(sub, space, kb, identity_array(fb))
    assert x.shape == (32, space.n) and y.tolist() == [1.0] * 16 + [0.0] * 16
    for r in range(16):
        assignment = {i + 1: int(sub.pos[r, i]) for i in range(3)}
        assert np.array_equal(x[r], lookup_row(assignment, space, kb, cluster_of=identity_map(fb)))


def test_instance_lookup_set_inclusion():
    space = enumerate_body_atoms([], d=3, mode=RELATIONS_UNDEFINED)
    kb = build_instance_kb([{0, 2}], 3)
    row = lookup_row({}, space, kb, instance_clusters=kb.instances[0])
    labels = space.labels()
    # p(V1,V2) needs clusters {0,1}: cluster 1 absent -> 0
    assert row[labels.index("p1(X,Y)")] == 0.0
    # p(V1,V3) needs clusters {0,2}: both present -> 1
    assert row[labels.index("p2(X,V3)")] == 1.0
    assert row[labels.index("p3(X)")] == 1.0


def test_instance_rows_vectorized_matches_lookup():
    space = enumerate_body_atoms([], d=4, mode=RELATIONS_UNDEFINED)
    sets = [{0, 1}, {2}, {0, 1, 2, 3}]
    kb = build_instance_kb(sets, 4)
    presence = np.zeros((3, 4), dtype=bool)
    for i, s in enumerate(sets):
        presence[i, list(s)] = True
    x = instance_rows(presence, space)
    for i, s in enumerate(kb.instances):
        assert np.array_equal(x[i], lookup_row({}, space, kb, instance_clusters=s))
