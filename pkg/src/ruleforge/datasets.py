"""Deterministic benchmark generators.

Three families:

* classical relational tasks (arithmetic chains, lists, family trees, graphs),
  each shipped as a train fact base plus an evaluation fact base whose extra
  constants never appear during training;
* the label-sequence task (digit images at indexed positions, symbolic form)
  whose constants carry latent class labels for the clustering path;
* synthetic Kandinsky instances: bags of colored shapes with a boolean
  instance label and a feature-vector encoder standing in for an image model.

The husband/uncle tasks load from bundled kinship files rather than a
generator; see tools/make_kinship.py for how those files were produced.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ruleforge.logic import FactBase, parse_facts

SHAPES = ("circle", "square", "triangle")
COLORS = ("red", "blue", "yellow")


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class TaskSpec:
    name: str
    size: int | None = None
    seed: int = 0


@dataclass
class SymbolicTask:
    """A classical task: training facts, an unseen-constant evaluation split, gold rules."""

    name: str
    train: FactBase
    eval: FactBase
    gold: str
    expected_learned: str | None = None
    embedding_labels: dict[int, int] | None = None


@dataclass(frozen=True)
class ObjectRecord:
    shape: str
    color: str
    jitter: tuple[float, float]

    def __post_init__(self) -> None:
        if self.shape not in SHAPES or self.color not in COLORS:
            raise DatasetError(f"bad object ({self.shape}, {self.color})")


@dataclass
class KandinskyInstance:
    label: bool
    objects: list[ObjectRecord]


@dataclass
class KandinskyDataset:
    name: str
    train: list[KandinskyInstance]
    test: list[KandinskyInstance]


@dataclass(frozen=True)
class FeatureEncoder:
    dim: int = 8
    noise_scale: float = 0.0


SYMBOLIC_TASKS = (
    "predecessor",
    "even",
    "odd",
    "lessthan",
    "fizz",
    "buzz",
    "member",
    "length",
    "son",
    "grandparent",
    "husband",
    "uncle",
    "relatedness",
    "father",
    "undirected_edge",
    "adjacent_to_red",
    "two_children",
    "graph_coloring",
    "connectedness",
    "cyclic",
)
KANDINSKY_TASKS = ("kandinsky_two_pair", "kandinsky_one_red", "kandinsky_one_triangle")

# (constants, relations) in the training split, per the benchmark catalog
TASK_CATALOG = {
    "predecessor": (10, 3),
    "odd": (10, 3),
    "even": (10, 3),
    "lessthan": (10, 3),
    "fizz": (7, 3),
    "buzz": (10, 3),
    "member": (8, 3),
    "length": (8, 3),
    "son": (9, 4),
    "grandparent": (9, 3),
    "husband": (2102, 12),
    "uncle": (2102, 12),
    "relatedness": (8, 2),
    "father": (6, 5),
    "undirected_edge": (4, 2),
    "adjacent_to_red": (7, 5),
    "two_children": (5, 2),
    "graph_coloring": (8, 3),
    "connectedness": (4, 2),
    "cyclic": (6, 3),
}


class _Builder:
    """Accumulates fact lines for a train split and an unseen-constant extension."""

    def __init__(self) -> None:
        self.bg: list[str] = []
        self.pos: list[str] = []
        self.ext_bg: list[str] = []
        self.ext_pos: list[str] = []

    def fact(self, pred, *args, ext=False):
        (self.ext_bg if ext else self.bg).append(f"{pred}({','.join(map(str, args))}).")

    def positive(self, pred, *args, ext=False):
        (self.ext_pos if ext else self.pos).append(f"{pred}({','.join(map(str, args))}).")

    def build(self, name, gold, expected_learned=None, labels=None):
        train_text = "#background\n" + "\n".join(self.bg) + "\n#pos\n" + "\n".join(self.pos)
        eval_text = (
            "#background\n" + "\n".join(self.bg + self.ext_bg)
            + "\n#pos\n" + "\n".join(self.pos + self.ext_pos)
        )
        return SymbolicTask(
            name=name,
            train=parse_facts(train_text),
            eval=parse_facts(eval_text),
            gold=gold,
            expected_learned=expected_learned,
            embedding_labels=labels,
        )


# ---------------------------------------------------------------------------
# arithmetic chains
# ---------------------------------------------------------------------------


def _chain(b: _Builder, n_train: int, n_eval: int) -> None:
    b.fact("zero", 0)
    for i in range(n_train - 1):
        b.fact("succ", i, i + 1)
    for i in range(n_train - 1, n_eval - 1):
        b.fact("succ", i, i + 1, ext=True)


def _gen_predecessor(n=10):
    b = _Builder()
    _chain(b, n, n + 5)
    for i in range(n - 1):
        b.positive("pre", i + 1, i)
    for i in range(n - 1, n + 4):
        b.positive("pre", i + 1, i, ext=True)
    return b.build("predecessor", "pre(X,Y) :- succ(Y,X)")


def _gen_even(n=10):
    b = _Builder()
    _chain(b, n, 2 * n)
    for i in range(0, n, 2):
        b.positive("even", i)
    for i in range(n, 2 * n, 2):
        b.positive("even", i, ext=True)
    return b.build("even", "even(X) :- zero(X)\neven(X) :- even(Y), succ(Y,Z), succ(Z,X)")


def _gen_odd(n=10):
    b = _Builder()
    _chain(b, n, 2 * n)
    for i in range(1, n, 2):
        b.positive("odd", i)
    for i in range(n + 1, 2 * n, 2):
        b.positive("odd", i, ext=True)
    return b.build("odd", "odd(X) :- zero(Y), succ(Y,X)\nodd(X) :- odd(Y), succ(Y,Z), succ(Z,X)")


def _gen_lessthan(n=10):
    b = _Builder()
    _chain(b, n, n + 5)
    for i in range(n):
        for j in range(i + 1, n):
            b.positive("lessthan", i, j)
    for j in range(n, n + 5):
        for i in range(j):
            b.positive("lessthan", i, j, ext=True)
    return b.build("lessthan", "lessthan(X,Y) :- succ(X,Y)\nlessthan(X,Y) :- lessthan(X,Z), succ(Z,Y)")


_FIZZ_PARTIAL = "fizz(X) :- zero(X)\nfizz(X) :- succ(Z,Y), fizz(Y), succ(Z,X)"
_BUZZ_PARTIAL = "buzz(X) :- zero(X)\nbuzz(X) :- succ(Z,Y), buzz(Y), succ(Z,X)"


def _gen_fizz(n=7):
    b = _Builder()
    _chain(b, n, 2 * n - 1)
    for i in range(0, n, 3):
        b.positive("fizz", i)
    for i in range(n + (3 - n % 3) % 3, 2 * n - 1, 3):
        b.positive("fizz", i, ext=True)
    gold = "fizz(X) :- zero(X)\nfizz(X) :- fizz(Y), succ(Y,V3), succ(V3,V4), succ(V4,X)"
    return b.build("fizz", gold, expected_learned=_FIZZ_PARTIAL)


def _gen_buzz(n=10):
    b = _Builder()
    _chain(b, n, 2 * n)
    for i in range(0, n, 5):
        b.positive("buzz", i)
    for i in range(n + (5 - n % 5) % 5, 2 * n, 5):
        b.positive("buzz", i, ext=True)
    gold = (
        "buzz(X) :- zero(X)\n"
        "buzz(X) :- buzz(Y), succ(Y,V3), succ(V3,V4), succ(V4,V5), succ(V5,V6), succ(V6,X)"
    )
    return b.build("buzz", gold, expected_learned=_BUZZ_PARTIAL)


# ---------------------------------------------------------------------------
# lists
# ---------------------------------------------------------------------------


def _gen_member(n=4):
    # one linked list c1 -> ... -> cn, cell ci holding value vi
    b = _Builder()
    for i in range(1, n + 1):
        b.fact("value", f"c{i}", f"v{i}")
        if i < n:
            b.fact("next", f"c{i}", f"c{i+1}")
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            b.positive("member", f"v{j}", f"c{i}")
    b.fact("next", f"c{n}", f"c{n+1}", ext=True)
    b.fact("value", f"c{n+1}", f"v{n+1}", ext=True)
    for i in range(1, n + 2):
        b.positive("member", f"v{n+1}", f"c{i}", ext=True)
    return b.build("member", "member(X,Y) :- value(Y,X)\nmember(X,Y) :- next(Y,Z), member(X,Z)")


def _gen_length(n=4):
    # descending lists: list ck is [k, k-1, ..., 1], so its head equals its length
    b = _Builder()
    for k in range(1, n + 1):
        b.fact("head", f"c{k}", k)
        if k > 1:
            b.fact("tail", f"c{k}", f"c{k-1}")
    for k in range(1, n + 1):
        b.positive("length", f"c{k}", k)
    b.fact("head", f"c{n+1}", n + 1, ext=True)
    b.fact("tail", f"c{n+1}", f"c{n}", ext=True)
    b.positive("length", f"c{n+1}", n + 1, ext=True)
    return b.build("length", "length(X,Y) :- head(X,Y)")


# ---------------------------------------------------------------------------
# family trees
# ---------------------------------------------------------------------------


def _gen_son():
    b = _Builder()
    families = [
        ("adam", "betty", [("carl", "m"), ("dora", "f")]),
        ("evan", "fiona", [("george", "m"), ("hugo", "m"), ("iris", "f")]),
    ]
    ext_families = [("jack", "karen", [("liam", "m")])]

    def emit(fams, ext):
        for dad, mom, kids in fams:
            b.fact("male", dad, ext=ext)
            for kid, sex in kids:
                b.fact("father", dad, kid, ext=ext)
                b.fact("mother", mom, kid, ext=ext)
                if sex == "m":
                    b.fact("male", kid, ext=ext)
                    b.positive("son", kid, dad, ext=ext)
                    b.positive("son", kid, mom, ext=ext)

    emit(families, False)
    emit(ext_families, True)
    return b.build("son", "son(X,Y) :- father(Y,X), male(X)\nson(X,Y) :- mother(Y,X), male(X)")


def _gen_grandparent():
    b = _Builder()
    chains = [("al", "bo", ["cy", "di"]), ("ed", "fay", ["gus"])]
    for top, mid, kids in chains:
        b.fact("parent", top, mid)
        for k in kids:
            b.fact("parent", mid, k)
            b.positive("grandparent", top, k)
    b.fact("sibling", "cy", "di")
    b.fact("sibling", "di", "cy")
    b.fact("parent", "hal", "ivy")
    b.fact("parent", "jo", "ki", ext=True)
    b.fact("parent", "ki", "lu", ext=True)
    b.positive("grandparent", "jo", "lu", ext=True)
    return b.build("grandparent", "grandparent(X,Y) :- parent(X,Z), parent(Z,Y)")


def _gen_relatedness():
    # related(x, y) holds for every ordered pair in the same tree, self included
    b = _Builder()
    trees = [[("a", "b"), ("a", "c"), ("c", "d")], [("e", "f"), ("e", "g"), ("g", "h")]]
    ext_trees = [[("i", "j"), ("i", "k")]]

    def emit(tree, ext):
        nodes = sorted({n for e in tree for n in e})
        for p, c in tree:
            b.fact("parent", p, c, ext=ext)
        for x in nodes:
            for y in nodes:
                b.positive("related", x, y, ext=ext)

    for t in trees:
        emit(t, False)
    for t in ext_trees:
        emit(t, True)
    gold = (
        "related(X,Y) :- parent(X,Y)\n"
        "related(X,Y) :- parent(Y,X)\n"
        "related(X,Y) :- related(X,Z), related(Z,Y)"
    )
    return b.build("relatedness", gold)


def _gen_father():
    b = _Builder()
    b.fact("male", "tom"); b.fact("male", "bob"); b.fact("male", "sam")
    b.fact("female", "ann"); b.fact("female", "eve"); b.fact("female", "joy")
    for kid in ("bob", "eve"):
        b.fact("parent", "tom", kid)
        b.fact("parent", "ann", kid)
    for a, z in [("tom", "ann"), ("ann", "tom"), ("sam", "joy"), ("joy", "sam")]:
        b.fact("spouse", a, z)
    b.positive("father", "tom", "bob")
    b.positive("father", "tom", "eve")
    b.fact("male", "rex", ext=True); b.fact("female", "gia", ext=True); b.fact("male", "leo", ext=True)
    b.fact("parent", "rex", "leo", ext=True)
    b.fact("parent", "gia", "leo", ext=True)
    b.positive("father", "rex", "leo", ext=True)
    return b.build("father", "father(X,Y) :- parent(X,Y), male(X)")


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------


def _gen_undirected_edge():
    b = _Builder()
    for u, v in [("n1", "n2"), ("n3", "n4")]:
        b.fact("edge", u, v)
        b.positive("ue", u, v)
        b.positive("ue", v, u)
    b.fact("edge", "n5", "n6", ext=True)
    b.positive("ue", "n5", "n6", ext=True)
    b.positive("ue", "n6", "n5", ext=True)
    return b.build("undirected_edge", "ue(X,Y) :- edge(X,Y)\nue(X,Y) :- edge(Y,X)")


def _gen_adjacent_to_red():
    b = _Builder()
    colors = {"n1": "red", "n2": "green", "n3": "blue", "n4": "blue", "n5": "red", "n6": "green", "n7": "blue"}
    for node, c in colors.items():
        b.fact(c, node)
    edges = [("n2", "n1"), ("n3", "n1"), ("n4", "n5"), ("n6", "n7"), ("n7", "n6"), ("n1", "n3")]
    for u, v in edges:
        b.fact("edge", u, v)
        if colors[v] == "red":
            b.positive("adjacent_to_red", u)
    b.fact("red", "n8", ext=True)
    b.fact("blue", "n9", ext=True)
    b.fact("edge", "n9", "n8", ext=True)
    b.positive("adjacent_to_red", "n9", ext=True)
    return b.build("adjacent_to_red", "adjacent_to_red(X) :- edge(X,Y), red(Y)")


def _gen_two_children():
    # labels are "has at least two children"; generated graphs additionally
    # guarantee that exactly the two-child nodes have grandchildren, which is
    # what a definite clause over a single edge relation can express
    b = _Builder()

    def family(r, c1, c2, g1, g2, ext):
        for u, v in [(r, c1), (r, c2), (c1, g1), (c2, g2)]:
            b.fact("edge", u, v, ext=ext)
        b.positive("tc", r, ext=ext)

    family("r", "c1", "c2", "g1", "g2", False)
    family("r2", "c3", "c4", "g3", "g4", True)
    return b.build("two_children", "tc(X) :- edge(X,Y), edge(Y,Z)")


def _gen_graph_coloring():
    b = _Builder()
    colors = {"n1": "red", "n2": "red", "n3": "green", "n4": "blue", "n5": "blue"}
    for node, c in colors.items():
        b.fact("colour", node, c)
    for u, v in [("n1", "n2"), ("n2", "n3"), ("n3", "n4"), ("n4", "n5")]:
        b.fact("edge", u, v)
        if colors[u] == colors[v]:
            b.positive("gc", u)
    b.fact("colour", "n6", "green", ext=True)
    b.fact("colour", "n7", "green", ext=True)
    b.fact("edge", "n6", "n7", ext=True)
    b.positive("gc", "n6", ext=True)
    return b.build("graph_coloring", "gc(X) :- edge(X,Y), colour(X,Z), colour(Y,Z)")


def _gen_connectedness():
    b = _Builder()
    for u, v in [("n1", "n2"), ("n2", "n3"), ("n4", "n1")]:
        b.fact("edge", u, v)
    for u, v in [("n1", "n2"), ("n2", "n3"), ("n1", "n3"), ("n4", "n1"), ("n4", "n2"), ("n4", "n3")]:
        b.positive("conn", u, v)
    for u, v in [("n3", "n5"), ("n5", "n6")]:
        b.fact("edge", u, v, ext=True)
    for u, v in [
        ("n1", "n5"), ("n2", "n5"), ("n3", "n5"), ("n4", "n5"),
        ("n1", "n6"), ("n2", "n6"), ("n3", "n6"), ("n4", "n6"), ("n5", "n6"),
    ]:
        b.positive("conn", u, v, ext=True)
    return b.build("connectedness", "conn(X,Y) :- edge(X,Y)\nconn(X,Y) :- conn(X,Z), edge(Z,Y)")


def _gen_cyclic():
    b = _Builder()
    cycle = ["n1", "n2", "n3"]
    chain = ["n4", "n5", "n6"]
    for i, u in enumerate(cycle):
        b.fact("edge", u, cycle[(i + 1) % 3])
    for u, v in zip(chain, chain[1:]):
        b.fact("edge", u, v)
    for u in cycle:
        for v in cycle:
            b.fact("conn", u, v)
        b.positive("cyclic", u)
    for u, v in [("n4", "n5"), ("n5", "n6"), ("n4", "n6")]:
        b.fact("conn", u, v)
    b.fact("edge", "n7", "n8", ext=True)
    b.fact("edge", "n8", "n7", ext=True)
    for u, v in [("n7", "n8"), ("n8", "n7"), ("n7", "n7"), ("n8", "n8")]:
        b.fact("conn", u, v, ext=True)
    b.positive("cyclic", "n7", ext=True)
    b.positive("cyclic", "n8", ext=True)
    return b.build("cyclic", "cyclic(X) :- conn(X,Y), conn(Y,X)")


# ---------------------------------------------------------------------------
# label-sequence task (digit images at indexed positions, symbolic form)
# ---------------------------------------------------------------------------


def sequence_label(position: int) -> int:
    """Label of the image at 1-based position: 0,5,1,5,2,5,3,5,..."""
    return 5 if position % 2 == 0 else (position - 1) // 2


def gen_mnist_sequence(prefix_len: int = 12, target_parity: str = "even_index") -> SymbolicTask:
    """Sequence task: per-position constants, label successorship, positional gaps.

    ``succ(a, b)`` holds when label(b) = label(a) + 1, ``before_n(a, b)`` when b
    sits n positions after a (n = 1..10), ``start(a)`` at position 1.  Targets
    are the even- or odd-indexed positions.  Constants carry their labels for
    the embedding path.
    """
    if prefix_len < 4:
        raise DatasetError("prefix_len must be >= 4")
    if target_parity not in ("even_index", "odd_index"):
        raise DatasetError(f"bad parity {target_parity!r}")
    positions = list(range(1, prefix_len + 1))
    labels = {p: sequence_label(p) for p in positions}
    b = _Builder()
    b.fact("start", "p1")
    for a in positions:
        for z in positions:
            if labels[z] == labels[a] + 1:
                b.fact("succ", f"p{a}", f"p{z}")
    for n in range(1, 11):
        for a in positions:
            if a + n <= prefix_len:
                b.fact("before_%d" % n, f"p{a}", f"p{a+n}")
    want = 0 if target_parity == "even_index" else 1
    for p in positions:
        if p % 2 == want:
            b.positive("target", f"p{p}")
    expected = (
        "target(X) :- succ(X,Y), before_2(X,Y), target(Y)"
        if target_parity == "odd_index"
        else "target(X) :- before_8(X,Y), before_10(X,Y), target(Y)"
    )
    task = b.build(f"mnist_sequence_{target_parity}", gold="", expected_learned=expected)
    task.embedding_labels = {task.train.constants.id_of(f"p{p}"): labels[p] for p in positions}
    return task


# ---------------------------------------------------------------------------
# Kandinsky patterns
# ---------------------------------------------------------------------------


def has_pair(objects, same_shape, same_color, exclude=()):
    n = len(objects)
    for i in range(n):
        for j in range(i + 1, n):
            if i in exclude or j in exclude:
                continue
            o1, o2 = objects[i], objects[j]
            if (o1.shape == o2.shape) == same_shape and (o1.color == o2.color) == same_color:
                yield (i, j)


def check_one_red(objects) -> bool:
    return any(o.color == "red" for o in objects)


def check_one_triangle(objects) -> bool:
    return any(o.shape == "triangle" for o in objects)


def check_two_pair(objects) -> bool:
    """Two disjoint same-shape pairs: one sharing color, the other differing."""
    for a in has_pair(objects, same_shape=True, same_color=True):
        for z in has_pair(objects, same_shape=True, same_color=False, exclude=a):
            return True
    return False


def _has_ssdc(objects) -> bool:
    return next(has_pair(objects, same_shape=True, same_color=False), None) is not None


def _rand_object(rng, shapes=SHAPES, colors=COLORS) -> ObjectRecord:
    return ObjectRecord(
        shape=shapes[rng.integers(len(shapes))],
        color=colors[rng.integers(len(colors))],
        jitter=(float(rng.uniform(-0.05, 0.05)), float(rng.uniform(-0.05, 0.05))),
    )


def _gen_unary_kandinsky(rng, n_instances, checker, force_feature):
    """Balanced positives/negatives for a `some object has feature F` pattern.

    The forced object cycles through its free feature so every relevant cell
    shows up across the positives.
    """
    out = []
    cycle = 0
    for k in range(n_instances):
        want_positive = k % 2 == 0
        while True:
            objs = [_rand_object(rng) for _ in range(int(rng.integers(2, 7)))]
            if want_positive and not checker(objs):
                objs[rng.integers(len(objs))] = force_feature(objs, rng, cycle)
                cycle += 1
            if checker(objs) == want_positive:
                break
        out.append(KandinskyInstance(label=want_positive, objects=objs))
    return out


def _cells(instances) -> set[tuple[str, str]]:
    return {(o.shape, o.color) for inst in instances for o in inst.objects}


def _gen_two_pair_instances(rng, n_instances, hard_fraction=0.5):
    out = []
    for k in range(n_instances):
        want_positive = k % 2 == 0
        if want_positive:
            while True:
                shape_a, shape_b = SHAPES[rng.integers(3)], SHAPES[rng.integers(3)]
                color_a = COLORS[rng.integers(3)]
                cb1, cb2 = rng.choice(3, size=2, replace=False)
                objs = [
                    ObjectRecord(shape_a, color_a, _jit(rng)),
                    ObjectRecord(shape_a, color_a, _jit(rng)),
                    ObjectRecord(shape_b, COLORS[cb1], _jit(rng)),
                    ObjectRecord(shape_b, COLORS[cb2], _jit(rng)),
                ]
                rng.shuffle(objs)
                objs = list(objs)
                if check_two_pair(objs):
                    break
        else:
            # half the negatives still contain a same-shape different-color
            # pair (hard), the rest do not (easy)
            hard = rng.random() < hard_fraction
            while True:
                if hard:
                    objs = [_rand_object(rng) for _ in range(4)]
                else:
                    color = COLORS[rng.integers(3)]
                    objs = [_rand_object(rng, colors=(color,)) for _ in range(4)]
                if check_two_pair(objs):
                    continue
                if _has_ssdc(objs) == hard:
                    break
        out.append(KandinskyInstance(label=want_positive, objects=objs))
    return out


def _jit(rng):
    return (float(rng.uniform(-0.05, 0.05)), float(rng.uniform(-0.05, 0.05)))


def gen_kandinsky(name: str, seed: int, n_train: int = 30, n_test: int = 30) -> KandinskyDataset:
    rng = np.random.default_rng(seed)
    if name == "kandinsky_one_red":
        make = lambda n: _gen_unary_kandinsky(
            rng, n, check_one_red,
            lambda objs, r, cyc: ObjectRecord(SHAPES[cyc % 3], "red", _jit(r)),
        )
    elif name == "kandinsky_one_triangle":
        make = lambda n: _gen_unary_kandinsky(
            rng, n, check_one_triangle,
            lambda objs, r, cyc: ObjectRecord("triangle", COLORS[cyc % 3], _jit(r)),
        )
    elif name == "kandinsky_two_pair":
        make = lambda n: _gen_two_pair_instances(rng, n)
    else:
        raise DatasetError(f"unknown Kandinsky task {name!r}")
    # resample until the training split exposes every (shape, color) cell, so
    # held-out objects always have a matching cluster to land in
    for _ in range(50):
        train = make(n_train)
        test = make(n_test)
        if len(_cells(train)) == 9 and _cells(test) <= _cells(train):
            return KandinskyDataset(name=name, train=train, test=test)
    raise DatasetError(f"could not cover all feature cells for {name}")


KANDINSKY_CHECKERS = {
    "kandinsky_one_red": check_one_red,
    "kandinsky_one_triangle": check_one_triangle,
    "kandinsky_two_pair": check_two_pair,
}


def encode_object(obj: ObjectRecord, enc: FeatureEncoder, seed: int) -> np.ndarray:
    """one-hot(shape) + one-hot(color) + jitter, plus seeded Gaussian noise."""
    vec = np.zeros(enc.dim)
    vec[SHAPES.index(obj.shape)] = 1.0
    vec[3 + COLORS.index(obj.color)] = 1.0
    vec[6] = obj.jitter[0]
    vec[7] = obj.jitter[1]
    if enc.noise_scale > 0:
        vec = vec + np.random.default_rng(seed).normal(0.0, enc.noise_scale, size=enc.dim)
    if not np.all(np.isfinite(vec)):
        raise DatasetError("non-finite encoding")
    return vec


# ---------------------------------------------------------------------------
# bundled kinship corpus (husband / uncle)
# ---------------------------------------------------------------------------


def _load_kinship_task(target: str) -> SymbolicTask:
    data = resources.files("ruleforge.data").joinpath("kinship.facts").read_text()
    all_lines = [ln for ln in data.splitlines() if ln.strip() and not ln.startswith("%")]
    target_lines = sorted(ln for ln in all_lines if ln.startswith(target + "("))
    bg_lines = [ln for ln in all_lines if not ln.startswith(target + "(")]
    # fixed 80/20 split; the bundled task is the same for every caller
    rng = np.random.default_rng(1234)
    order = rng.permutation(len(target_lines))
    cut = int(round(0.8 * len(target_lines)))
    train_pos = [target_lines[i] for i in sorted(order[:cut])]
    test_pos = [target_lines[i] for i in sorted(order[cut:])]
    train_text = "#background\n" + "\n".join(bg_lines) + "\n#pos\n" + "\n".join(train_pos)
    eval_text = "#background\n" + "\n".join(bg_lines) + "\n#pos\n" + "\n".join(train_pos + test_pos)
    gold = {
        "husband": "husband(X,Y) :- wife(Y,X)",
        "uncle": "uncle(X,Y) :- brother(X,Z), father(Z,Y)\nuncle(X,Y) :- brother(X,Z), mother(Z,Y)",
    }[target]
    return SymbolicTask(name=target, train=parse_facts(train_text), eval=parse_facts(eval_text), gold=gold)


# ---------------------------------------------------------------------------
# entry point + serialization
# ---------------------------------------------------------------------------

_GENERATORS = {
    "predecessor": _gen_predecessor,
    "even": _gen_even,
    "odd": _gen_odd,
    "lessthan": _gen_lessthan,
    "fizz": _gen_fizz,
    "buzz": _gen_buzz,
    "member": _gen_member,
    "length": _gen_length,
    "son": _gen_son,
    "grandparent": _gen_grandparent,
    "relatedness": _gen_relatedness,
    "father": _gen_father,
    "undirected_edge": _gen_undirected_edge,
    "adjacent_to_red": _gen_adjacent_to_red,
    "two_children": _gen_two_children,
    "graph_coloring": _gen_graph_coloring,
    "connectedness": _gen_connectedness,
    "cyclic": _gen_cyclic,
}


def gen_task(spec: TaskSpec):
    """Generate (or load) a task; symbolic names return a SymbolicTask, Kandinsky names a KandinskyDataset."""
    if spec.name in _GENERATORS:
        gen = _GENERATORS[spec.name]
        return gen(spec.size) if spec.size is not None else gen()
    if spec.name in ("husband", "uncle"):
        return _load_kinship_task(spec.name)
    if spec.name.startswith("mnist_sequence"):
        parity = spec.name.removeprefix("mnist_sequence").strip("_") or "even_index"
        return gen_mnist_sequence(spec.size or 12, parity)
    if spec.name in KANDINSKY_TASKS:
        return gen_kandinsky(spec.name, spec.seed)
    raise DatasetError(f"unknown task {spec.name!r}")


def kandinsky_to_jsonl(instances: list[KandinskyInstance]) -> str:
    lines = []
    for inst in instances:
        lines.append(json.dumps({
            "label": inst.label,
            "objects": [{"shape": o.shape, "color": o.color, "jitter": list(o.jitter)} for o in inst.objects],
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def kandinsky_from_jsonl(text: str) -> list[KandinskyInstance]:
    out = []
    for line in filter(None, (l.strip() for l in text.splitlines())):
        rec = json.loads(line)
        out.append(KandinskyInstance(
            label=bool(rec["label"]),
            objects=[ObjectRecord(o["shape"], o["color"], tuple(o["jitter"])) for o in rec["objects"]],
        ))
    return out


def write_embeddings_jsonl(path: str | Path, vectors: dict[str, np.ndarray]) -> None:
    with open(path, "w") as fh:
        for key in sorted(vectors):
            fh.write(json.dumps({"id": key, "vector": [float(v) for v in vectors[key]]}) + "\n")


def read_embeddings_jsonl(path: str | Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    dim = None
    for line in filter(None, (l.strip() for l in Path(path).read_text().splitlines())):
        rec = json.loads(line)
        vec = np.asarray(rec["vector"], dtype=float)
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise DatasetError(f"embedding dim mismatch for id {rec['id']!r}")
        if rec["id"] in out:
            raise DatasetError(f"duplicate embedding id {rec['id']!r}")
        out[rec["id"]] = vec
    return out


def dataset_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()
