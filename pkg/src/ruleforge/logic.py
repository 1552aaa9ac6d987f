"""Symbolic core: terms, atoms, rules, fact parsing, forward chaining and rule scoring.

Everything here is plain Python over hashable value types.  Ground facts are
stored internally as ``(predicate_name, constant_ids...)`` tuples so that the
fixpoint and scoring loops stay cheap even on multi-thousand-constant tables;
the public API speaks :class:`Atom`.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

MAX_RULE_VARS = 6


class LogicError(Exception):
    """Malformed program, fact base, or rule text."""


class EvaluationError(LogicError):
    """Rule scoring was asked for an undefined quantity."""


class PredicateKind(str, enum.Enum):
    KNOWN = "known"
    TARGET = "target"
    PLACEHOLDER = "placeholder"


@dataclass(frozen=True, slots=True)
class PredicateSymbol:
    name: str
    arity: int
    kind: PredicateKind = PredicateKind.KNOWN

    def __post_init__(self) -> None:
        if not self.name:
            raise LogicError("predicate name must be nonempty")
        if self.arity not in (1, 2):
            raise LogicError(f"predicate {self.name!r}: arity must be 1 or 2, got {self.arity}")


@dataclass(frozen=True, slots=True)
class Var:
    """Rule variable, indexed 1..d."""

    index: int


@dataclass(frozen=True, slots=True)
class Const:
    """Constant reference into a ConstantTable."""

    id: int


Term = Var | Const


@dataclass(frozen=True, slots=True)
class Atom:
    pred: PredicateSymbol
    terms: tuple[Term, ...]

    def __post_init__(self) -> None:
        if len(self.terms) != self.pred.arity:
            raise LogicError(f"atom {self.pred.name}: got {len(self.terms)} terms for arity {self.pred.arity}")

    @property
    def is_ground(self) -> bool:
        return all(isinstance(t, Const) for t in self.terms)

    def variables(self) -> tuple[int, ...]:
        return tuple(t.index for t in self.terms if isinstance(t, Var))


@dataclass(frozen=True, slots=True)
class Rule:
    head: Atom
    body: tuple[Atom, ...]

    def variables(self) -> tuple[int, ...]:
        seen: dict[int, None] = {}
        for atom in (self.head, *self.body):
            for v in atom.variables():
                seen.setdefault(v, None)
        return tuple(seen)


@dataclass(frozen=True)
class LogicProgram:
    rules: tuple[Rule, ...]

    @staticmethod
    def of(rules: Iterable[Rule]) -> "LogicProgram":
        return LogicProgram(tuple(rules))


class ConstantTable:
    """Bidirectional constant-name <-> id map; ids assigned by first appearance."""

    def __init__(self) -> None:
        self._names: list[str] = []
        self._ids: dict[str, int] = {}

    def intern(self, name: str) -> int:
        cid = self._ids.get(name)
        if cid is None:
            cid = len(self._names)
            self._ids[name] = cid
            self._names.append(name)
        return cid

    def id_of(self, name: str) -> int:
        return self._ids[name]

    def name_of(self, cid: int) -> str:
        return self._names[cid]

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    def ids(self) -> range:
        return range(len(self._names))

    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    def copy(self) -> "ConstantTable":
        out = ConstantTable()
        for name in self._names:
            out.intern(name)
        return out


@dataclass
class FactBase:
    """An ILP task instance: background facts plus labeled target examples."""

    background: set[Atom]
    positives: set[Atom]
    negatives: set[Atom]
    constants: ConstantTable
    target: PredicateSymbol | None = None
    predicates: dict[str, PredicateSymbol] = field(default_factory=dict)

    def __post_init__(self) -> None:
        overlap = self.positives & self.negatives
        if overlap:
            raise LogicError(f"positive/negative overlap: {sorted(a.pred.name for a in overlap)}")
        for atom in itertools.chain(self.background, self.positives, self.negatives):
            if not atom.is_ground:
                raise LogicError(f"non-ground fact {atom.pred.name}{atom.terms}")
            for t in atom.terms:
                assert isinstance(t, Const)
                if not 0 <= t.id < len(self.constants):
                    raise LogicError(f"unknown constant id {t.id} in {atom.pred.name}")
        if not self.predicates:
            for atom in itertools.chain(self.background, self.positives, self.negatives):
                self.predicates.setdefault(atom.pred.name, atom.pred)

    def binary_relations(self) -> list[PredicateSymbol]:
        return [p for p in self.predicates.values() if p.arity == 2]

    def unary_relations(self) -> list[PredicateSymbol]:
        return [p for p in self.predicates.values() if p.arity == 1]


Interpretation = set[Atom]

# ---------------------------------------------------------------------------
# parsing / serialization
# ---------------------------------------------------------------------------

_FACT_RE = re.compile(r"^([a-z][A-Za-z0-9_]*)\(([^()]*)\)$")
_SECTION_MARKERS = {"#background": "background", "#pos": "pos", "#neg": "neg"}


def parse_facts(text: str, target: str | None = None) -> FactBase:
    """Parse newline-separated ``pred(c1,...,cn).`` clauses into a FactBase.

    Sections are introduced by ``#background`` / ``#pos`` / ``#neg`` markers
    (background is the default); ``%`` starts a comment.  Constant ids are
    assigned by first appearance; duplicate facts dedupe silently.  The target
    predicate is taken from the ``#pos`` section unless given explicitly.
    """
    constants = ConstantTable()
    predicates: dict[str, PredicateSymbol] = {}
    sections: dict[str, set[Atom]] = {"background": set(), "pos": set(), "neg": set()}
    section = "background"
    target_name = target

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if line in _SECTION_MARKERS:
            section = _SECTION_MARKERS[line]
            continue
        # several clauses may share a line
        for clause in filter(None, (c.strip() for c in line.split(".") )):
            m = _FACT_RE.match(clause)
            if m is None:
                col = raw.index(clause.split("(")[0]) + 1 if "(" in clause else 1
                raise LogicError(f"line {lineno}, col {col}: cannot parse clause {clause!r}")
            name, argtext = m.groups()
            args = [a.strip() for a in argtext.split(",")] if argtext.strip() else []
            if not args:
                raise LogicError(f"line {lineno}: {name} has no arguments")
            kind = PredicateKind.TARGET if section in ("pos", "neg") else PredicateKind.KNOWN
            pred = predicates.get(name)
            if pred is None:
                pred = PredicateSymbol(name, len(args), kind)
                predicates[name] = pred
            elif pred.arity != len(args):
                raise LogicError(f"line {lineno}: {name} used with arity {len(args)} but declared {pred.arity}")
            elif kind is PredicateKind.TARGET and pred.kind is not PredicateKind.TARGET:
                pred = PredicateSymbol(name, pred.arity, PredicateKind.TARGET)
                predicates[name] = pred
            atom = Atom(pred, tuple(Const(constants.intern(a)) for a in args))
            sections[section].add(atom)
            if section in ("pos", "neg"):
                if target_name is None:
                    target_name = name
                elif name != target_name:
                    raise LogicError(f"line {lineno}: example predicate {name} != target {target_name}")

    # re-tag atoms whose predicate was promoted to target after first use
    def retag(atoms: set[Atom]) -> set[Atom]:
        return {Atom(predicates[a.pred.name], a.terms) for a in atoms}

    fb = FactBase(
        background=retag(sections["background"]),
        positives=retag(sections["pos"]),
        negatives=retag(sections["neg"]),
        constants=constants,
        target=predicates.get(target_name) if target_name else None,
        predicates=predicates,
    )
    return fb


def serialize_facts(fb: FactBase) -> str:
    """Inverse of parse_facts, stable under round-tripping."""

    def fmt(atom: Atom) -> str:
        args = ",".join(fb.constants.name_of(t.id) for t in atom.terms)  # type: ignore[union-attr]
        return f"{atom.pred.name}({args})."

    lines = ["#background"]
    lines += sorted(fmt(a) for a in fb.background)
    lines.append("#pos")
    lines += sorted(fmt(a) for a in fb.positives)
    lines.append("#neg")
    lines += sorted(fmt(a) for a in fb.negatives)
    return "\n".join(lines) + "\n"


_VAR_NAMES = {"X": 1, "Y": 2, "Z": 3, "W": 4, "U": 5, "T": 6}


def _var_name(index: int) -> str:
    return {1: "X", 2: "Y"}.get(index, f"V{index}")


def _parse_term(tok: str, constants: ConstantTable) -> Term:
    tok = tok.strip()
    if not tok:
        raise LogicError("empty term")
    if tok[0].isupper():
        if tok in _VAR_NAMES:
            return Var(_VAR_NAMES[tok])
        if tok.startswith("V") and tok[1:].isdigit():
            return Var(int(tok[1:]))
        raise LogicError(f"unknown variable name {tok!r} (use X, Y, V3..)")
    return Const(constants.intern(tok))


def _parse_atom(text: str, constants: ConstantTable, predicates: Mapping[str, PredicateSymbol]) -> Atom:
    m = _FACT_RE.match(text.strip())
    if m is None:
        raise LogicError(f"cannot parse atom {text!r}")
    name, argtext = m.groups()
    terms = tuple(_parse_term(t, constants) for t in argtext.split(","))
    pred = predicates.get(name) or PredicateSymbol(name, len(terms))
    if pred.arity != len(terms):
        raise LogicError(f"{name}: arity mismatch")
    return Atom(pred, terms)


def parse_rules(text: str, fb: FactBase) -> LogicProgram:
    """Parse one ``head :- b1, b2`` rule per line against fb's vocabulary."""
    rules = []
    for raw in text.splitlines():
        line = raw.split("%", 1)[0].strip().rstrip(".")
        if not line:
            continue
        if ":-" not in line:
            raise LogicError(f"rule without ':-': {line!r}")
        head_text, body_text = line.split(":-", 1)
        head = _parse_atom(head_text, fb.constants, fb.predicates)
        body_atoms = re.split(r",\s*(?=[a-z])", body_text.strip())
        body = tuple(_parse_atom(b, fb.constants, fb.predicates) for b in body_atoms)
        if not body:
            raise LogicError(f"learned rule needs a nonempty body: {line!r}")
        rules.append(Rule(head, body))
    return LogicProgram.of(rules)


def format_atom(atom: Atom, constants: ConstantTable | None = None) -> str:
    parts = []
    for t in atom.terms:
        if isinstance(t, Var):
            parts.append(_var_name(t.index))
        else:
            parts.append(constants.name_of(t.id) if constants is not None else f"c{t.id}")
    return f"{atom.pred.name}({','.join(parts)})"


def format_rule(rule: Rule, constants: ConstantTable | None = None) -> str:
    body = ", ".join(format_atom(a, constants) for a in rule.body)
    return f"{format_atom(rule.head, constants)} :- {body}"


def serialize_rules(program: LogicProgram, constants: ConstantTable | None = None) -> str:
    return "\n".join(format_rule(r, constants) for r in program.rules) + "\n"


# ---------------------------------------------------------------------------
# forward chaining
# ---------------------------------------------------------------------------

_Fact = tuple  # (pred_name, id1[, id2])


def _to_fact(atom: Atom) -> _Fact:
    return (atom.pred.name, *(t.id for t in atom.terms))  # type: ignore[union-attr]


def _from_fact(fact: _Fact, predicates: Mapping[str, PredicateSymbol]) -> Atom:
    name = fact[0]
    pred = predicates.get(name) or PredicateSymbol(name, len(fact) - 1)
    return Atom(pred, tuple(Const(c) for c in fact[1:]))


class _Store:
    """Ground facts indexed by predicate, with on-demand argument indexes."""

    def __init__(self, facts: Iterable[_Fact]) -> None:
        self.by_pred: dict[str, set[tuple[int, ...]]] = {}
        for f in facts:
            self.by_pred.setdefault(f[0], set()).add(f[1:])
        self._indexes: dict[tuple[str, tuple[int, ...]], dict[tuple[int, ...], list[tuple[int, ...]]]] = {}

    def rows(self, pred: str) -> set[tuple[int, ...]]:
        return self.by_pred.get(pred, set())

    def index(self, pred: str, positions: tuple[int, ...]) -> dict[tuple[int, ...], list[tuple[int, ...]]]:
        key = (pred, positions)
        idx = self._indexes.get(key)
        if idx is None:
            idx = {}
            for row in self.rows(pred):
                idx.setdefault(tuple(row[p] for p in positions), []).append(row)
            self._indexes[key] = idx
        return idx


def _atom_pattern(atom: Atom) -> tuple[str, tuple[tuple[str, int], ...]]:
    slots = []
    for t in atom.terms:
        slots.append(("v", t.index) if isinstance(t, Var) else ("c", t.id))
    return atom.pred.name, tuple(slots)


def _join_bindings(body: Sequence[Atom], store: _Store) -> Iterator[dict[int, int]]:
    """All variable bindings that satisfy every body atom against the store."""
    bindings: list[dict[int, int]] = [{}]
    for atom in body:
        pred, slots = _atom_pattern(atom)
        next_bindings: list[dict[int, int]] = []
        for b in bindings:
            bound_pos = []
            bound_val = []
            free_pos: list[tuple[int, int]] = []  # (row position, var index)
            ok = True
            for pos, (kind, val) in enumerate(slots):
                if kind == "c":
                    bound_pos.append(pos)
                    bound_val.append(val)
                elif val in b:
                    bound_pos.append(pos)
                    bound_val.append(b[val])
                else:
                    free_pos.append((pos, val))
            if not ok:
                continue
            idx = store.index(pred, tuple(bound_pos))
            for row in idx.get(tuple(bound_val), ()):
                nb = dict(b)
                clash = False
                for pos, var in free_pos:
                    if var in nb and nb[var] != row[pos]:
                        clash = True
                        break
                    nb[var] = row[pos]
                if not clash:
                    next_bindings.append(nb)
        bindings = next_bindings
        if not bindings:
            return iter(())
    return iter(bindings)


def _check_rule(rule: Rule) -> None:
    nvars = len(rule.variables())
    if nvars > MAX_RULE_VARS:
        raise LogicError(f"rule has {nvars} variables; engine cap is {MAX_RULE_VARS}")


def tp_step(program: LogicProgram, interp: Interpretation, constants: ConstantTable) -> Interpretation:
    """One application of the immediate consequence operator.

    Returns exactly the heads of ground rule instances whose bodies hold in
    ``interp``; head variables that do not occur in the body range over the
    whole constant table.
    """
    store = _Store(_to_fact(a) for a in interp)
    predicates = {a.pred.name: a.pred for a in interp}
    derived: set[Atom] = set()
    for rule in program.rules:
        _check_rule(rule)
        predicates.setdefault(rule.head.pred.name, rule.head.pred)
        head_pred, head_slots = _atom_pattern(rule.head)
        body_vars = set()
        for a in rule.body:
            body_vars.update(a.variables())
        free_head_vars = [v for (k, v) in head_slots if k == "v" and v not in body_vars]
        for b in _join_bindings(rule.body, store):
            bases: Iterable[dict[int, int]]
            if free_head_vars:
                bases = (
                    {**b, **dict(zip(free_head_vars, combo))}
                    for combo in itertools.product(constants.ids(), repeat=len(free_head_vars))
                )
            else:
                bases = (b,)
            for bb in bases:
                ids = tuple(bb[v] if k == "v" else v for (k, v) in head_slots)
                derived.add(_from_fact((head_pred, *ids), predicates))
    return derived


def tp_fixpoint(program: LogicProgram, base: set[Atom], constants: ConstantTable) -> Interpretation:
    """Least fixpoint of the consequence operator over ``base`` and the program."""
    preds = {a.pred.name: a.pred for a in base}
    for r in program.rules:
        preds.setdefault(r.head.pred.name, r.head.pred)
        for a in r.body:
            preds.setdefault(a.pred.name, a.pred)
    herbrand = sum(len(constants) ** p.arity for p in preds.values())
    current: Interpretation = set(base)
    for _ in range(herbrand + 1):
        new = tp_step(program, current, constants) | base
        if new == current:
            return current
        # T_P is monotone so the frontier only grows
        current |= new
    raise LogicError("fixpoint iteration cap exceeded (non-monotone step?)")


# ---------------------------------------------------------------------------
# rule scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    precision: float | None
    recall: float
    derived_count: int
    precision_counts: tuple[int, int] = (0, 0)  # (numerator, denominator)

    @property
    def precision_defined(self) -> bool:
        return self.precision is not None

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "derived_count": self.derived_count}


def _substitution_counts(rule: Rule, truth: _Store, heads_true: set[tuple[int, ...]], n_constants: int) -> tuple[int, int]:
    """(#bindings with body true and head a true positive, #bindings with body true).

    Bindings range over all rule variables; variables absent from the body are
    free and multiply counts by the constant-table size.
    """
    _check_rule(rule)
    head_pred, head_slots = _atom_pattern(rule.head)
    body_vars = set()
    for a in rule.body:
        body_vars.update(a.variables())
    free_head_vars = [v for (k, v) in head_slots if k == "v" and v not in body_vars]
    all_vars = set(rule.variables())
    n_free_nonhead = len(all_vars - body_vars - set(free_head_vars))
    mult = n_constants**n_free_nonhead

    num = 0
    den = 0
    for b in _join_bindings(rule.body, truth):
        if free_head_vars:
            den += mult * n_constants ** len(free_head_vars)
            for combo in itertools.product(range(n_constants), repeat=len(free_head_vars)):
                bb = {**b, **dict(zip(free_head_vars, combo))}
                ids = tuple(bb[v] if k == "v" else v for (k, v) in head_slots)
                if ids in heads_true:
                    num += mult
        else:
            den += mult
            ids = tuple(b[v] if k == "v" else v for (k, v) in head_slots)
            if ids in heads_true:
                num += mult
    return num, den


def rule_precision(rule: Rule, fb: FactBase) -> tuple[int, int]:
    """Precision counts of one rule against the data itself (background + positives)."""
    truth = _Store(_to_fact(a) for a in itertools.chain(fb.background, fb.positives))
    heads_true = {tuple(t.id for t in a.terms) for a in fb.positives if a.pred.name == rule.head.pred.name}  # type: ignore[union-attr]
    return _substitution_counts(rule, truth, heads_true, len(fb.constants))


def evaluate_rules(program: LogicProgram, fb: FactBase, test_positives: set[Atom]) -> Metrics:
    """Score a program: pooled substitution precision plus fixpoint recall.

    Precision pools, over all rules, the substitutions whose body holds in the
    fixpoint and whose head is a true positive.  Recall is the fraction of
    ``test_positives`` among target atoms of the fixpoint of ``fb.background``
    (seed training positives into the background beforehand when evaluating
    recursive targets).
    """
    if not test_positives:
        raise EvaluationError("recall undefined: empty test positive set")
    fixpoint = tp_fixpoint(program, set(fb.background), fb.constants)
    store = _Store(_to_fact(a) for a in fixpoint)
    head_names = {r.head.pred.name for r in program.rules}
    pos_by_pred: dict[str, set[tuple[int, ...]]] = {}
    for a in fb.positives:
        pos_by_pred.setdefault(a.pred.name, set()).add(tuple(t.id for t in a.terms))  # type: ignore[union-attr]

    num = den = 0
    for rule in program.rules:
        n, d = _substitution_counts(rule, store, pos_by_pred.get(rule.head.pred.name, set()), len(fb.constants))
        num += n
        den += d
    precision = (num / den) if den else None

    derived = {a for a in fixpoint if a.pred.name in head_names}
    recall = len(derived & test_positives) / len(test_positives)
    return Metrics(precision=precision, recall=recall, derived_count=len(derived), precision_counts=(num, den))
