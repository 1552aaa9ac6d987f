"""Interpreting placeholder predicates: evidence retrieval, naming, generalization.

A constrained rule's variables each stand for one cluster, so a placeholder
atom can be explained by the objects its variables represent.  A translator
(live endpoint or the deterministic mock) turns that evidence into a predicate
name and description; generalization merges placeholders that share semantics
and relaxes constrained variables into ordinary ones.  The final rules are
scored directly on instances through their feature semantics.
"""

from __future__ import annotations

import json
import os
import re
import urllib.request
from dataclasses import dataclass, field

import numpy as np

from ruleforge.datasets import KandinskyInstance, ObjectRecord
from ruleforge.logic import Atom

EVIDENCE_CAP = 20

UNARY_QUESTION = "What is the common property of the set of images?"
BINARY_QUESTION = "What is the relation between the two ordered sets of images?"


class InventionError(Exception):
    pass


@dataclass
class ConstrainedRule:
    """Body atoms over constrained variables; the head is the instance class."""

    body: tuple[Atom, ...]

    def placeholders(self) -> list[Atom]:
        return list(self.body)


@dataclass
class ConstrainedLogicProgram:
    rules: list[ConstrainedRule]
    binding: dict[int, int]  # variable index -> cluster index

    def all_atoms(self) -> list[Atom]:
        seen = {}
        for rule in self.rules:
            for atom in rule.body:
                seen.setdefault(atom.pred.name, atom)
        return list(seen.values())


@dataclass
class PlaceholderSemantics:
    atom: Atom
    evidence: list[list[int]]  # per variable position: constant ids (capped)
    prompt: str
    properties: frozenset[str] = frozenset()
    name: str = ""
    description: str = ""
    translated: bool = False


@dataclass
class SemanticsBundle:
    entries: dict[str, PlaceholderSemantics] = field(default_factory=dict)

    def as_json(self) -> str:
        out = []
        for entry in self.entries.values():
            out.append({
                "placeholder": entry.atom.pred.name,
                "evidence": entry.evidence,
                "prompt": entry.prompt,
                "name": entry.name,
                "description": entry.description,
            })
        return json.dumps(out, indent=2)


def retrieve_constants(cluster: int, assignment: dict[int, int]) -> list[int]:
    """All constants whose hard assignment is the given cluster, ascending."""
    members = sorted(c for c, k in assignment.items() if k == cluster)
    if not members:
        raise InventionError(f"constrained variable references empty cluster {cluster}")
    return members


def describe_object(obj: ObjectRecord) -> str:
    return f"{obj.color} {obj.shape}"


def build_prompt(atom: Atom, evidence_desc: list[list[str]]) -> str:
    """Binary atoms ask the relation question over two ordered sets, unary the
    common-property question."""
    if len(evidence_desc) == 2:
        return (
            f"{BINARY_QUESTION}\n"
            f"Set 1 (for the first argument): {', '.join(evidence_desc[0])}\n"
            f"Set 2 (for the second argument): {', '.join(evidence_desc[1])}"
        )
    return f"{UNARY_QUESTION}\nSet: {', '.join(evidence_desc[0])}"


# ---------------------------------------------------------------------------
# feature analysis shared by the mock translator and the rule scorer
# ---------------------------------------------------------------------------


def unary_properties(objs: list[ObjectRecord]) -> frozenset[str]:
    props = set()
    shapes = {o.shape for o in objs}
    colors = {o.color for o in objs}
    if len(shapes) == 1:
        props.add(f"shape={next(iter(shapes))}")
    if len(colors) == 1:
        props.add(f"color={next(iter(colors))}")
    return frozenset(props)


def pair_properties(left: list[ObjectRecord], right: list[ObjectRecord]) -> frozenset[str]:
    pairs = [(a, b) for a in left for b in right]
    props = set()
    if all(a.shape == b.shape for a, b in pairs):
        props.add("same_shape")
    if all(a.shape != b.shape for a, b in pairs):
        props.add("different_shape")
    if all(a.color == b.color for a, b in pairs):
        props.add("same_color")
    if all(a.color != b.color for a, b in pairs):
        props.add("different_color")
    return frozenset(props)


_UNARY_ORDER = ("color", "shape")
_BINARY_ORDER = ("same_shape", "same_color", "different_shape", "different_color")


def name_from_properties(props: frozenset[str], arity: int, fallback_index: int) -> str:
    if not props:
        return f"unknown_relation_{fallback_index}"
    if arity == 1:
        # color takes naming priority; the description still carries everything
        for feature in _UNARY_ORDER:
            for p in sorted(props):
                if p.startswith(feature + "="):
                    return f"{feature}_in_{p.split('=', 1)[1]}"
        return f"unknown_relation_{fallback_index}"
    ordered = [p for p in _BINARY_ORDER if p in props]
    return "_and_".join(ordered) if ordered else f"unknown_relation_{fallback_index}"


def describe_properties(props: frozenset[str], arity: int) -> str:
    if not props:
        return "no shared feature found"
    if arity == 1:
        parts = []
        for p in sorted(props):
            feature, value = p.split("=", 1)
            parts.append(f"{feature} in {value}")
        return ", ".join(parts)
    return ", ".join(p.replace("_", " ") for p in _BINARY_ORDER if p in props)


# ---------------------------------------------------------------------------
# translators
# ---------------------------------------------------------------------------


class MockTranslator:
    """Deterministic stand-in for a live model: majority feature analysis over
    the evidence, answered as a description plus a final snake_case name line."""

    def __call__(self, prompt: str, evidence: list[list[dict]]) -> str:
        sets = [[ObjectRecord(e["shape"], e["color"], (0.0, 0.0)) for e in group] for group in evidence]
        if len(sets) == 2:
            props = pair_properties(sets[0], sets[1])
            arity = 2
        else:
            props = unary_properties(sets[0])
            arity = 1
        name = name_from_properties(props, arity, fallback_index=1)
        return f"{describe_properties(props, arity)}\n{name}"


class HttpTranslator:
    """Text-in/text-out request contract against a configurable endpoint.

    Sends {model, prompt, evidence} as JSON with a bearer token taken from the
    environment; the reply's final snake_case line is the predicate name.
    """

    def __init__(self, url: str, model: str = "default", token_env: str = "RULEFORGE_TRANSLATOR_TOKEN",
                 timeout: float = 30.0) -> None:
        self.url = url
        self.model = model
        self.token_env = token_env
        self.timeout = timeout

    def __call__(self, prompt: str, evidence: list[list[dict]]) -> str:
        payload = json.dumps({"model": self.model, "prompt": prompt, "evidence": evidence}).encode()
        request = urllib.request.Request(self.url, data=payload, headers={
            "Content-Type": "application/json",
            "Authorization": f"Bearer {os.environ.get(self.token_env, '')}",
        })
        with urllib.request.urlopen(request, timeout=self.timeout) as reply:
            return reply.read().decode()


_NAME_LINE = re.compile(r"^[a-z][a-z0-9_]*$")


def parse_translation(text: str) -> tuple[str, str] | None:
    """(name, description) from a translator reply: the final snake_case
    identifier line names the predicate, everything before it describes it."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    for i in range(len(lines) - 1, -1, -1):
        if _NAME_LINE.match(lines[i]):
            return lines[i], " ".join(lines[:i])
    return None


# ---------------------------------------------------------------------------
# bundle assembly and translation
# ---------------------------------------------------------------------------


def build_bundle(
    program: ConstrainedLogicProgram,
    assignment: dict[int, int],
    objects: list[ObjectRecord],
    seed: int = 0,
) -> SemanticsBundle:
    """Evidence and prompts for every placeholder in the program.

    ``objects[i]`` is the object behind constant id i; evidence per variable
    position samples up to the cap from the variable's cluster.
    """
    rng = np.random.default_rng(seed)
    bundle = SemanticsBundle()
    for atom in program.all_atoms():
        evidence = []
        for term in atom.terms:
            cluster = program.binding[term.index]
            members = retrieve_constants(cluster, assignment)
            if len(members) > EVIDENCE_CAP:
                members = sorted(rng.choice(members, size=EVIDENCE_CAP, replace=False).tolist())
            evidence.append(members)
        desc = [[describe_object(objects[c]) for c in group] for group in evidence]
        prompt = build_prompt(atom, desc)
        feature_sets = [[objects[c] for c in group] for group in evidence]
        if atom.pred.arity == 2:
            props = pair_properties(feature_sets[0], feature_sets[1])
        else:
            props = unary_properties(feature_sets[0])
        bundle.entries[atom.pred.name] = PlaceholderSemantics(
            atom=atom, evidence=evidence, prompt=prompt, properties=props
        )
    return bundle


def translate(bundle: SemanticsBundle, translator, objects: list[ObjectRecord]) -> SemanticsBundle:
    """Fill each placeholder's name/description via the translator; failures
    leave the placeholder untranslated and the pipeline keeps its raw name."""
    for key, entry in bundle.entries.items():
        payload = [
            [{"shape": objects[c].shape, "color": objects[c].color} for c in group]
            for group in entry.evidence
        ]
        try:
            reply = translator(entry.prompt, payload)
        except Exception:
            entry.translated = False
            entry.name = entry.atom.pred.name
            entry.description = "translator unavailable"
            continue
        parsed = parse_translation(reply)
        if parsed is None:
            entry.translated = False
            entry.name = entry.atom.pred.name
            entry.description = reply.strip()
        else:
            entry.name, entry.description = parsed
            entry.translated = True
    return bundle


# ---------------------------------------------------------------------------
# generalization
# ---------------------------------------------------------------------------


@dataclass
class NamedPredicate:
    name: str
    arity: int
    properties: frozenset[str]


@dataclass
class GeneralizedRule:
    atoms: list[NamedPredicate]

    def text(self) -> str:
        parts = []
        var = 0
        names = []
        for pred in self.atoms:
            args = []
            for _ in range(pred.arity):
                args.append("XYZWUV"[var % 6] if var < 6 else f"V{var+1}")
                var += 1
            names.append(f"{pred.name}({','.join(args)})")
        return "positive :- " + ", ".join(names)


@dataclass
class GeneralizedProgram:
    rules: list[GeneralizedRule]
    semantics: dict[str, NamedPredicate]

    def text(self) -> str:
        return "\n".join(r.text() for r in self.rules) + ("\n" if self.rules else "")


def generalize_program(program: ConstrainedLogicProgram, bundle: SemanticsBundle) -> GeneralizedProgram:
    """Merge placeholders that share semantics and relax variables.

    Same-name placeholders always merge.  When several distinct names of one
    arity remain but their evidence properties share a nonempty intersection,
    the shared part becomes the predicate (this is what turns `red square' and
    `red circle or triangle' placeholders into one color predicate).
    """
    named: dict[str, NamedPredicate] = {}
    rename: dict[str, str] = {}
    for key, entry in bundle.entries.items():
        name = entry.name or entry.atom.pred.name
        rename[key] = name
        prior = named.get(name)
        if prior is None:
            named[name] = NamedPredicate(name, entry.atom.pred.arity, entry.properties)
        else:
            # same-name placeholders mean their shared semantics, not the union
            named[name] = NamedPredicate(name, prior.arity, prior.properties & entry.properties)

    for arity in (1, 2):
        group = [p for p in named.values() if p.arity == arity and p.properties]
        translated_names = {p.name for p in group}
        if len(translated_names) > 1:
            shared = frozenset.intersection(*(p.properties for p in group))
            if shared:
                merged_name = name_from_properties(shared, arity, fallback_index=arity)
                merged = NamedPredicate(merged_name, arity, shared)
                for p in group:
                    rename.update({k: merged_name for k, v in rename.items() if v == p.name})
                    named.pop(p.name, None)
                named[merged_name] = merged

    out_rules = []
    seen = set()
    for rule in program.rules:
        atoms = [named[rename[a.pred.name]] for a in rule.body]
        key = tuple(sorted(a.name for a in atoms))
        if key in seen:
            continue
        seen.add(key)
        out_rules.append(GeneralizedRule(atoms=atoms))
    return GeneralizedProgram(rules=out_rules, semantics=named)


# ---------------------------------------------------------------------------
# instance-level scoring
# ---------------------------------------------------------------------------


def _object_satisfies(pred: NamedPredicate, obj: ObjectRecord) -> bool:
    for prop in pred.properties:
        feature, value = prop.split("=", 1)
        if getattr(obj, feature) != value:
            return False
    return True


def _pair_satisfies(pred: NamedPredicate, a: ObjectRecord, b: ObjectRecord) -> bool:
    checks = {
        "same_shape": a.shape == b.shape,
        "different_shape": a.shape != b.shape,
        "same_color": a.color == b.color,
        "different_color": a.color != b.color,
    }
    return all(checks[p] for p in pred.properties if p in checks) and all(
        p in checks or _feature_pair(p, a, b) for p in pred.properties
    )


def _feature_pair(prop: str, a: ObjectRecord, b: ObjectRecord) -> bool:
    feature, value = prop.split("=", 1)
    return getattr(a, feature) == value and getattr(b, feature) == value


def rule_holds(rule: GeneralizedRule, instance: KandinskyInstance) -> bool:
    """Some assignment of the rule's variables to the instance's objects
    satisfies every atom."""
    for pred in rule.atoms:
        if not pred.properties:
            raise InventionError(f"predicate {pred.name} has no usable semantics")

    objs = instance.objects

    def satisfy(atoms: list[NamedPredicate]) -> bool:
        if not atoms:
            return True
        head, rest = atoms[0], atoms[1:]
        if head.arity == 1:
            return any(_object_satisfies(head, o) and satisfy(rest) for o in objs)
        return any(
            _pair_satisfies(head, a, b) and satisfy(rest) for a in objs for b in objs if a is not b
        )

    return satisfy(rule.atoms)


@dataclass(frozen=True)
class InstanceMetrics:
    precision: float | None
    recall: float
    accuracy: float


def evaluate_invented(program: GeneralizedProgram, instances: list[KandinskyInstance]) -> InstanceMetrics:
    """Instance-level precision/recall/accuracy of the generalized program."""
    tp = fp = fn = tn = 0
    for inst in instances:
        predicted = any(rule_holds(r, inst) for r in program.rules)
        if predicted and inst.label:
            tp += 1
        elif predicted:
            fp += 1
        elif inst.label:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if (tp + fp) else None
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    accuracy = (tp + tn) / len(instances)
    return InstanceMetrics(precision=precision, recall=recall, accuracy=accuracy)
